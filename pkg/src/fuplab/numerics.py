"""Localization norms: DFT submatrices, the log-phase FIO on thickened sets, and decay fits."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import ConvergenceError, ResolutionError, ValidationError
from .geometry import DyadicSet, IFSSpec, build_cantor
from .porosity import exact_distance
from .weights import bump

DENSE_MAX = 4096          # exact SVD up to this many rows/columns
FIO_NODE_MAX = 8192       # materialized Nystrom matrices beyond DENSE_MAX use power iteration
POWER_TOL = 1e-8
POWER_MAXITER = 20000
REFINE_TOL = 0.02
PHASES = ("euclidean-fourier", "hyperbolic-log", "circle-model")
CHI_KINDS = ("bump", "one", "zero")


# ----------------------------------------------------------------- series containers

@dataclass
class NormPoint:
    scale: float           # N for DFT series, h for FIO series
    h: float
    norm: float
    method: str
    iterations: int = 0
    residual: float = 0.0


@dataclass
class NormSeries:
    points: list
    x_id: str = ""
    y_id: str = ""

    def __post_init__(self):
        hs = [p.h for p in self.points]
        if any(b >= a for a, b in zip(hs, hs[1:])):
            raise ValidationError("h must decrease strictly along a series")

    @property
    def hs(self) -> np.ndarray:
        return np.array([p.h for p in self.points])

    @property
    def norms(self) -> np.ndarray:
        return np.array([p.norm for p in self.points])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scale", "norm", "method", "residual"])
        for p in self.points:
            w.writerow([repr(p.scale), repr(p.norm), p.method, repr(p.residual)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"x_id": self.x_id, "y_id": self.y_id, "points": [asdict(p) for p in self.points]}


@dataclass
class ExponentFit:
    beta: float
    log_C: float
    r2: float
    residuals: list
    max_residual: float

    def to_dict(self) -> dict:
        return asdict(self)


def fit_exponent(series) -> ExponentFit:
    """Least squares of -log(norm) against log(1/h); the slope is the empirical exponent."""
    if isinstance(series, NormSeries):
        hs, norms = series.hs, series.norms
    else:
        hs, norms = (np.asarray(a, float) for a in series)
    if len(hs) < 4:
        raise ValidationError("an exponent fit needs at least 4 points")
    if np.any(norms <= 0) or np.any(hs <= 0):
        raise ValidationError("degenerate fit: norms and h must be positive")
    x = np.log(1 / hs)
    y = -np.log(norms)
    A = np.stack([x, np.ones_like(x)], axis=1)
    (beta, c), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - (beta * x + c)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if sst == 0 else 1.0 - float(np.sum(res ** 2)) / sst
    return ExponentFit(float(beta), float(-c), r2, res.tolist(), float(np.max(np.abs(res))))


# ----------------------------------------------------------------- dense / iterative norms

def _top_singular(A) -> float:
    if A.size == 0:
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[0])


def power_norm(apply, apply_adj, n, tol=POWER_TOL, maxiter=POWER_MAXITER, seed=0):
    """Largest singular value by power iteration on A*A; returns (sigma, iterations, residual)."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    res = np.inf
    for it in range(1, maxiter + 1):
        w = apply_adj(apply(v))
        lam = float(np.vdot(v, w).real)
        if lam <= 0:
            return 0.0, it, 0.0
        res = float(np.linalg.norm(w - lam * v)) / lam
        v = w / np.linalg.norm(w)
        if res <= tol:
            return math.sqrt(lam), it, res
    raise ConvergenceError(f"power iteration stalled at residual {res:.3e} after {maxiter} steps")


def _as_index_array(X, N, d):
    X = np.asarray(X, dtype=np.int64)
    if X.size == 0:
        return X.reshape(0, d)
    X = X.reshape(-1, d) if d > 1 or X.ndim == 2 else X.reshape(-1, 1)
    if X.shape[1] != d:
        raise ValidationError(f"indices must have {d} coordinates")
    if X.min() < 0 or X.max() >= N:
        raise ValidationError(f"indices must lie in [0, {N})")
    return X


def dft_submatrix_detail(N: int, X, Y, d: int = 1, method: str = "auto"):
    """(norm, method, iterations, residual) for the X-by-Y block of the unitary N-point DFT."""
    if not isinstance(N, (int, np.integer)) or N <= 0:
        raise ValidationError("N must be a positive integer")
    if d not in (1, 2):
        raise ValidationError("d must be 1 or 2")
    X = _as_index_array(X, N, d)
    Y = _as_index_array(Y, N, d)
    if len(X) == 0 or len(Y) == 0:
        return 0.0, "empty", 0, 0.0
    if method == "auto":
        method = "exact-svd" if max(len(X), len(Y)) <= DENSE_MAX else "power-iteration"
    if method == "exact-svd":
        ph = (X @ Y.T) % N
        A = np.exp(-2j * np.pi * ph / N) / N ** (d / 2)
        return _top_singular(A), method, 0, 0.0
    if method != "power-iteration":
        raise ValidationError(f"unknown method {method!r}")
    shape = (N,) * d
    xi, yi = tuple(X.T), tuple(Y.T)

    def apply(v):
        f = np.zeros(shape, complex)
        f[yi] = v
        return np.fft.fftn(f, norm="ortho")[xi]

    def apply_adj(u):
        f = np.zeros(shape, complex)
        f[xi] = u
        return np.fft.ifftn(f, norm="ortho")[yi]

    s, it, res = power_norm(apply, apply_adj, len(Y))
    return s, method, it, res


def dft_submatrix_norm(N: int, X, Y, d: int = 1, method: str = "auto") -> float:
    """Largest singular value of the X-by-Y block of the unitary N-point (tensor) DFT."""
    return dft_submatrix_detail(N, X, Y, d, method)[0]


# ----------------------------------------------------------------- lattice set ladders

@dataclass(frozen=True)
class LatticeSetSpec:
    """Index sets X(N), Y(N) in [0,N)^d generated consistently along a ladder of N.

    kinds: ``cantor`` (digits of N = base^n restricted to ``kept``, X = Y), ``full``,
    ``orthogonal-lines`` (d = 2, X = {(j, 0)}, Y = {(0, k)}).
    """
    kind: str
    d: int = 1
    base: int = 3
    kept: tuple = ((0, 2),)

    def __post_init__(self):
        if self.kind not in ("cantor", "full", "orthogonal-lines"):
            raise ValidationError(f"unknown set kind {self.kind!r}")
        if self.d not in (1, 2):
            raise ValidationError("d must be 1 or 2")
        if self.kind == "orthogonal-lines" and self.d != 2:
            raise ValidationError("orthogonal lines need d = 2")
        if self.kind == "cantor":
            kept = tuple(tuple(k) for k in self.kept)
            if len(kept) == 1 and self.d == 2:
                kept = kept * 2
            object.__setattr__(self, "kept", kept)
            IFSSpec(self.base, kept, 0)

    @property
    def ident(self) -> str:
        if self.kind == "cantor":
            return f"cantor(base={self.base},kept={list(map(list, self.kept))},d={self.d})"
        return f"{self.kind}(d={self.d})"

    def depth(self, N: int) -> int:
        n = round(math.log(N) / math.log(self.base))
        if self.base ** n != N:
            raise ValidationError(f"inconsistent ladder: N={N} is not a power of {self.base}")
        return n

    def sets(self, N: int):
        if self.kind == "cantor":
            X = build_cantor(IFSSpec(self.base, self.kept, self.depth(N))).cells
            return X, X
        if self.kind == "full":
            g = np.stack(np.meshgrid(*[np.arange(N)] * self.d, indexing="ij"), -1)
            X = g.reshape(-1, self.d)
            return X, X
        j = np.arange(N)
        z = np.zeros(N, dtype=np.int64)
        return np.stack([j, z], 1), np.stack([z, j], 1)

    @classmethod
    def from_dict(cls, obj: dict) -> "LatticeSetSpec":
        kept = obj.get("kept", ((0, 2),))
        if kept and isinstance(kept[0], (int, np.integer)):
            kept = (tuple(kept),)
        return cls(obj["kind"], int(obj.get("d", 1)), int(obj.get("base", 3)),
                   tuple(tuple(k) for k in kept))


def fup_decay_series(spec: LatticeSetSpec, scales, method: str = "auto") -> NormSeries:
    """Norms of 1_X F 1_Y along a ladder of N (h = 1/N)."""
    scales = [int(N) for N in scales]
    if len(scales) == 0:
        raise ValidationError("empty ladder")
    if any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValidationError("inconsistent ladder: N must increase strictly")
    pts = []
    for N in scales:
        X, Y = spec.sets(N)
        s, m, it, res = dft_submatrix_detail(N, X, Y, spec.d, method)
        pts.append(NormPoint(N, 1.0 / N, s, m, it, res))
    return NormSeries(pts, spec.ident, spec.ident)


# ----------------------------------------------------------------- FIO kernels

@dataclass(frozen=True)
class FIOSpec:
    """Phase, cutoff and thickening for B(h)f(x) = (2 pi h)^(-d/2) int e^{i Phi/h} chi f.

    ``chi = "bump"`` is the radial bump in |x - x'| supported on ``chi_support``.
    """
    phase: str = "hyperbolic-log"
    chi: str = "bump"
    chi_support: tuple = (0.3, 8.0)
    rho: float = 0.9
    C1: float = 1.0

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValidationError(f"unknown phase {self.phase!r}")
        if self.chi not in CHI_KINDS:
            raise ValidationError(f"unknown cutoff {self.chi!r}")
        a, b = self.chi_support
        if not 0 <= a < b:
            raise ValidationError("cutoff support needs 0 <= a < b")
        if self.phase != "euclidean-fourier" and self.chi != "zero" and (self.chi == "one" or a <= 0):
            raise ValidationError("the log phase needs a cutoff supported away from the diagonal")
        if not 0.75 < self.rho < 1:
            raise ValidationError("rho must lie in (3/4, 1)")
        if self.C1 <= 0:
            raise ValidationError("C1 must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Circle:
    radius: float = 1.0
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValidationError("radius must be positive")


def cutoff(spec: FIOSpec, R):
    R = np.asarray(R, float)
    if spec.chi == "zero":
        return np.zeros_like(R)
    if spec.chi == "one":
        return np.ones_like(R)
    a, b = spec.chi_support
    return bump((2 * R - a - b) / (b - a))


def phase(spec: FIOSpec, x, xp):
    """Phase at point pairs; x, xp have shape (..., d)."""
    x = np.asarray(x, float)
    xp = np.asarray(xp, float)
    if spec.phase == "euclidean-fourier":
        return -np.sum(x * xp, axis=-1)
    R2 = np.sum((x - xp) ** 2, axis=-1)
    with np.errstate(divide="ignore"):
        return (math.log(4) + np.log(R2)
                - np.log1p(np.sum(x ** 2, axis=-1)) - np.log1p(np.sum(xp ** 2, axis=-1)))


def fio_matrix(spec: FIOSpec, nodes, weights, h: float, nodes_in=None, weights_in=None):
    """Nystrom matrix sqrt(w_i) K(x_i, x'_j) sqrt(w_j) with K = (2 pi h)^(-d/2) chi e^{i Phi/h}."""
    nodes = np.asarray(nodes, float)
    nodes_in = nodes if nodes_in is None else np.asarray(nodes_in, float)
    weights = np.asarray(weights, float)
    weights_in = weights if weights_in is None else np.asarray(weights_in, float)
    d = nodes.shape[1]
    x = nodes[:, None, :]
    xp = nodes_in[None, :, :]
    R = np.sqrt(np.sum((x - xp) ** 2, axis=-1))
    chi = cutoff(spec, R)
    K = np.zeros(R.shape, complex)
    m = chi > 0
    if spec.phase == "euclidean-fourier":
        K[m] = chi[m] * np.exp(1j * phase(spec, x, xp)[m] / h)
    else:
        ph = phase(spec, np.broadcast_to(x, R.shape + (d,))[m], np.broadcast_to(xp, R.shape + (d,))[m])
        K[m] = chi[m] * np.exp(1j * ph / h)
    K *= (2 * math.pi * h) ** (-d / 2)
    return np.sqrt(weights)[:, None] * K * np.sqrt(weights_in)[None, :]


def _matrix_norm(A):
    n = max(A.shape)
    if n <= DENSE_MAX:
        return _top_singular(A), "exact-svd", 0, 0.0
    s, it, res = power_norm(lambda v: A @ v, lambda u: A.conj().T @ u, A.shape[1])
    return s, "power-iteration", it, res


# ----------------------------------------------------------------- circle: polar Nystrom grid

def polar_grid(circle: Circle, eps: float, spacing: float):
    """Midpoint polar grid of the annulus |r - radius| <= eps with both spacings <= spacing.

    Returns radii, the angle count M (even) and the exact sector areas per radius.
    """
    if not 0 < eps < circle.radius:
        raise ValidationError("thickening must be smaller than the radius")
    nr = max(1, math.ceil(2 * eps / spacing - 1e-9))
    dr = 2 * eps / nr
    r = circle.radius - eps + dr * (np.arange(nr) + 0.5)
    M = math.ceil(2 * math.pi * (circle.radius + eps) / spacing - 1e-9)
    M += M % 2
    area = r * dr * (2 * math.pi / M)
    return r, M, area


def polar_nodes(circle: Circle, eps: float, spacing: float):
    """Explicit nodes and weights of the polar grid (for dense cross-checks)."""
    r, M, area = polar_grid(circle, eps, spacing)
    th = 2 * math.pi * np.arange(M) / M
    rr, tt = np.meshgrid(r, th, indexing="ij")
    pts = np.stack([rr * np.cos(tt), rr * np.sin(tt)], -1).reshape(-1, 2) + np.asarray(circle.center)
    return pts, np.repeat(area, M)


def _polar_row(spec, r, i, cos_t, sin_t, h):
    """Kernel K(r_i e_0, r_j e_theta) for j >= i and theta_m = 2 pi m / M, m <= M/2."""
    j = np.arange(i, len(r))
    x = np.array([r[i], 0.0])
    xp = np.stack([r[j, None] * cos_t[None, :], r[j, None] * sin_t[None, :]], -1)
    R = np.sqrt(np.sum((xp - x) ** 2, axis=-1))
    chi = cutoff(spec, R)
    K = np.zeros(R.shape, complex)
    m = chi > 0
    K[m] = chi[m] * np.exp(1j * phase(spec, np.broadcast_to(x, xp.shape)[m], xp[m]) / h)
    return j, K * (2 * math.pi * h) ** -1


def _polar_norm(spec: FIOSpec, circle: Circle, h: float, spacing: float):
    """Norm of the Nystrom matrix on the polar grid by its block-circulant structure.

    Rotations about the circle's center permute the grid, and kernel, cutoff and phase depend
    on the angle difference only (up to unimodular factors of one point, which leave singular
    values unchanged), so the angular DFT splits the matrix into blocks B_q of size nr x nr.
    The kernel is even in the angle, hence B_q = B_{-q} and a type-I DCT over m <= M/2 suffices.
    Modes outside the stationary-phase band are kept only if their Frobenius norm could
    exceed the best singular value found.
    """
    eps = spec.C1 * h ** spec.rho
    r, M, area = polar_grid(Circle(circle.radius), eps, spacing)
    nr = len(r)
    half = M // 2
    th = 2 * math.pi * np.arange(half + 1) / M
    cos_t, sin_t = np.cos(th), np.sin(th)
    sw = np.sqrt(area)

    def transformed(i):
        j, K = _polar_row(spec, r, i, cos_t, sin_t, h)
        return j, K, sfft.dct(K, type=1, axis=1) * (sw[i] * sw[j])[:, None]

    # mode q resonates with q = (phase step per angle step) * M / (2 pi); sample a few rows
    slope = 0.0
    for i in sorted({0, nr // 2, nr - 1}):
        _, K = _polar_row(spec, r, i, cos_t, sin_t, h)
        ok = (np.abs(K[:, 1:]) > 0) & (np.abs(K[:, :-1]) > 0)
        if ok.any():
            slope = max(slope, float(np.abs(np.angle(K[:, 1:] * np.conj(K[:, :-1])))[ok].max()))
    band = min(half, int(math.ceil(1.5 * slope * M / (2 * math.pi))) + 32)
    frob = np.zeros(half + 1)
    rows = []
    for i in range(nr):
        j, _, F = transformed(i)
        mult = np.where(j == i, 1.0, 2.0)
        frob += np.sum(mult[:, None] * np.abs(F) ** 2, axis=0)
        rows.append(F[:, :band + 1].copy())
    frob = np.sqrt(frob)

    def blocks(cols, qs):
        B = np.zeros((len(qs), nr, nr), np.complex128)
        for i, F in enumerate(cols):
            col = F[:, qs].T
            B[:, i, i:] = col
            B[:, i:, i] = col
        return B

    def best_of(cols, qs, labels, best):
        order = np.argsort(-frob[labels])
        for k in range(0, len(order), 2048):
            chunk = order[k:k + 2048]
            chunk = chunk[frob[labels[chunk]] > best]
            if not len(chunk):
                break
            sv = np.linalg.svd(blocks(cols, qs[chunk]), compute_uv=False)
            best = max(best, float(sv[:, 0].max()))
        return best

    qs = np.arange(band + 1)
    best = best_of(rows, qs, qs, 0.0)
    del rows
    tail = np.arange(band + 1, half + 1)
    tail = tail[frob[tail] > best]
    if len(tail):
        cols = [transformed(i)[2][:, tail] for i in range(nr)]
        best = best_of(cols, np.arange(len(tail)), tail, best)
    return best, nr * M


def _circle_model_norm(spec: FIOSpec, circle: Circle, h: float, spacing: float):
    """1D operator (2 pi h)^(-1/2) int_circle e^{i Phi/h} chi f ds on the circle itself (circulant)."""
    M = math.ceil(2 * math.pi * circle.radius / spacing - 1e-9)
    M += M % 2
    th = 2 * math.pi * np.arange(M) / M
    x = np.array([circle.radius, 0.0])
    xp = circle.radius * np.stack([np.cos(th), np.sin(th)], -1)
    R = np.linalg.norm(xp - x, axis=1)
    chi = cutoff(spec, R)
    K = np.zeros(M, complex)
    m = chi > 0
    K[m] = chi[m] * np.exp(1j * phase(spec, np.broadcast_to(x, xp.shape)[m], xp[m]) / h)
    ds = circle.radius * 2 * math.pi / M
    eig = np.fft.fft(K * ds * (2 * math.pi * h) ** -0.5)
    return float(np.abs(eig).max()), M


# ----------------------------------------------------------------- dyadic sets: Cartesian grid

def _cartesian_nodes(X: DyadicSet, eps: float, spacing: float):
    """Fine-grid centers inside the frame within distance eps of the cell union."""
    k = max(0, math.ceil(math.log2(X.side / spacing) - 1e-12))
    n = 2 ** k
    if n ** X.d > 1 << 24:
        raise ValidationError("quadrature grid too large; use a larger h or a smaller frame")
    sp = X.side / n
    axis = X.lower[0] + sp * (np.arange(n) + 0.5), X.lower[-1] + sp * (np.arange(n) + 0.5)
    grids = np.meshgrid(*[axis[a] for a in range(X.d)], indexing="ij")
    pts = np.stack(grids, -1).reshape(-1, X.d)
    keep = exact_distance(X, pts, 2 * eps + sp) <= eps
    return pts[keep], sp, keep.reshape((n,) * X.d)


def _cartesian_norm(spec: FIOSpec, X: DyadicSet, h: float, spacing: float):
    eps = spec.C1 * h ** spec.rho
    pts, sp, mask = _cartesian_nodes(X, eps, spacing)
    if len(pts) == 0:
        return 0.0, 0, "empty"
    if spec.phase == "euclidean-fourier" and spec.chi == "one" and X.d == 2:
        rows, cols = mask.any(1), mask.any(0)
        if np.array_equal(mask, np.outer(rows, cols)):
            # separable kernel on a product node set: the matrix is a Kronecker product
            n = mask.shape[0]
            ax = X.lower[0] + sp * (np.arange(n) + 0.5)
            ay = X.lower[1] + sp * (np.arange(n) + 0.5)
            one = []
            for a in (ax[rows], ay[cols]):
                one.append(fio_matrix(spec, a[:, None], np.full(len(a), sp), h))
            return _top_singular(one[0]) * _top_singular(one[1]), len(pts), "kronecker-svd"
    if len(pts) > FIO_NODE_MAX:
        raise ValidationError(f"{len(pts)} quadrature nodes exceed the dense budget {FIO_NODE_MAX}")
    A = fio_matrix(spec, pts, np.full(len(pts), sp ** X.d), h)
    s, method, _, _ = _matrix_norm(A)
    return s, len(pts), method


# ----------------------------------------------------------------- public FIO entry points

@dataclass
class FIONorm:
    norm: float
    refined: float
    rel_change: float
    spacing: float
    nodes: int
    method: str
    h: float = 0.0
    extra: dict = field(default_factory=dict)

    def __float__(self):
        return self.norm

    def to_dict(self) -> dict:
        return asdict(self)


def _single(spec, X, h, spacing):
    if spec.chi == "zero":
        return 0.0, 0, "zero-cutoff"
    if spec.phase == "circle-model":
        if not isinstance(X, Circle):
            raise ValidationError("the circle model lives on a Circle")
        s, n = _circle_model_norm(spec, X, h, spacing)
        return s, n, "circulant-fft"
    if isinstance(X, Circle):
        s, n = _polar_norm(spec, X, h, spacing)
        return s, n, "polar-block-svd"
    if isinstance(X, DyadicSet):
        return _cartesian_norm(spec, X, h, spacing)
    raise ValidationError("X must be a DyadicSet or a Circle")


def fio_norm(spec: FIOSpec, X, h: float, spacing: float | None = None, check: bool = True,
             detail: bool = False):
    """||1_{X(C1 h^rho)} B(h) 1_{X(C1 h^rho)}|| by Nystrom discretization on a grid of spacing <= h/8.

    With ``check`` the grid is halved once and a relative change above 2% raises ResolutionError.
    """
    if not 0 < h < 0.01:
        raise ValidationError("h must lie in (0, 1/100)")
    spacing = h / 8 if spacing is None else float(spacing)
    if spacing > h / 8 * (1 + 1e-12):
        raise ValidationError("quadrature spacing must be <= h/8")
    s, n, method = _single(spec, X, h, spacing)
    refined, rel = s, 0.0
    if check and s > 0:
        refined = _single(spec, X, h, spacing / 2)[0]
        rel = abs(refined - s) / s
        if rel >= REFINE_TOL:
            raise ResolutionError(f"grid refinement moved the norm by {rel:.2%} at h={h:g} "
                                  f"(spacing {spacing:g}: {s:.6g}, {spacing / 2:g}: {refined:.6g})")
    out = FIONorm(s, refined, rel, spacing, n, method, h)
    return out if detail else s


def fio_decay_series(spec: FIOSpec, X, hs, check: bool = True) -> NormSeries:
    """FIO norms along decreasing h; the residual column records the refinement change."""
    pts = []
    for h in hs:
        r = fio_norm(spec, X, float(h), check=check, detail=True)
        pts.append(NormPoint(float(h), float(h), r.norm, r.method, r.nodes, r.rel_change))
    name = repr(X) if isinstance(X, Circle) else f"DyadicSet(d={X.d}, cells={len(X)})"
    return NormSeries(pts, name, name)


# ----------------------------------------------------------------- phase Hessian

def phase_hessian(spec: FIOSpec, x, xp):
    """Mixed Hessian d^2 Phi / dx dx' at point pairs, shape (..., d, d).

    Closed forms: (2/R^2)(-I + 2 v v^T) with R = |x - x'|, v = (x - x')/R for the log phase,
    -I for the bilinear phase; ``phase_hessian_fd`` gives central differences for any phase.
    """
    x = np.atleast_2d(np.asarray(x, float))
    xp = np.atleast_2d(np.asarray(xp, float))
    if spec.phase in ("hyperbolic-log", "circle-model"):
        diff = x - xp
        R2 = np.sum(diff ** 2, axis=-1)
        v = diff / np.sqrt(R2)[:, None]
        I = np.eye(x.shape[1])
        return (2 / R2)[:, None, None] * (-I + 2 * v[:, :, None] * v[:, None, :])
    return np.broadcast_to(-np.eye(x.shape[1]), (len(x), x.shape[1], x.shape[1])).copy()


def phase_hessian_fd(spec: FIOSpec, x, xp, step: float = 1e-4):
    x = np.atleast_2d(np.asarray(x, float))
    xp = np.atleast_2d(np.asarray(xp, float))
    d = x.shape[1]
    H = np.zeros((len(x), d, d))
    E = np.eye(d) * step
    for a in range(d):
        for b in range(d):
            H[:, a, b] = (phase(spec, x + E[a], xp + E[b]) - phase(spec, x + E[a], xp - E[b])
                          - phase(spec, x - E[a], xp + E[b]) + phase(spec, x - E[a], xp - E[b])) / (4 * step ** 2)
    return H


def annulus_pairs(r_min: float, r_max: float, n_base: int = 12, n_radii: int = 6, n_angles: int = 16,
                  box: float = 5.0, seed: int = 0):
    """Point pairs (x, x') with r_min <= |x - x'| <= r_max, x spread over [-box, box]^2."""
    if not 0 < r_min <= r_max:
        raise ValidationError("need 0 < r_min <= r_max")
    rng = np.random.default_rng(seed)
    base = rng.uniform(-box, box, (n_base, 2))
    rad = np.geomspace(r_min, r_max, n_radii)
    ang = 2 * math.pi * np.arange(n_angles) / n_angles
    off = (rad[:, None, None] * np.stack([np.cos(ang), np.sin(ang)], -1)[None]).reshape(-1, 2)
    x = np.repeat(base, len(off), axis=0)
    return x, x + np.tile(off, (n_base, 1))


def phase_hessian_stats(spec: FIOSpec, x, xp):
    """(sup ||d^2 Phi/dx dx'||, sup s_max/s_min) over the given point pairs."""
    x = np.atleast_2d(np.asarray(x, float))
    xp = np.atleast_2d(np.asarray(xp, float))
    R = np.linalg.norm(x - xp, axis=1)
    if spec.phase != "euclidean-fourier" and np.any(R <= 1e-9 * max(1.0, float(np.abs(x).max()))):
        raise ValidationError("grid touches the diagonal, where the log phase is singular")
    sv = np.linalg.svd(phase_hessian(spec, x, xp), compute_uv=False)
    if np.any(sv[:, -1] <= 0):
        raise ValidationError("degenerate mixed Hessian on the grid")
    return float(sv[:, 0].max()), float((sv[:, 0] / sv[:, -1]).max())
