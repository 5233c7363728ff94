"""Dyadic weight construction and numerical checks of its regularity, growth and damping bounds."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from .constants import gamma_exponent
from .errors import ConvergenceError, ValidationError

S_EXP = 0.2
BUMP_ID = "exp(1-1/(1-|u|^2)) at u = 2(x-c)/W"
K0_RULES = ("paper", "mu")


# ----------------------------------------------------------------- bump profile

def _g(t, order=0):
    """Derivatives of g(t) = exp(1 - 1/(1 - t)) on t < 1, zero elsewhere."""
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    m = t < 1
    s = 1.0 / (1.0 - t[m])
    g = np.exp(1.0 - s)
    if order == 0:
        out[m] = g
    elif order == 1:
        out[m] = -s ** 2 * g
    elif order == 2:
        out[m] = g * (s ** 4 - 2 * s ** 3)
    elif order == 3:
        out[m] = g * (-s ** 6 + 6 * s ** 5 - 6 * s ** 4)
    else:
        raise ValidationError("bump derivatives are implemented up to order 3")
    return out


def bump(u):
    """Radial mollifier profile exp(1 - 1/(1 - |u|^2)), equal to 1 at the origin."""
    u = np.asarray(u, float)
    return _g(u ** 2)


def bump_derivative(u, axes=()):
    """D^axes of eta(u) = g(|u|^2) for u of shape (n, d); ``axes`` lists derivative directions."""
    u = np.atleast_2d(np.asarray(u, float))
    t = np.sum(u ** 2, axis=1)
    a = len(axes)
    if a == 0:
        return _g(t)
    if a == 1:
        (i,) = axes
        return 2 * u[:, i] * _g(t, 1)
    if a == 2:
        i, j = axes
        return 4 * u[:, i] * u[:, j] * _g(t, 2) + 2 * (i == j) * _g(t, 1)
    if a == 3:
        i, j, k = axes
        sym = (i == j) * u[:, k] + (i == k) * u[:, j] + (j == k) * u[:, i]
        return 8 * u[:, i] * u[:, j] * u[:, k] * _g(t, 3) + 4 * sym * _g(t, 2)
    raise ValidationError("unsupported derivative order (max 3)")


# ----------------------------------------------------------------- construction

def W(k) -> float:
    return 2.0 ** k / k ** S_EXP


def choose_k0(mu_scale: float, d: int, rule: str = "paper") -> int:
    """Smallest k0 >= 2 with W_k0 > mu/(2 sqrt d) and, under the ``paper`` rule, k0^s > 10d."""
    if rule not in K0_RULES:
        raise ValidationError(f"k0 rule must be one of {K0_RULES}")
    k = 2
    if rule == "paper":
        k = max(k, math.floor((10 * d) ** (1 / S_EXP)) + 1)
        while k ** S_EXP <= 10 * d:
            k += 1
    target = math.log2(mu_scale / (2 * math.sqrt(d)))
    while k - S_EXP * math.log2(k) <= target:
        k += 1
    return k


def alpha_band(nu, C_d=1.0):
    """Admissible (lo, hi) for alpha: alpha > 1 - gamma/10 with gamma the line-porosity exponent."""
    gamma = gamma_exponent(nu, 1, C_d)[0]
    return 1 - 0.1 * gamma, 1.0


@dataclass
class AnnulusRecord:
    k: int
    W: float
    cubes: np.ndarray          # integer a with Q = prod (W a_j/3, W(a_j/3 + 1))
    n_points: int

    def centers(self) -> np.ndarray:
        return self.W * (self.cubes / 3 + 0.5)

    def to_dict(self) -> dict:
        return {"k": self.k, "W": self.W, "n_points": self.n_points, "cubes": self.cubes.tolist()}


@dataclass
class WeightField:
    d: int
    alpha: float
    k0: int
    mu_scale: float
    h: float
    nu: float
    k0_rule: str
    annuli: list
    s: float = S_EXP
    bump_id: str = BUMP_ID
    empty: bool = False
    C_d: float = 1.0
    _keys: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for rec in self.annuli:
            self._keys[rec.k] = _encode(rec.cubes)

    @property
    def gamma(self) -> float:
        return gamma_exponent(self.nu, 1, self.C_d)[0]

    def height(self, k) -> float:
        return 2.0 ** k / k ** self.alpha

    def support_radii(self):
        """(inner, outer) radius of the support of omega; (inf, 0) when omega vanishes."""
        lo, hi = math.inf, 0.0
        for rec in self.annuli:
            r = np.linalg.norm(rec.centers(), axis=1)
            lo = min(lo, float(r.min()) - rec.W / 2)
            hi = max(hi, float(r.max()) + rec.W / 2)
        return max(lo, 0.0), hi

    def invariants(self) -> dict:
        inner, _ = self.support_radii()
        slab = all(_meets_slab(rec) for rec in self.annuli)
        return {
            "W_k0 > mu/(2 sqrt d)": self.k0 - self.s * math.log2(self.k0)
            > math.log2(self.mu_scale / (2 * math.sqrt(self.d))),
            "k0^s > 10d": self.k0 ** self.s > 10 * self.d,
            "cubes meet slab 2^(k-1) <= |x| <= 2^(k+2)": slab,
            "omega = 0 on |x| <= 2^(k0-1)": not self.annuli or math.log2(max(inner, 1e-300)) >= self.k0 - 1,
        }

    def to_dict(self) -> dict:
        return {"d": self.d, "s": self.s, "alpha": self.alpha, "k0": self.k0, "k0_rule": self.k0_rule,
                "mu_scale": self.mu_scale, "h": self.h, "nu": self.nu, "C_d": self.C_d,
                "bump": self.bump_id, "empty": self.empty,
                "annuli": [rec.to_dict() for rec in self.annuli]}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, obj: dict) -> "WeightField":
        annuli = [AnnulusRecord(int(a["k"]), float(a["W"]),
                                np.asarray(a["cubes"], dtype=np.int64).reshape(-1, obj["d"]),
                                int(a["n_points"])) for a in obj["annuli"]]
        return cls(obj["d"], obj["alpha"], obj["k0"], obj["mu_scale"], obj["h"], obj["nu"],
                   obj["k0_rule"], annuli, obj.get("s", S_EXP), obj.get("bump", BUMP_ID),
                   obj.get("empty", False), obj.get("C_d", 1.0))


def _encode(cubes: np.ndarray) -> np.ndarray:
    """Sorted int64 keys of integer cube indices (|a_j| < 2^20)."""
    if len(cubes) == 0:
        return np.zeros(0, dtype=np.int64)
    c = cubes.astype(np.int64) + (1 << 20)
    key = np.zeros(len(c), dtype=np.int64)
    for j in range(c.shape[1]):
        key = (key << 21) | c[:, j]
    return np.sort(key)


def _meets_slab(rec: AnnulusRecord) -> bool:
    lo = rec.W * rec.cubes / 3
    hi = lo + rec.W
    near = np.linalg.norm(np.maximum(np.maximum(lo, -hi), 0), axis=1)
    far = np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi)), axis=1)
    return bool(np.all((near <= 2.0 ** (rec.k + 2)) & (far >= 2.0 ** (rec.k - 1))))


def annulus_of(points, k) -> np.ndarray:
    r = np.linalg.norm(points, axis=1)
    return (r >= 2.0 ** k) & (r <= 2.0 ** (k + 1))


def cubes_containing(points, Wk) -> np.ndarray:
    """All integer a with W a/3 < y < W(a/3 + 1) coordinatewise, for each point (deduplicated)."""
    t = 3 * np.asarray(points, float) / Wk
    d = t.shape[1]
    base = np.floor(t).astype(np.int64)
    out = []
    for off in itertools.product((-2, -1, 0), repeat=d):
        a = base + np.asarray(off)
        ok = np.all((a < t) & (t < a + 3), axis=1)
        out.append(a[ok])
    cubes = np.concatenate(out) if out else np.zeros((0, d), np.int64)
    return np.unique(cubes, axis=0) if len(cubes) else cubes.reshape(0, d)


def build_weight(Y, nu: float, mu_scale: float, h: float, alpha: float | None = None,
                 k0: int | None = None, k0_rule: str = "paper", C_d: float = 1.0) -> WeightField:
    """omega = sum_k -(2^k / k^alpha) sum_{Q in S_{Y,k}} eta_Q over annuli A_k = {2^k <= |x| <= 2^(k+1)}.

    S_{Y,k} are the cubes of side W_k = 2^k/k^s on the stride-W_k/3 lattice that contain a point
    of Y in A_k; eta_Q(x) = eta(2(x - c_Q)/W_k) is supported in the inscribed ball of Q.
    """
    Y = np.atleast_2d(np.asarray(Y, float))
    if Y.size == 0:
        Y = Y.reshape(0, Y.shape[-1] if Y.ndim == 2 and Y.shape[-1] else 1)
    d = Y.shape[1]
    if d not in (1, 2):
        raise ValidationError("weights are built in dimension 1 or 2")
    if not 0 < nu < 1 / 3:
        raise ValidationError("nu must lie in (0, 1/3)")
    if not mu_scale > 1:
        raise ValidationError("mu_scale must exceed 1")
    if not 0 < h < 0.01:
        raise ValidationError("h must lie in (0, 1/100)")
    lo, hi = alpha_band(nu, C_d)
    if alpha is None:
        alpha = (lo + hi) / 2
    if not lo < alpha < hi:
        raise ValidationError(f"alpha={alpha} outside the admissible band ({lo}, {hi})")
    if len(Y) and np.abs(Y).max() > 3 / h * (1 + 1e-12):
        raise ValidationError("Y must lie in [-3/h, 3/h]^d")
    if k0 is None:
        k0 = choose_k0(mu_scale, d, k0_rule)
    else:
        k0_rule = "explicit"
        if k0 < 2:
            raise ValidationError("k0 must be >= 2")
    annuli = []
    if len(Y):
        rmax = float(np.linalg.norm(Y, axis=1).max())
        k = k0
        while rmax > 0 and k <= math.log2(rmax):
            inA = annulus_of(Y, k)
            if inA.any():
                Wk = W(k)
                annuli.append(AnnulusRecord(k, Wk, cubes_containing(Y[inA], Wk), int(inA.sum())))
            k += 1
    return WeightField(d, float(alpha), int(k0), float(mu_scale), float(h), float(nu), k0_rule,
                       annuli, empty=len(Y) == 0, C_d=C_d)


# ----------------------------------------------------------------- evaluation

def eval_weight(field: WeightField, x, axes=()) -> np.ndarray:
    """D^axes omega at points x (shape (n, d)); only annuli whose cubes can reach x contribute."""
    if len(axes) > 3:
        raise ValidationError("unsupported derivative order (max 3)")
    x = np.atleast_2d(np.asarray(x, float))
    if x.shape[1] != field.d:
        raise ValidationError(f"points must have {field.d} coordinates")
    if any(not 0 <= a < field.d for a in axes):
        raise ValidationError("derivative axis out of range")
    out = np.zeros(len(x))
    r = np.linalg.norm(x, axis=1)
    for rec in field.annuli:
        # |x| within reach of a cube meeting A_k (cube diameter W sqrt d)
        reach = rec.W * math.sqrt(field.d)
        near = np.flatnonzero((r >= 2.0 ** rec.k - reach) & (r <= 2.0 ** (rec.k + 1) + reach))
        if not len(near):
            continue
        xs = x[near]
        t = 3 * xs / rec.W
        base = np.floor(t).astype(np.int64)
        keys = field._keys[rec.k]
        acc = np.zeros(len(near))
        for off in itertools.product((-2, -1, 0), repeat=field.d):
            a = base + np.asarray(off)
            enc = _encode_unsorted(a)
            pos = np.searchsorted(keys, enc)
            hit = (pos < len(keys)) & (keys[np.minimum(pos, len(keys) - 1)] == enc)
            if not hit.any():
                continue
            c = rec.W * (a[hit] / 3 + 0.5)
            u = 2 * (xs[hit] - c) / rec.W
            acc[hit] += bump_derivative(u, axes) * (2 / rec.W) ** len(axes)
        out[near] -= field.height(rec.k) * acc
    return out


def _encode_unsorted(a: np.ndarray) -> np.ndarray:
    c = a.astype(np.int64) + (1 << 20)
    key = np.zeros(len(c), dtype=np.int64)
    for j in range(c.shape[1]):
        key = (key << 21) | c[:, j]
    return key


def partition_sum(k: int, x, d: int | None = None) -> np.ndarray:
    """sum over the full lattice family Q_k of eta_Q(x)."""
    x = np.atleast_2d(np.asarray(x, float))
    Wk = W(k)
    t = 3 * x / Wk
    base = np.floor(t).astype(np.int64)
    acc = np.zeros(len(x))
    for off in itertools.product(range(-3, 2), repeat=x.shape[1]):
        a = base + np.asarray(off)
        acc += bump(np.linalg.norm(2 * (x - Wk * (a / 3 + 0.5)) / Wk, axis=1))
    return acc


def multi_indices(d: int, order: int):
    return list(itertools.combinations_with_replacement(range(d), order))


# ----------------------------------------------------------------- hypothesis checks

def damping_constant(mu_scale: float, C_d: float = 1.0, variant: str = "simple") -> float:
    """C(mu, d): mu + C_d, or the log-improved mu / (C_d (log mu)^0.7)."""
    if variant == "simple":
        return mu_scale + C_d
    if variant == "log":
        return mu_scale / (C_d * math.log(mu_scale) ** 0.7)
    raise ValidationError("variant must be 'simple' or 'log'")


@dataclass
class HypothesisReport:
    C_reg: float
    C_reg_by_order: list
    C_gr: float
    C_gr_refinements: list
    tail_envelope: float
    G_envelope_C: float
    damping_slack: float
    damping_constant: float
    vacuous: bool
    samples_per_annulus: int
    n_directions: int
    ladder: list = field(default_factory=list)
    G_star: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def to_csv(self) -> str:
        rows = ["r,G_star"] + [f"{r!r},{g!r}" for r, g in zip(self.ladder, self.G_star)]
        return "\n".join(rows) + "\n"


def _sample_points(field: WeightField, rec: AnnulusRecord, n: int, rng) -> np.ndarray:
    """Random points in selected cubes plus points on the annulus boundaries toward cube centers."""
    c = rec.centers()
    pick = c[rng.integers(len(c), size=n)]
    pts = pick + rng.uniform(-0.5, 0.5, (n, field.d)) * rec.W
    dirs = c[rng.integers(len(c), size=max(8, n // 10))]
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    rad = rng.choice([2.0 ** rec.k, 2.0 ** (rec.k + 1), 2.0 ** (rec.k - 1), 2.0 ** (rec.k + 2)], len(dirs))
    return np.concatenate([pts, dirs * rad[:, None]])


def regularity_constant(field: WeightField, budget: int = 10_000, seed: int = 0):
    """max over samples of |D^a omega(x)| / <x>^(1-a), a = 0..3 (max over multi-indices)."""
    rng = np.random.default_rng(seed)
    by_order = [0.0] * 4
    for rec in field.annuli:
        pts = _sample_points(field, rec, budget, rng)
        jac = np.sqrt(1 + np.sum(pts ** 2, axis=1))
        for a in range(4):
            worst = np.zeros(len(pts))
            for ax in multi_indices(field.d, a):
                worst = np.maximum(worst, np.abs(eval_weight(field, pts, ax)))
            by_order[a] = max(by_order[a], float(np.max(worst / jac ** (1 - a))))
    return max(by_order), by_order


def _directions(d: int, n: int) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    th = 2 * math.pi * np.arange(n) / n
    return np.stack([np.cos(th), np.sin(th)], 1)


def _ray_breaks(field: WeightField, u: np.ndarray) -> np.ndarray:
    """Ray parameters where the ray t u enters or leaves a bump support."""
    out = [0.0]
    for rec in field.annuli:
        c = rec.centers()
        p = c @ u
        q2 = np.sum(c ** 2, axis=1) - p ** 2
        rad2 = (rec.W / 2) ** 2 - q2
        ok = rad2 > 0
        half = np.sqrt(rad2[ok])
        out.extend((p[ok] - half).tolist())
        out.extend((p[ok] + half).tolist())
    b = np.unique(np.clip(out, 0, None))
    return b


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _gauss(f, a, b):
    """16-point Gauss-Legendre on each interval [a_i, b_i]; f takes a flat array of nodes."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    half = (b - a) / 2
    t = (a + b)[:, None] / 2 + half[:, None] * _GL_X
    return half * (f(t.ravel()).reshape(t.shape) @ _GL_W)


def adaptive_pieces(f, a, b, tol: float = 1e-4, max_depth: int = 30):
    """Integrals of f over each [a_i, b_i] by vectorized adaptive bisection of Gauss rules.

    A piece is accepted when its value agrees with the sum over its halves to ``tol`` relative
    (absolute floor tol * 1e-6 of the total mass).
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    out = np.zeros(len(a))
    owner = np.arange(len(a))
    whole = _gauss(f, a, b)
    floor = tol * 1e-6 * max(float(np.abs(whole).sum()), 1e-300)
    for _ in range(max_depth):
        if not len(a):
            return out
        m = (a + b) / 2
        halves = _gauss(f, np.concatenate([a, m]), np.concatenate([m, b]))
        n = len(a)
        fine = halves[:n] + halves[n:]
        ok = np.abs(fine - whole) <= np.maximum(tol * np.abs(fine), floor)
        np.add.at(out, owner[ok], fine[ok])
        bad = ~ok
        a, m, b, owner = a[bad], m[bad], b[bad], owner[bad]
        whole = np.concatenate([halves[:n][bad], halves[n:][bad]])
        a, b, owner = np.concatenate([a, m]), np.concatenate([m, b]), np.concatenate([owner, owner])
    worst = int(np.argmax(b - a))
    raise ConvergenceError(f"quadrature did not converge on [{a[worst]:.6g}, {b[worst]:.6g}]")


def ray_cumulative(field: WeightField, u, tol: float = 1e-4):
    """Breakpoints t_i and F(t_i) = int_0^t_i |omega(t u)| dt; omega is smooth between breakpoints."""
    u = np.asarray(u, float)
    b = _ray_breaks(field, u)
    f = lambda t: -eval_weight(field, t[:, None] * u)
    pieces = adaptive_pieces(f, b[:-1], b[1:], tol)
    return b, np.concatenate([[0.0], np.cumsum(pieces)])


def _F_at(b, F, field, u, t):
    """F at arbitrary ray parameters: cumulative value at the breakpoint below plus one piece."""
    t = np.asarray(t, float)
    i = np.clip(np.searchsorted(b, t, side="right") - 1, 0, len(b) - 1)
    out = F[i].copy()
    part = t > b[i]
    inner = part & (i < len(b) - 1)
    if inner.any():
        f = lambda s: -eval_weight(field, s[:, None] * u)
        out[inner] += adaptive_pieces(f, b[i[inner]], t[inner])
    return out


def G_star(field: WeightField, radii, n_directions: int = 360):
    """G*(r) = sup over directions of (1/r) int_{r/2}^{2r} |omega(t u)| dt."""
    radii = np.asarray(radii, float)
    out = np.zeros(len(radii))
    if not field.annuli:
        return out
    for u in _directions(field.d, n_directions):
        b, F = ray_cumulative(field, u)
        if F[-1] == 0:
            continue
        live = (2 * radii > b[0]) & (radii / 2 < b[-1])
        if not live.any():
            continue
        r = radii[live]
        g = (_F_at(b, F, field, u, 2 * r) - _F_at(b, F, field, u, r / 2)) / r
        out[live] = np.maximum(out[live], g)
    return out


def growth_integral(field: WeightField, n_directions: int = 360, base_points: int = 16,
                    max_rounds: int = 6, rtol: float = 0.01):
    """int G*(r)/(1+r^2) dr over a geometric ladder covering the support, doubled until stable.

    Returns (value, successive values, ladder, G* on the ladder).
    """
    if not field.annuli:
        return 0.0, [0.0], [], []
    inner, outer = field.support_radii()
    a, b = max(inner / 2, 1e-9), 2 * outer
    vals = []
    cache = {}
    for rnd in range(max_rounds):
        n = base_points * 2 ** rnd + 1
        ladder = np.geomspace(a, b, n)
        need = [r for r in ladder if r not in cache]
        if need:
            for r, g in zip(need, G_star(field, need, n_directions)):
                cache[r] = g
        g = np.array([cache[r] for r in ladder])
        # trapezoid in log r: dr = r dlog r
        y = g / (1 + ladder ** 2) * ladder
        vals.append(float(np.trapezoid(y, np.log(ladder))))
        if len(vals) >= 2 and abs(vals[-1] - vals[-2]) <= rtol * max(abs(vals[-1]), 1e-300):
            return vals[-1], vals, ladder.tolist(), g.tolist()
    raise ConvergenceError(f"growth integral not stable within {rtol:.0%}: {vals}")


def verify_hypotheses(field: WeightField, Y, budget: int = 10_000, n_directions: int = 360,
                      seed: int = 0, variant: str = "simple") -> HypothesisReport:
    """Sampled regularity constant, growth integral and damping slack on Y."""
    Y = np.atleast_2d(np.asarray(Y, float))
    Cmu = damping_constant(field.mu_scale, field.C_d, variant)
    if not field.annuli:
        slack = -math.inf
        if Y.size:
            r = np.linalg.norm(Y, axis=1)
            slack = float(np.max(eval_weight(field, Y) + r / (20 * np.log(2 + r) ** field.alpha))) - Cmu
        return HypothesisReport(0.0, [0.0] * 4, 0.0, [0.0], 0.0, 0.0, slack, Cmu, True, budget,
                                n_directions)
    C_reg, by_order = regularity_constant(field, budget, seed)
    C_gr, rounds, ladder, gstar = growth_integral(field, n_directions)
    p = field.alpha + field.s * field.gamma
    lad = np.asarray(ladder)
    env = lad / np.log(2 + lad) ** p
    C_env = float(np.max(np.asarray(gstar) / env))
    # int_{r_end}^inf C r / (log(2 + r))^p / (1 + r^2) dr <= C / ((p - 1) (log r_end)^(p - 1))
    tail = C_env / ((p - 1) * math.log(lad[-1]) ** (p - 1))
    r = np.linalg.norm(Y, axis=1)
    slack = float(np.max(eval_weight(field, Y) + r / (20 * np.log(2 + r) ** field.alpha))) - Cmu
    return HypothesisReport(C_reg, by_order, C_gr, rounds, tail, C_env, slack, Cmu, False, budget,
                            n_directions, ladder, gstar)


def finite_difference_check(field: WeightField, x, order: int, axes=None):
    """Max over multi-indices of max|FD - D^order omega| / max|D^order omega| on the points x.

    The difference quotient is a central difference of the analytic D^(order-1) omega with
    step 1e-6 W_k, where truncation and roundoff errors are both near 1e-9.
    """
    if order not in (1, 2, 3):
        raise ValidationError("order must be 1, 2 or 3")
    x = np.atleast_2d(np.asarray(x, float))
    r = np.linalg.norm(x, axis=1)
    k = np.clip(np.floor(np.log2(np.maximum(r, 4.0))), 2, None)
    step = 1e-6 * 2.0 ** k / k ** field.s
    worst = 0.0
    for ax in (axes or multi_indices(field.d, order)):
        e = np.zeros(field.d)
        e[ax[-1]] = 1
        lower = ax[:-1]
        fd = (eval_weight(field, x + step[:, None] * e, lower)
              - eval_weight(field, x - step[:, None] * e, lower)) / (2 * step)
        exact = eval_weight(field, x, ax)
        scale = np.abs(exact).max()
        if scale == 0:
            if np.abs(fd).max() > 0:
                return math.inf
            continue
        worst = max(worst, float(np.abs(fd - exact).max() / scale))
    return worst


def line_slice_mass(field: WeightField, k: int, point, direction) -> float:
    """Length of the line point + t*direction inside the union of selected (open) cubes of annulus k."""
    rec = next((r for r in field.annuli if r.k == k), None)
    if rec is None:
        return 0.0
    p = np.asarray(point, float)
    u = np.asarray(direction, float)
    u = u / np.linalg.norm(u)
    lo = rec.W * rec.cubes / 3
    hi = lo + rec.W
    t0 = np.full(len(lo), -np.inf)
    t1 = np.full(len(lo), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for j in range(field.d):
            if u[j] == 0:
                inside = (p[j] > lo[:, j]) & (p[j] < hi[:, j])
                t0 = np.where(inside, t0, np.inf)
                continue
            a = (lo[:, j] - p[j]) / u[j]
            b = (hi[:, j] - p[j]) / u[j]
            t0 = np.maximum(t0, np.minimum(a, b))
            t1 = np.minimum(t1, np.maximum(a, b))
    ok = t0 < t1
    if not ok.any():
        return 0.0
    iv = sorted(zip(t0[ok], t1[ok]))
    total, cur0, cur1 = 0.0, iv[0][0], iv[0][1]
    for a, b in iv[1:]:
        if a > cur1:
            total += cur1 - cur0
            cur0, cur1 = a, b
        else:
            cur1 = max(cur1, b)
    return total + cur1 - cur0


def _boxes_meet(lo_a, w_a, lo_b, w_b) -> np.ndarray:
    """For each box in a, whether it overlaps some box in b (open boxes)."""
    from scipy.spatial import cKDTree
    ca = lo_a + w_a / 2
    cb = lo_b + w_b / 2
    if not len(cb):
        return np.zeros(len(ca), bool)
    tree = cKDTree(cb)
    out = np.zeros(len(ca), bool)
    for i, nb in enumerate(tree.query_ball_point(ca, (w_a + w_b) / 2, p=np.inf)):
        out[i] = bool(nb)
    return out


def scaling_overlap(coarse: WeightField, fine: WeightField, shift: int = 1) -> float:
    """Cube-set overlap between annulus k of ``coarse`` and annulus k+shift of ``fine`` scaled by 1/2^shift.

    Each cube counts as matched when it meets a cube of the other family; the result is the
    matched fraction over both families together.
    """
    matched = total = 0
    other = {r.k: r for r in fine.annuli}
    for rec in coarse.annuli:
        lo_a = rec.W * rec.cubes / 3
        twin = other.get(rec.k + shift)
        if twin is None:
            total += len(lo_a)
            continue
        lo_b = twin.W * twin.cubes / 3 / 2 ** shift
        wb = twin.W / 2 ** shift
        matched += int(_boxes_meet(lo_a, rec.W, lo_b, wb).sum()) + int(_boxes_meet(lo_b, wb, lo_a, rec.W).sum())
        total += len(lo_a) + len(lo_b)
    ks = {r.k + shift for r in coarse.annuli}
    total += sum(len(r.cubes) for r in fine.annuli if r.k not in ks)
    return matched / total if total else 1.0


def cantor_sample(depth: int, h: float, d: int = 2) -> np.ndarray:
    """Cell centers of the middle-thirds product set in [-1,1]^d scaled into [-3/h, 3/h]^d."""
    from .geometry import middle_thirds
    return middle_thirds(depth, d=d).cell_centers() * 3 / h
