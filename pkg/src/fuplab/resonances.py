"""Resonances of Fuchsian hyperbolic 3-manifolds from the spectrum of the base surface."""
from __future__ import annotations

import cmath
import math
import csv
import io
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.integrate import solve_ivp

from .errors import FuplabError, ValidationError

DEMO_SPECTRUM = (0.0, 0.15, 0.25, 1.0, 2.0, 3.75, 6.25, 10.0)
LAMBDA_TOL = 1e-12


@dataclass(frozen=True)
class SurfaceSpectrum:
    values: tuple
    source: str = "user-supplied"

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValidationError("spectrum must contain at least the zero eigenvalue")
        if any(v < 0 for v in vals):
            raise ValidationError("Laplace eigenvalues must be nonnegative")
        if vals[0] != 0:
            raise ValidationError("the first eigenvalue must be 0")
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise ValidationError("spectrum must be nondecreasing")
        if len(vals) > 1 and vals[1] == 0:
            raise ValidationError("only the first eigenvalue may vanish")
        object.__setattr__(self, "values", vals)

    @classmethod
    def demo(cls):
        return cls(DEMO_SPECTRUM, "demo")


@dataclass(frozen=True)
class Resonance:
    k: int
    n: int
    branch: int  # +1 / -1 for s^{+-}, 0 for the k = 0 pole
    mu: float
    s: complex
    lam: complex
    bucket: str  # trivial | low-lying | regular


@dataclass
class ResonanceTable:
    spectrum: SurfaceSpectrum
    n_max: int
    entries: list = field(default_factory=list)

    def gap_statistic(self):
        vals = [e.s.real for e in self.entries if e.bucket != "trivial"]
        return max(vals) if vals else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "n", "re_s", "im_s", "re_lambda", "im_lambda", "bucket"])
        for e in self.entries:
            w.writerow([e.k, e.n, repr(e.s.real), repr(e.s.imag), repr(e.lam.real),
                        repr(e.lam.imag), e.bucket])
        return buf.getvalue()


def _lambda_candidates(mu, n):
    root = cmath.sqrt(mu - 0.25)
    return [root - 1j * (n + 0.5), -root - 1j * (n + 0.5)]


def fuchsian_resonances(spec: SurfaceSpectrum, n_max: int) -> ResonanceTable:
    """All s^{+-}_{k,n} = 1/2 - n +- sqrt(1/4 - mu_k) for n <= n_max, plus s = 1 for k = 0."""
    if n_max < 0:
        raise ValidationError("n_max must be >= 0")
    table = ResonanceTable(spec, n_max)
    table.entries.append(Resonance(0, 0, 0, 0.0, 1 + 0j, 0j, "trivial"))
    for k, mu in enumerate(spec.values[1:], start=1):
        r = cmath.sqrt(0.25 - mu)
        branches = (1,) if r == 0 else (1, -1)
        for n in range(n_max + 1):
            for b in branches:
                s = 0.5 - n + b * r
                lam = 1j * (s - 1)
                # independent route through the lambda formula
                err = min(abs(lam - c) for c in _lambda_candidates(mu, n))
                if err > LAMBDA_TOL:
                    raise FuplabError(f"lambda mismatch {err:.3e} at k={k}, n={n}")
                low = n == 0 and b == 1 and 0 < mu < 0.25
                table.entries.append(Resonance(k, n, b, mu, complex(s), complex(lam),
                                               "low-lying" if low else "regular"))
    return table


@dataclass
class GapReport:
    gap: float | None
    violators: list
    low_lying: list
    max_re_s_all: float | None
    gap_with_low_lying: float | None

    def to_dict(self):
        pick = lambda es: [{"k": e.k, "n": e.n, "s": [e.s.real, e.s.imag]} for e in es]
        return {"gap": self.gap, "violators": pick(self.violators),
                "low_lying": pick(self.low_lying), "max_re_s": self.max_re_s_all,
                "gap_counting_low_lying": self.gap_with_low_lying}


def essential_gap(table: ResonanceTable, tol: float = 1e-12) -> GapReport:
    """1/2 - max Re s over regular entries; low-lying n=0 poles reported on their own."""
    if not table.entries:
        raise ValidationError("empty resonance table")
    regular = [e for e in table.entries if e.bucket == "regular"]
    low = [e for e in table.entries if e.bucket == "low-lying"]
    violators = [e for e in regular if e.s.real > 0.5 + tol]
    top = max((e.s.real for e in regular), default=None)
    top_all = max((e.s.real for e in regular + low), default=None)
    return GapReport(None if top is None else 0.5 - top, violators, low, top_all,
                     None if top_all is None else 0.5 - top_all)


def poschl_teller_oracle(mu: float, s) -> complex:
    """Inverse transmission coefficient of -d^2/dt^2 + mu sech^2 t at lambda = i(s-1).

    Equal to Gamma(s) Gamma(s-1) / (Gamma(s-1/2+r) Gamma(s-1/2-r)) with r = sqrt(1/4-mu);
    it vanishes exactly at the resonances and is identically 1 when mu = 0.
    """
    if mu < 0:
        raise ValidationError("mu must be >= 0")
    with mpmath.workdps(30):
        s = mpmath.mpc(s)
        r = mpmath.sqrt(mpmath.mpf(0.25) - mu)
        # gammaprod cancels coincident poles and returns inf at surviving ones
        val = mpmath.gammaprod([s, s - 1], [s - 0.5 + r, s - 0.5 - r])
    return complex(val) if mpmath.isfinite(val) else complex(math.inf, 0)


def poschl_teller_ode(mu: float, s, T: float = 20.0, rtol: float = 1e-10) -> complex:
    """Same quantity by integrating the Jost solution across [-T, T] and taking a Wronskian."""
    lam = 1j * (complex(s) - 1)
    if lam == 0:
        raise ValidationError("the ODE route needs lambda != 0")

    def rhs(t, y):
        v = mu / np.cosh(t) ** 2
        return [y[1], (v - lam * lam) * y[0]]

    y0 = [np.exp(1j * lam * T), -1j * lam * np.exp(1j * lam * T)]  # e^{-i lam t} at t = -T
    sol = solve_ivp(rhs, (-T, T), np.asarray(y0, dtype=complex), method="DOP853",
                    rtol=rtol, atol=1e-14 * abs(y0[0]))
    if not sol.success:
        raise FuplabError(f"ODE integration failed: {sol.message}")
    f, fp = sol.y[0, -1], sol.y[1, -1]
    # f_+ = e^{i lam t};  W(f_-, f_+) = 2 i lam a(lam)
    fplus, fplus_p = np.exp(1j * lam * T), 1j * lam * np.exp(1j * lam * T)
    return complex((f * fplus_p - fp * fplus) / (2j * lam))
