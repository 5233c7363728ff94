"""Explicit constant chains: porosity -> damping -> FUP exponent -> spectral gap."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import mpmath

from .errors import InconsistencyError, ValidationError
from .loglog import PREC, LogLogReal, exp_or_zero, mpf

C3_STAR_DEFAULT = 0.01


def _check_nu(nu):
    if not (0 < nu < 1 / 3):
        raise ValidationError(f"porosity nu={nu} must satisfy ν ∈ (0,1/3)")


def _check_unit(name, x):
    if not (0 < x < 1):
        raise ValidationError(f"{name}={x} must lie in (0,1)")


def beta_fup(nu, d=1, C_d=1.0) -> LogLogReal:
    """FUP exponent as a tower: ln(-ln beta) = (C_d nu^-2 ln(1/nu))^(C_d nu^-1 ln(1/nu)).

    ``d`` enters only through the caller's choice of ``C_d``.
    """
    _check_nu(nu)
    return beta_tower(nu, C_d)


def beta_tower(nu, C_d=1.0) -> LogLogReal:
    """The same tower for any nu in (0,1), without the porosity range check."""
    if not 0 < nu < 1:
        raise ValidationError("nu must lie in (0,1)")
    if C_d < 1:
        raise ValidationError("C_d must be >= 1")
    with mpmath.workprec(PREC):
        nu = mpf(nu)
        lg = mpmath.log(1 / nu)
        base = C_d * lg / nu ** 2
        expo = C_d * lg / nu
        T = mpmath.exp(expo * mpmath.log(base))
    return LogLogReal("loglog", T, 1, True)


def log_neg_log_beta(beta: LogLogReal):
    """ln(-ln beta) for beta in (0,1) as an mpf (may carry a huge exponent)."""
    return beta.loglog_abs()


@dataclass
class HanSchlagResult:
    R1: LogLogReal
    R1_terms: list
    C_star: LogLogReal
    T0: LogLogReal
    T: LogLogReal
    gamma0: LogLogReal
    beta: LogLogReal
    L: int


def han_schlag_beta(L, c1, c2, c3, alpha, d=1, C_d=1.0, C_phi=1.0, c_phi=1.0, T=None,
                    c3_star=C3_STAR_DEFAULT, enforce_T0=True) -> HanSchlagResult:
    """Box-porosity plus l1-damping exponent, every step kept in log space.

    ``T`` is raised to the admissible minimum T0 when smaller, unless ``enforce_T0`` is off.
    """
    if int(L) != L or L < 3:
        raise ValidationError("L must be an integer >= 3")
    for name, x in (("c1", c1), ("c2", c2), ("c3", c3), ("alpha", alpha)):
        _check_unit(name, x)
    if not c3 < c3_star:
        raise ValidationError(f"c3={c3} must be below the threshold c3*={c3_star}")
    if C_phi <= 0 or c_phi <= 0:
        raise ValidationError("C_phi and c_phi must be positive")
    with mpmath.workprec(PREC):
        c1, c2, c3, alpha, C_d, C_phi, c_phi = map(mpf, (c1, c2, c3, alpha, C_d, C_phi, c_phi))
        q = 1 / (1 - alpha)
        lnL = mpmath.log(L)
        # natural logs of the six candidates for R1
        terms = [
            2 * mpmath.log(2 * d / c3),
            (16 * mpmath.pi * C_d / c3) ** q,
            mpmath.mpf(4) ** q,
            8 * (d * mpmath.log(d * abs(mpmath.log(c1))) - mpmath.log(c3)),
            2 * mpmath.log(4 * mpmath.log(2 * C_d / c2 ** 2)),
            4 * mpmath.log(8 * d),
        ]
        lnR1 = max(terms)
        # ln(1+R1) and ln(R1+2) without materializing R1 when it is huge
        ln1pR1 = lnR1 + mpmath.log1p(exp_or_zero(-lnR1))
        lnR1p2 = lnR1 + mpmath.log1p(2 * exp_or_zero(-lnR1))
        lnlnC = mpmath.log(c3 / 2) + lnR1p2 - alpha * mpmath.log(ln1pR1)
        C_star = LogLogReal("loglog", lnlnC).normalized()
        lnC = mpmath.exp(lnlnC)
        # T0 = ceil(ln(2 Cp C*^2 + sqrt(4 Cp^2 C*^4 + cp^2)) / ln L)
        lnCp = mpmath.log(C_phi)
        eps_ln = 2 * mpmath.log(c_phi) - 2 * lnCp - 4 * lnC
        eps = exp_or_zero(eps_ln)
        num = lnCp + 2 * lnC + mpmath.log(2 + mpmath.sqrt(4 + eps))
        T0 = mpmath.ceil(num / lnL)
        if T is None:
            Tv = T0
        else:
            Tv = max(T0, mpf(T)) if enforce_T0 else mpf(T)
        # gamma0 = (1 - cp^2 L^{-2(T-1)}) / (2 C*^2)
        ln_ratio = 2 * mpmath.log(c_phi) - 2 * (Tv - 1) * lnL
        if ln_ratio >= 0:
            raise InconsistencyError("gamma0 <= 0: T below the admissible minimum")
        ln_gamma0 = mpmath.log1p(-exp_or_zero(ln_ratio)) - mpmath.log(2) - 2 * lnC
        # beta = -ln(1 - gamma0/2) / (T ln L)
        ln_x = ln_gamma0 - mpmath.log(2)
        if ln_x > -60:
            ln_mlog = mpmath.log(-mpmath.log1p(-mpmath.exp(ln_x)))
        else:
            ln_mlog = ln_x  # -ln(1-x) = x (1 + x/2 + ...), correction below working precision
        ln_beta = ln_mlog - mpmath.log(Tv) - mpmath.log(lnL)
    gamma0 = LogLogReal.from_log(ln_gamma0)
    beta = LogLogReal.from_log(ln_beta)
    if not beta.is_finite_positive():
        raise InconsistencyError("beta is not positive")
    return HanSchlagResult(
        R1=LogLogReal.from_log(lnR1),
        R1_terms=[LogLogReal.from_log(t) for t in terms],
        C_star=C_star,
        T0=LogLogReal.plain(T0),
        T=LogLogReal.plain(Tv),
        gamma0=gamma0,
        beta=beta,
        L=int(L),
    )


def damping_params(nu, mu_scale, c1, d=1, C_d=1.0):
    """(alpha, c2, c3) of the porosity-to-damping step; alpha is the boundary value."""
    _check_nu(nu)
    _check_unit("c1", c1)
    if not mu_scale > 1:
        raise ValidationError("mu_scale must exceed 1")
    with mpmath.workprec(PREC):
        nu, mu, c1 = mpf(nu), mpf(mu_scale), mpf(c1)
        lg = mpmath.log(1 / nu)
        c3 = c1 * nu / (C_d * lg)
        c2 = c1 ** C_d / (C_d * mpmath.exp(c1 * nu * mu / (C_d * lg)))
        alpha = 1 - nu / (C_d * lg)
    return float(alpha), float(c2), float(c3)


def gamma_exponent(nu, d=1, C_d=1.0):
    """(gamma on lines, gamma on balls)."""
    _check_nu(nu)
    lg = math.log(1 / nu)
    return nu / (C_d * lg), nu ** d / (C_d * (1 + lg))


def measure_lemma_constant(d):
    """C_d making |X∩B| ≤ C_d R^d (α₀/R)^γ, γ = ν^d/(C_d(1+|ln ν|)), hold for ball-porous X.

    Each cube of side ℓ ≥ α₀ keeps at most L^d - 1 of its L^d subcubes, L = ⌊√d/ν⌋ + 1 ≤ 2√d/ν,
    so γ ≥ L^{-d}/ln L ≥ ν^d/((2√d)^d max(1, ln 2√d)(1+|ln ν|)); the prefactor covers B by a
    cube of side 2R.
    """
    if d < 1:
        raise ValidationError("dimension must be >= 1")
    q = 2 * math.sqrt(d)
    return max(2.0 ** d, q ** d * max(1.0, math.log(q)))


def arc_constant_from_K(K):
    """Three-point constant of a K-quasicircle, 10 e^{8K}."""
    if K < 1:
        raise ValidationError("quasiconformal constant K must be >= 1")
    return 10.0 * math.exp(8.0 * K)


# ---------------------------------------------------------------- reports

@dataclass
class ConstantChainReport:
    chain: str
    inputs: dict
    values: dict = field(default_factory=dict)  # name -> (LogLogReal, source label)

    def put(self, name, value, source):
        if not isinstance(value, LogLogReal):
            value = LogLogReal.plain(value)
        self.values[name] = (value, source)

    def get(self, name) -> LogLogReal:
        return self.values[name][0]

    def to_dict(self):
        return {
            "chain": self.chain,
            "inputs": self.inputs,
            "values": {k: {"value": v.to_dict(), "approx": _approx(v), "source": s}
                       for k, (v, s) in self.values.items()},
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, obj):
        rep = cls(obj["chain"], obj["inputs"])
        for k, entry in obj["values"].items():
            rep.values[k] = (LogLogReal.from_dict(entry["value"]), entry["source"])
        return rep


def _approx(v: LogLogReal) -> str:
    return repr(v)


def gap_chain_values(delta, C_mu, C_arc):
    """(C_out, chain nu, alpha1, headline nu) as mpf, with the shared tilde constants."""
    with mpmath.workprec(PREC):
        delta, C_mu, C_arc = mpf(delta), mpf(C_mu), mpf(C_arc)
        Cm = 20000 * C_mu
        Ca = 200 * C_arc
        p = 1 / (delta - 1)
        C_out = 2 * (4 * mpmath.mpf(5) ** delta * Cm ** 2) ** p
        nu_chain = 1 / (200 * C_out * Ca ** 2)
        alpha1 = 1 / (10 * C_out * Ca)
        nu_head = 1 / (mpmath.mpf(10) ** 8 * (mpmath.mpf(10) ** 11 * C_mu ** 2) ** p * C_arc ** 2)
    return Cm, Ca, C_out, nu_chain, alpha1, nu_head


def spectral_gap_chain(delta, C_mu=1.0, C_arc=1.0, C_d=1.0) -> ConstantChainReport:
    """Limit-set data (delta, C_mu, C_arc) -> porosity nu -> gap exponent beta~ = beta(nu, 2)/2."""
    if delta <= 1:
        raise ValidationError("delta <= 1 makes the exponent 1/(delta-1) singular; "
                              "use the resonance calculator for the Fuchsian case")
    if delta >= 2:
        raise ValidationError("delta must lie in (1,2)")
    if C_mu < 1 or C_arc < 1:
        raise ValidationError("C_mu and C_arc must be >= 1")
    Cm, Ca, C_out, nu_chain, alpha1, nu_head = gap_chain_values(delta, C_mu, C_arc)
    if not nu_head <= nu_chain:
        raise InconsistencyError("headline nu exceeds the geometric-chain nu")
    rep = ConstantChainReport("gap", {"delta": delta, "C_mu": C_mu, "C_arc": C_arc, "C_d": C_d})
    rep.put("C_mu_tilde", Cm, "regularity constant on the projected limit set")
    rep.put("C_arc_tilde", Ca, "three-point constant on the projected limit set")
    rep.put("C_out", C_out, "non-concentration distance factor")
    rep.put("nu_chain", nu_chain, "line porosity of the projected limit set")
    rep.put("alpha1", alpha1, "upper porosity scale")
    rep.put("nu", nu_head, "headline porosity constant")
    beta = beta_fup(nu_head, 2, C_d)
    rep.put("beta", beta, "FUP exponent at the headline nu, d=2")
    rep.put("beta_tilde", beta * LogLogReal.plain(mpf("0.5")), "essential gap: half the FUP exponent")
    return rep


def fup_chain(nu, d=1, C_d=1.0, C_phi=1.0, c_phi=1.0, c3_star=C3_STAR_DEFAULT) -> ConstantChainReport:
    """Closed-form exponent plus the explicit route through damping and the box-porosity criterion."""
    _check_nu(nu)
    rep = ConstantChainReport("fup", {"nu": nu, "d": d, "C_d": C_d, "C_phi": C_phi, "c_phi": c_phi})
    beta = beta_fup(nu, d, C_d)
    rep.put("beta", beta, "closed-form FUP exponent")
    rep.put("log_neg_log_beta", LogLogReal.plain(beta.loglog_abs()), "ln(-ln beta)")
    g_lines, g_balls = gamma_exponent(nu, d, C_d)
    rep.put("gamma", g_lines, "line-porosity decay exponent")
    rep.put("gamma_balls", g_balls, "ball-porosity measure exponent")
    c1 = nu / (20 * math.sqrt(d))
    mu = 10 * math.sqrt(d) / nu
    alpha, c2, c3 = damping_params(nu, mu, c1, d, C_d)
    rep.put("c1", c1, "damping bandwidth")
    rep.put("alpha", alpha, "damping exponent boundary value")
    rep.put("c2", c2, "damping amplitude")
    rep.put("c3", c3, "damping rate")
    L = math.ceil(math.sqrt(d) / nu)
    L = max(L, 3)
    hs = han_schlag_beta(L, c1, c2, c3, alpha, d, C_d, C_phi, c_phi, c3_star=c3_star)
    rep.put("L", L, "box-porosity scale ceil(sqrt(d)/nu)")
    rep.put("R1", hs.R1, "six-term maximum")
    rep.put("C_star", hs.C_star, "damping-to-FUP constant")
    rep.put("T0", hs.T0, "minimal iteration depth")
    rep.put("T", hs.T, "iteration depth used")
    rep.put("gamma0", hs.gamma0, "per-step gain")
    rep.put("beta_hs", hs.beta, "exponent through the explicit box-porosity route")
    return rep


def damping_chain(nu, mu_scale=None, c1=None, d=1, C_d=1.0) -> ConstantChainReport:
    c1 = nu / (20 * math.sqrt(d)) if c1 is None else c1
    mu_scale = 10 * math.sqrt(d) / nu if mu_scale is None else mu_scale
    alpha, c2, c3 = damping_params(nu, mu_scale, c1, d, C_d)
    rep = ConstantChainReport("damping", {"nu": nu, "mu_scale": mu_scale, "c1": c1, "d": d, "C_d": C_d})
    rep.put("alpha", alpha, "damping exponent boundary value")
    rep.put("c2", c2, "damping amplitude")
    rep.put("c3", c3, "damping rate")
    g_lines, g_balls = gamma_exponent(nu, d, C_d)
    rep.put("gamma", g_lines, "line-porosity decay exponent")
    rep.put("gamma_balls", g_balls, "ball-porosity measure exponent")
    return rep


def hs_chain(L, c1, c2, c3, alpha, d=1, C_d=1.0, C_phi=1.0, c_phi=1.0, T=None,
             c3_star=C3_STAR_DEFAULT) -> ConstantChainReport:
    hs = han_schlag_beta(L, c1, c2, c3, alpha, d, C_d, C_phi, c_phi, T, c3_star)
    rep = ConstantChainReport("hs", {"L": L, "c1": c1, "c2": c2, "c3": c3, "alpha": alpha, "d": d,
                                     "C_d": C_d, "C_phi": C_phi, "c_phi": c_phi, "T": T,
                                     "c3_star": c3_star})
    rep.put("R1", hs.R1, "six-term maximum")
    rep.put("C_star", hs.C_star, "damping-to-FUP constant")
    rep.put("T0", hs.T0, "minimal iteration depth")
    rep.put("T", hs.T, "iteration depth used")
    rep.put("gamma0", hs.gamma0, "per-step gain")
    rep.put("beta", hs.beta, "exponent through the explicit box-porosity route")
    return rep
