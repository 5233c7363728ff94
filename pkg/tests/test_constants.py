import json
import math
import random
from decimal import Decimal, localcontext

import pytest
from hypothesis import given, settings, strategies as st

from fuplab.constants import (ConstantChainReport, arc_constant_from_K, beta_fup, beta_tower,
                              damping_chain, damping_params, fup_chain, gamma_exponent,
                              gap_chain_values, han_schlag_beta, hs_chain, spectral_gap_chain)
from fuplab.errors import InconsistencyError, ValidationError
from fuplab.loglog import LogLogReal, mpf


def decimal_tower(nu, C_d=1):
    """Independent 60-digit evaluation of ln(-ln beta) by a literal power."""
    with localcontext() as ctx:
        ctx.prec = 60
        nu = Decimal(nu)
        lg = (1 / nu).ln()
        base = C_d * lg / nu ** 2
        expo = C_d * lg / nu
        return base ** expo


def decimal_log10_headline(delta, C_mu, C_arc):
    with localcontext() as ctx:
        ctx.prec = 60
        delta, C_mu, C_arc = Decimal(delta), Decimal(C_mu), Decimal(C_arc)
        return -(8 + (11 + 2 * C_mu.log10()) / (delta - 1) + 2 * C_arc.log10())


def test_beta_fup_against_decimal_oracle():
    b = beta_fup(0.1, 2, 1.0)
    got = b.loglog_abs()
    want = decimal_tower(0.1)  # the exact binary value the implementation receives
    assert float(want) == pytest.approx(2.46e54, rel=5e-3)
    assert abs(float(got) / float(want) - 1) < 1e-6
    # agreement is far tighter than the contract
    import mpmath
    assert abs(Decimal(mpmath.nstr(got, 50)) / want - 1) < Decimal("1e-30")


@pytest.mark.parametrize("nu", ["0.3", "0.2", "0.05", "0.01", "0.001"])
@pytest.mark.parametrize("C_d", [1, 2, 5])
def test_beta_fup_oracle_grid(nu, C_d):
    got = beta_fup(float(nu), 2, C_d).loglog_abs()
    want = decimal_tower(float(nu), C_d)
    if want.adjusted() < 300:
        import mpmath
        assert Decimal(mpmath.nstr(got, 40)) / want == pytest.approx(1, rel=1e-12)
    else:
        # compare through logs when the value leaves decimal's comfortable range
        import mpmath
        assert float(mpmath.log(got)) == pytest.approx(float(want.ln()), rel=1e-12)


def test_beta_tower_closed_form():
    got = beta_tower(math.exp(-1)).loglog_abs()
    assert float(got) == pytest.approx(math.exp(2 * math.e), rel=1e-14)
    assert float(got) == pytest.approx(229.65, abs=0.01)


def test_beta_fup_domain():
    for nu in (0.0, 1 / 3, 0.5, -0.1):
        with pytest.raises(ValidationError, match="ν ∈"):
            beta_fup(nu, 2)


@given(st.floats(1e-4, 0.33), st.floats(1e-4, 0.33))
@settings(max_examples=60, deadline=None)
def test_beta_monotone_in_nu(a, b):
    lo, hi = sorted((a, b))
    assert beta_fup(lo) <= beta_fup(hi)


@given(st.floats(0.01, 0.33), st.floats(1, 10), st.floats(1, 10))
@settings(max_examples=40, deadline=None)
def test_beta_nonincreasing_in_Cd(nu, c1, c2):
    lo, hi = sorted((c1, c2))
    assert beta_fup(nu, 2, hi) <= beta_fup(nu, 2, lo)


def decimal_hs(L, c1, c2, c3, alpha, d=1, C_d=1, C_phi=1, c_phi=1):
    """Oracle: literal formulas in 80-digit decimals, returning logs of R1, ln C*, T0, ln beta."""
    with localcontext() as ctx:
        ctx.prec = 80
        c1, c2, c3, alpha = map(Decimal, (c1, c2, c3, alpha))
        d, C_d, C_phi, c_phi, L = map(Decimal, (d, C_d, C_phi, c_phi, L))
        pi = Decimal("3.14159265358979323846264338327950288419716939937510582097494459")
        q = 1 / (1 - alpha)
        R1 = max((2 * d / c3) ** 2, ((16 * pi * C_d / c3) ** q).exp(), (Decimal(4) ** q).exp(),
                 ((d * abs(c1.ln())) ** d / c3) ** 8, (4 * (2 * C_d / c2 ** 2).ln()) ** 2,
                 (8 * d) ** 4)
        lnC = c3 * (R1 + 2) * ((1 + R1).ln()) ** (-alpha) / 2
        # 2 Cp C*^2 dominates c_phi, so ln(2Cp C*^2 + sqrt(...)) = ln(4 Cp) + 2 lnC to 80 digits
        T0 = ((4 * C_phi).ln() + 2 * lnC) / L.ln()
        T0 = T0.to_integral_value(rounding="ROUND_CEILING")
        ln_gamma0 = -(2 * lnC) - Decimal(2).ln()
        ln_beta = ln_gamma0 - Decimal(2).ln() - T0.ln() - L.ln().ln()
        return R1.ln(), lnC, T0, ln_beta


def test_han_schlag_regression_against_oracle():
    hs = han_schlag_beta(3, 0.5, 0.5, 0.5, 0.5, d=1, C_d=1, C_phi=1, c_phi=1, c3_star=1.0)
    lnR1, lnC, T0, ln_beta = decimal_hs(3, 0.5, 0.5, 0.5, 0.5)
    assert float(hs.R1.log_abs()) == pytest.approx(float(lnR1), rel=1e-15)
    # the second candidate exp[(16 pi/c3)^2] wins
    assert hs.R1 == max(hs.R1_terms)
    assert hs.R1 == hs.R1_terms[1]
    assert float(hs.R1.log_abs()) == pytest.approx((32 * math.pi) ** 2, rel=1e-14)
    import mpmath
    assert float(mpmath.log(hs.C_star.loglog_abs())) == pytest.approx(float(lnC.ln().ln()), rel=1e-12)
    assert float(mpmath.log(hs.T0.to_mpf())) == pytest.approx(float(T0.ln()), rel=1e-12)
    assert float(mpmath.log(-hs.beta.log_abs())) == pytest.approx(float((-ln_beta).ln()), rel=1e-12)


def test_han_schlag_c3_threshold():
    with pytest.raises(ValidationError):
        han_schlag_beta(3, 0.5, 0.5, 0.5, 0.5)  # c3 above the default 0.01 threshold
    with pytest.raises(ValidationError):
        han_schlag_beta(3, 1.5, 0.5, 0.005, 0.5)
    with pytest.raises(ValidationError):
        han_schlag_beta(2, 0.5, 0.5, 0.005, 0.5)


def test_han_schlag_small_c_phi_limit():
    import mpmath
    hs = han_schlag_beta(3, 0.5, 0.5, 0.005, 0.5, c_phi=1e-30)
    lnC = mpmath.exp(hs.C_star.loglog_abs())
    # gamma0 -> 1/(2 C*^2)
    assert float(hs.gamma0.log_abs() + mpmath.log(2) + 2 * lnC) == pytest.approx(0, abs=1e-20)


def test_han_schlag_positive_random():
    rng = random.Random(7)
    for _ in range(1000):
        L = rng.randint(3, 40)
        c1, c2, alpha = (rng.uniform(0.01, 0.99) for _ in range(3))
        c3 = rng.uniform(1e-4, 0.0099)
        hs = han_schlag_beta(L, c1, c2, c3, alpha, d=rng.randint(1, 3),
                             C_d=rng.uniform(1, 10), C_phi=rng.uniform(0.1, 10),
                             c_phi=rng.uniform(0.1, 10))
        assert hs.beta.is_finite_positive()
        assert hs.beta < 1


def test_han_schlag_beta_decreases_with_T():
    # a large c3 keeps ln C* near 1e22, where T0 + 2 is still resolved at working precision
    args = (5, 0.3, 0.3, 0.9, 0.01)
    import mpmath
    hs = han_schlag_beta(*args, c3_star=1.0)
    prev = hs.beta
    with mpmath.workprec(160):
        T0 = hs.T0.to_mpf()
        assert T0 + 2 != T0
        for extra in (2, 3, 10, 10 ** 6):
            T = T0 + extra
            b1 = han_schlag_beta(*args, T=T, c3_star=1.0).beta
            b2 = han_schlag_beta(*args, T=2 * T, c3_star=1.0).beta
            assert b2 < b1 < prev and b2.is_finite_positive()


def test_han_schlag_gamma0_inconsistency():
    # forcing T = 1 with c_phi = 1 gives gamma0 = 0
    with pytest.raises(InconsistencyError):
        han_schlag_beta(3, 0.5, 0.5, 0.005, 0.5, T=1, enforce_T0=False)
    # the clamped default never reaches that state
    assert han_schlag_beta(3, 0.5, 0.5, 0.005, 0.5, T=1).beta.is_finite_positive()


def test_damping_params_example():
    nu, d = 0.1, 2
    c1 = nu / (20 * math.sqrt(d))
    mu = 10 * math.sqrt(d) / nu
    alpha, c2, c3 = damping_params(nu, mu, c1, d, 1.0)
    assert c3 == pytest.approx(c1 * 0.1 / math.log(10), rel=1e-14)
    assert alpha == pytest.approx(1 - 0.1 / math.log(10), rel=1e-14)
    assert c2 == pytest.approx(c1 / math.exp(c1 * nu * mu / math.log(10)), rel=1e-14)
    # c3 equals nu^2/(C|log nu|) once the constant absorbs 20 sqrt(d)
    C = 20 * math.sqrt(d)
    assert c3 == pytest.approx(nu ** 2 / (C * math.log(1 / nu)), rel=1e-14)


def test_damping_small_c1_monotone():
    prev = None
    for c1 in (1e-1, 1e-2, 1e-3, 1e-4, 1e-6):
        _, c2, c3 = damping_params(0.1, 50, c1, 2, 1.0)
        if prev:
            assert c2 < prev[0] and c3 < prev[1]
        prev = (c2, c3)
    assert prev[0] < 1e-5 and prev[1] < 1e-7


def test_gamma_exponent_examples():
    g_lines, g_balls = gamma_exponent(0.1, 2, 1.0)
    assert g_lines == pytest.approx(0.04343, abs=1e-5)
    assert g_balls == pytest.approx(0.01 / (1 + math.log(10)), rel=1e-14)
    assert g_balls == pytest.approx(0.003026, rel=1e-3)


@given(st.floats(1e-6, 0.333), st.integers(1, 4), st.floats(1, 100))
@settings(max_examples=80, deadline=None)
def test_gamma_below_one(nu, d, C_d):
    assert all(0 < g < 1 for g in gamma_exponent(nu, d, C_d))


def test_c_out_example():
    _, _, C_out, *_ = gap_chain_values(1.5, 1, 1)
    with localcontext() as ctx:
        ctx.prec = 50
        want = 2 * (4 * Decimal(5) ** Decimal("1.5") * Decimal(20000) ** 2) ** 2
    assert float(C_out) == pytest.approx(float(want), rel=1e-12)
    assert float(C_out) == pytest.approx(6.40e20, rel=1e-3)


def test_gap_chain_headline():
    delta = math.log(4) / math.log(3)
    rep = spectral_gap_chain(delta, 1, 1)
    l10 = rep.get("nu").log10()
    assert abs(l10 - (-50.0)) <= 0.1
    assert l10 == pytest.approx(float(decimal_log10_headline(delta, 1, 1)), rel=1e-12)
    assert rep.get("nu") <= rep.get("nu_chain")
    # beta~ is half of beta(nu, 2)
    half = rep.get("beta") * LogLogReal.plain(mpf("0.5"))
    assert rep.get("beta_tilde") == half


def test_gap_chain_random_inequality():
    rng = random.Random(11)
    for _ in range(1000):
        delta = rng.uniform(1.05, 1.95)
        cm, ca = rng.uniform(1, 1e3), rng.uniform(1, 1e3)
        _, _, _, nu_chain, _, nu_head = gap_chain_values(delta, cm, ca)
        assert nu_head <= nu_chain


def test_gap_chain_below_double_range():
    # nu near 1e-350 must flow into the tower without a float round trip
    rep = spectral_gap_chain(1.05, 1e3, 1e3)
    l10 = rep.get("nu").log10()
    assert l10 == pytest.approx(float(decimal_log10_headline(1.05, 1e3, 1e3)), rel=1e-12)
    assert l10 < -308
    assert rep.get("beta") < beta_fup(1e-300, 2)


def test_gap_chain_errors():
    with pytest.raises(ValidationError, match="singular"):
        spectral_gap_chain(1.0)
    with pytest.raises(ValidationError):
        spectral_gap_chain(1.5, 0.5, 1)


def test_arc_constant():
    assert arc_constant_from_K(1) == pytest.approx(10 * math.exp(8))
    assert arc_constant_from_K(1) == pytest.approx(2.98e4, rel=1e-3)
    assert arc_constant_from_K(2) == pytest.approx(10 * math.exp(16))
    for K in (1.0, 1.7, 3.2):
        assert arc_constant_from_K(K + 1) / arc_constant_from_K(K) == pytest.approx(math.exp(8), rel=1e-14)
    with pytest.raises(ValidationError):
        arc_constant_from_K(0.5)


@pytest.mark.parametrize("make", [
    lambda: fup_chain(0.1, 2),
    lambda: damping_chain(0.05, d=2),
    lambda: spectral_gap_chain(1.2619, 1, 1),
    lambda: hs_chain(3, 0.5, 0.5, 0.005, 0.5),
])
def test_report_round_trip(make):
    rep = make()
    text = rep.to_json()
    back = ConstantChainReport.from_dict(json.loads(text))
    assert back.to_json() == text
    for k, (v, _) in rep.values.items():
        w = back.get(k)
        assert (w.tag, w.mantissa, w.sign, w.tiny) == (v.tag, v.mantissa, v.sign, v.tiny)
        assert v.is_finite_positive()


def test_report_sources_are_labels():
    rep = fup_chain(0.1, 2)
    for _, (_, src) in rep.values.items():
        assert src and not any(ch.isdigit() for ch in src.split()[0])


def test_loglog_ordering_and_products():
    a = LogLogReal.plain(3)
    b = LogLogReal.from_log(1000)
    tower = beta_fup(0.1)
    assert tower < a < b
    assert float((a * a)) == pytest.approx(9)
    assert (b * b).log_abs() == 2000
    assert (tower * a) < a
    assert float((a ** 2.5)) == pytest.approx(3 ** 2.5)
    assert (tower * a) == tower  # a factor 3 is far below the tower's resolution
    mid = beta_tower(0.3)
    assert (mid ** 2) < mid
    with pytest.raises(OverflowError):
        float(b)
