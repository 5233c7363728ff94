"""Positive reals far outside double range, stored through one or two logarithms."""
from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath

PREC = 160  # working bits for every tower evaluation
DIGITS = 60  # decimal digits written to JSON; enough to round-trip PREC bits

TAGS = ("plain", "log", "loglog")


def mpf(x):
    with mpmath.workprec(PREC):
        return mpmath.mpf(x)


def _safe_exp(x):
    """exp of an mpf, or None when the result exponent cannot be materialized."""
    try:
        with mpmath.workprec(PREC):
            return mpmath.exp(x)
    except OverflowError:
        return None


def exp_or_zero(x):
    """exp(x), flushed to zero once it falls below the working precision relative to 1."""
    if x < -4 * PREC:
        return mpf(0)
    with mpmath.workprec(PREC):
        return mpmath.exp(x)


def _log1p_exp(r, s):
    """log1p(s * e^r) for r <= 0-ish, skipping terms below working precision."""
    if r < -2 * PREC:
        return mpf(0)
    with mpmath.workprec(PREC):
        return mpmath.log1p(s * mpmath.exp(r))


@dataclass(frozen=True)
class LogLogReal:
    """``sign * |v|`` where |v| is ``m`` (plain), ``exp(m)`` (log), or ``exp(±exp(m))`` (loglog).

    For the loglog tag ``tiny=True`` selects ``exp(-exp(m))``, the form of quantities such as
    exp(-exp(x)) that underflow any fixed-exponent format.
    """

    tag: str
    mantissa: mpmath.mpf
    sign: int = 1
    tiny: bool = False

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown tag {self.tag}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        object.__setattr__(self, "mantissa", mpf(self.mantissa))
        if self.tag == "plain" and self.mantissa < 0:
            raise ValueError("plain mantissa holds |v|; use sign for negatives")

    # constructors
    @classmethod
    def plain(cls, x):
        x = mpf(x)
        return cls("plain", abs(x), -1 if x < 0 else 1)

    @classmethod
    def from_log(cls, ln_abs, sign=1):
        return cls("log", ln_abs, sign).normalized()

    @classmethod
    def from_loglog(cls, m, tiny=False, sign=1):
        return cls("loglog", m, sign, tiny).normalized()

    # views
    def ln(self) -> "LogLogReal":
        """Natural log of |v| as a LogLogReal."""
        if self.tag == "plain":
            with mpmath.workprec(PREC):
                return LogLogReal.plain(mpmath.log(self.mantissa))
        if self.tag == "log":
            return LogLogReal.plain(self.mantissa)
        return LogLogReal.from_log(self.mantissa, -1 if self.tiny else 1)

    def log_abs(self):
        """ln|v| as an mpf; raises OverflowError for towers beyond mpf reach."""
        if self.tag == "plain":
            with mpmath.workprec(PREC):
                return mpmath.log(self.mantissa)
        if self.tag == "log":
            return self.mantissa
        e = _safe_exp(self.mantissa)
        if e is None:
            raise OverflowError("ln|v| not representable")
        return -e if self.tiny else e

    def loglog_abs(self):
        """ln|ln|v||; defined for |v| != 1."""
        if self.tag == "loglog":
            return self.mantissa
        with mpmath.workprec(PREC):
            return mpmath.log(abs(self.log_abs()))

    def normalized(self) -> "LogLogReal":
        """Move to the lowest tag whose mantissa stays in double-friendly range."""
        v = self
        if v.tag == "loglog" and v.mantissa < 40:
            e = _safe_exp(v.mantissa)
            v = LogLogReal("log", -e if v.tiny else e, v.sign)
        if v.tag == "log" and abs(v.mantissa) < 700:
            v = LogLogReal("plain", _safe_exp(v.mantissa), v.sign)
        return v

    def __float__(self):
        v = self.normalized()
        if v.tag != "plain":
            raise OverflowError("value outside double range")
        return float(v.sign * v.mantissa)

    def to_mpf(self):
        v = self.normalized()
        if v.tag == "plain":
            return v.sign * v.mantissa
        if v.tag == "log":
            e = _safe_exp(v.mantissa)
            if e is None:
                raise OverflowError("value outside mpf range")
            return v.sign * e
        raise OverflowError("loglog value outside mpf range")

    # arithmetic on magnitudes through logarithms
    def _ln_parts(self):
        """(sign of ln|v|, ln|ln|v||); sign 0 means |v| = 1."""
        if self.tag == "loglog":
            return (-1 if self.tiny else 1), self.mantissa
        lv = self.log_abs()
        if lv == 0:
            return 0, mpf("-inf")
        with mpmath.workprec(PREC):
            return (1 if lv > 0 else -1), mpmath.log(abs(lv))

    def _key(self):
        s, m = self._ln_parts()
        return (s, m if s >= 0 else -m)

    def __mul__(self, other):
        other = other if isinstance(other, LogLogReal) else LogLogReal.plain(other)
        sign = self.sign * other.sign
        try:
            return LogLogReal.from_log(self.log_abs() + other.log_abs(), sign)
        except OverflowError:
            pass
        # at least one factor is a tower; the other only matters if it is a comparable tower
        a, b = sorted((self, other), key=lambda v: v._ln_parts()[1])
        sb, mb = b._ln_parts()
        try:
            la = a.log_abs()
        except OverflowError:
            la = None
        if la is not None:
            # ln|ab| = ±e^{mb} + la  ->  ln ln|ab| = mb + log1p(±la e^{-mb})
            if la == 0:
                return LogLogReal("loglog", mb, sign, sb < 0)
            with mpmath.workprec(PREC):
                r = mpmath.log(abs(la)) - mb
                m = mb + _log1p_exp(r, sb * (1 if la > 0 else -1))
            return LogLogReal("loglog", m, sign, sb < 0)
        sa, ma = a._ln_parts()
        m = mb + _log1p_exp(ma - mb, sa * sb)
        return LogLogReal("loglog", m, sign, sb < 0)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        other = other if isinstance(other, LogLogReal) else LogLogReal.plain(other)
        return self * other.reciprocal()

    def reciprocal(self):
        if self.tag == "loglog":
            return LogLogReal("loglog", self.mantissa, self.sign, not self.tiny)
        return LogLogReal.from_log(-self.log_abs(), self.sign)

    def __pow__(self, p):
        """|v|**p for real p > 0 (sign must be positive)."""
        if self.sign < 0:
            raise ValueError("power of a negative LogLogReal")
        p = mpf(p)
        if p <= 0:
            raise ValueError("only positive powers are supported")
        if self.tag == "loglog":
            with mpmath.workprec(PREC):
                return LogLogReal("loglog", self.mantissa + mpmath.log(p), 1, self.tiny)
        return LogLogReal.from_log(p * self.log_abs())

    def __lt__(self, other):
        other = other if isinstance(other, LogLogReal) else LogLogReal.plain(other)
        if self.sign != other.sign:
            return self.sign < other.sign
        a, b = self._key(), other._key()
        return a < b if self.sign > 0 else b < a

    def __le__(self, other):
        return self < other or self == other

    def __gt__(self, other):
        other = other if isinstance(other, LogLogReal) else LogLogReal.plain(other)
        return other < self

    def __ge__(self, other):
        return self > other or self == other

    def __eq__(self, other):
        if not isinstance(other, LogLogReal):
            other = LogLogReal.plain(other)
        return self.sign == other.sign and self._key() == other._key()

    def __hash__(self):
        return hash((self.sign, self._key()))

    def is_finite_positive(self):
        return self.sign > 0 and mpmath.isfinite(self.mantissa) and not (
            self.tag == "plain" and self.mantissa == 0)

    def log10(self):
        """log10|v| as a float when that fits, else raises OverflowError."""
        with mpmath.workprec(PREC):
            return float(self.log_abs() / mpmath.log(10))

    def to_dict(self):
        return {"tag": self.tag, "mantissa": mpmath.nstr(self.mantissa, DIGITS, strip_zeros=False),
                "sign": self.sign, "tiny": self.tiny}

    @classmethod
    def from_dict(cls, obj):
        return cls(obj["tag"], mpf(obj["mantissa"]), int(obj["sign"]), bool(obj.get("tiny", False)))

    def __repr__(self):
        m = mpmath.nstr(self.mantissa, 12)
        if self.tag == "plain":
            body = m
        elif self.tag == "log":
            body = f"exp({m})"
        else:
            body = f"exp({'-' if self.tiny else ''}exp({m}))"
        return f"{'-' if self.sign < 0 else ''}{body}"


def as_float_or_none(v: LogLogReal):
    try:
        x = float(v)
    except OverflowError:
        return None
    return x if math.isfinite(x) else None
