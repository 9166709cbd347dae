"""Student t and F distribution functions built on the regularised incomplete beta.

The incomplete beta is evaluated with a continued fraction (modified Lentz
algorithm). Quantiles invert the CDF by bracketed root finding.
"""
import math
import sys

from scipy.optimize import brentq

from .errors import NonConvergence

MAX_ITER = 200
TOL = 1e-12
_TINY = 1e-300
_XTOL = 1e-300
_RTOL = 4 * sys.float_info.epsilon


def _betacf(a, b, x):
    """Continued fraction for I_x(a, b); converges fast for x < (a+1)/(a+b+2)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < TOL:
            return h
    raise NonConvergence(f"incomplete beta did not converge in {MAX_ITER} iterations (a={a}, b={b}, x={x})")


def _front(a, b, x):
    return math.exp(
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )


def betainc(a, b, x):
    """Regularised incomplete beta function I_x(a, b) for a, b > 0, 0 <= x <= 1."""
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    if x < (a + 1.0) / (a + b + 2.0):
        return _front(a, b, x) * _betacf(a, b, x) / a
    return 1.0 - _front(b, a, 1.0 - x) * _betacf(b, a, 1.0 - x) / b


def betaincc(a, b, x):
    """Complement 1 - I_x(a, b), computed without cancellation."""
    return betainc(b, a, 1.0 - x)


def _check_df(*dfs):
    for df in dfs:
        # fractional degrees of freedom are allowed (Satterthwaite)
        if not df > 0:
            raise ValueError("degrees of freedom must be positive")


def t_sf(t, df):
    """Upper tail P(T > t) of Student's t with ``df`` degrees of freedom."""
    _check_df(df)
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * _two_tail(t, df)
    return tail if t >= 0 else 1.0 - tail


def _two_tail(t, df):
    # P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2); near t = 0 that argument
    # approaches 1, so take the central mass I_{t^2/(df+t^2)}(1/2, df/2) instead
    t2 = t * t
    if t2 < df:
        return 1.0 - betainc(0.5, 0.5 * df, t2 / (df + t2))
    return betainc(0.5 * df, 0.5, df / (df + t2))


def t_cdf(t, df):
    """P(T <= t) of Student's t with ``df`` degrees of freedom."""
    return t_sf(-t, df)


def t_two_sided(t, df):
    """Two-sided p-value ``P(|T| >= |t|)``."""
    _check_df(df)
    if math.isinf(t):
        return 0.0
    return _two_tail(t, df)


def _f_beta_args(x, d1, d2):
    return 0.5 * d1, 0.5 * d2, d1 * x / (d1 * x + d2)


def f_cdf(x, d1, d2):
    """P(F <= x) of the F distribution with ``(d1, d2)`` degrees of freedom."""
    _check_df(d1, d2)
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    a, b, y = _f_beta_args(x, d1, d2)
    return betainc(a, b, y)


def f_sf(x, d1, d2):
    """P(F > x), computed through the complementary beta for accuracy."""
    _check_df(d1, d2)
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    # 1 - I_y(a, b) = I_{1-y}(b, a) with 1 - y = d2 / (d1 x + d2)
    return betainc(0.5 * d2, 0.5 * d1, d2 / (d1 * x + d2))


def f_quantile(p, d1, d2):
    """Value ``x`` with ``f_cdf(x, d1, d2) == p``, for ``0 < p < 1``.

    The root is found on the beta scale, ``y = d1 x / (d1 x + d2)``, where it
    is bracketed by ``[0, 1]``. Upper quantiles are solved through the
    complement so that ``x`` keeps full relative precision.
    """
    _check_df(d1, d2)
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    a, b = 0.5 * d1, 0.5 * d2
    if p <= 0.5:
        y = brentq(lambda y: betainc(a, b, y) - p, 0.0, 1.0, xtol=_XTOL, rtol=_RTOL, maxiter=MAX_ITER)
        return d2 * y / (d1 * (1.0 - y))
    # z = 1 - y = d2 / (d1 x + d2)
    q = 1.0 - p
    z = brentq(lambda z: betainc(b, a, z) - q, 0.0, 1.0, xtol=_XTOL, rtol=_RTOL, maxiter=MAX_ITER)
    return d2 * (1.0 - z) / (d1 * z)
