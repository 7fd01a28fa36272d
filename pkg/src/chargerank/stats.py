"""Distribution CDFs and two-sample tests, self-contained.

The t and F CDFs are evaluated through the regularized incomplete beta
function with a modified-Lentz continued fraction, so no statistical
library is required at runtime.
"""

from __future__ import annotations

import math

_MAX_ITER = 300
_EPS = 3e-16
_FPMIN = 1e-300


class StatsError(ValueError):
    pass


def _betacf(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise StatsError(f"incomplete beta did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0.0 or b <= 0.0:
        raise StatsError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
             + a * math.log(x) + b * math.log1p(-x))
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def t_cdf(t: float, df: float) -> float:
    """CDF of Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise StatsError("degrees of freedom must be positive")
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * betainc(0.5 * df, 0.5, x)
    return 1.0 - tail if t > 0 else tail


def f_cdf(x: float, d1: float, d2: float) -> float:
    """CDF of the F distribution with (d1, d2) degrees of freedom."""
    if d1 <= 0 or d2 <= 0:
        raise StatsError("degrees of freedom must be positive")
    if x <= 0.0:
        return 0.0
    return betainc(0.5 * d1, 0.5 * d2, d1 * x / (d1 * x + d2))


def _mean_var(sample) -> tuple:
    n = len(sample)
    mean = sum(sample) / n
    var = sum((v - mean) ** 2 for v in sample) / (n - 1)
    return mean, var


def f_test_variances(a, b) -> dict:
    """Two-sided F-test for equality of variances."""
    if len(a) < 2 or len(b) < 2:
        raise StatsError("need at least 2 observations per sample")
    mean_a, var_a = _mean_var(a)
    mean_b, var_b = _mean_var(b)
    if var_a == 0.0 and var_b == 0.0:
        raise StatsError("both samples have zero variance")
    if var_b == 0.0:
        return {"statistic": math.inf, "p_value": 0.0,
                "df": (len(a) - 1, len(b) - 1)}
    stat = var_a / var_b
    cdf = f_cdf(stat, len(a) - 1, len(b) - 1)
    p = 2.0 * min(cdf, 1.0 - cdf)
    return {"statistic": stat, "p_value": min(p, 1.0),
            "df": (len(a) - 1, len(b) - 1)}


def t_test_means(a, b, welch: bool) -> dict:
    """Two-sided two-sample t-test; Welch or pooled-variance flavor."""
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise StatsError("need at least 2 observations per sample")
    mean_a, var_a = _mean_var(a)
    mean_b, var_b = _mean_var(b)
    if welch:
        se2_a = var_a / na
        se2_b = var_b / nb
        se = math.sqrt(se2_a + se2_b)
        if se == 0.0:
            return {"statistic": 0.0, "p_value": 1.0, "df": na + nb - 2}
        df = (se2_a + se2_b) ** 2 / (
            se2_a ** 2 / (na - 1) + se2_b ** 2 / (nb - 1))
    else:
        pooled = ((na - 1) * var_a + (nb - 1) * var_b) / (na + nb - 2)
        se = math.sqrt(pooled * (1.0 / na + 1.0 / nb))
        if se == 0.0:
            return {"statistic": 0.0, "p_value": 1.0, "df": na + nb - 2}
        df = na + nb - 2
    stat = (mean_a - mean_b) / se
    p = 2.0 * (1.0 - t_cdf(abs(stat), df))
    return {"statistic": stat, "p_value": min(max(p, 0.0), 1.0), "df": df}
