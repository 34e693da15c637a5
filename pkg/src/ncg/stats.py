"""Chi-squared uniformity test, one-sided Welch t-test and least-squares slope.

Tail probabilities come from the regularized incomplete gamma and beta
functions in ``scipy.special``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from .errors import DataError, UsageError

@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    name: str
    statistic: float
    degrees_of_freedom: float
    p_value: float
    alpha: float
    reject: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _result(name, stat, df, p, alpha):
    p = min(max(p, 0.0), 1.0)
    return TestResult(name, float(stat), float(df), float(p), float(alpha), bool(p < alpha))


# ---------------------------------------------------------------- special functions


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0 or x < 0:
        raise UsageError("need a > 0 and x >= 0")
    return float(special.gammainc(a, x))


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if a <= 0 or x < 0:
        raise UsageError("need a > 0 and x >= 0")
    return float(special.gammaincc(a, x))


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0 or not 0.0 <= x <= 1.0:
        raise UsageError("need a, b > 0 and 0 <= x <= 1")
    return float(special.betainc(a, b, x))


def chi2_sf(stat: float, df: float) -> float:
    return gammainc_upper(0.5 * df, 0.5 * stat)


def student_t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with ``df`` degrees of freedom."""
    tail = 0.5 * betainc(0.5 * df, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


# ---------------------------------------------------------------- tests


def chi2_uniform(counts, alpha: float = 0.01) -> TestResult:
    """Pearson chi-squared test of the counts against a uniform distribution."""
    counts = np.asarray(counts, dtype=np.float64)
    K = counts.size
    if K < 2:
        raise UsageError("need at least 2 categories")
    N = counts.sum()
    if N < 1:
        raise DataError("need at least one observation")
    expected = N / K
    stat = float(np.sum((counts - expected) ** 2) / expected)
    return _result("chi2_uniform", stat, K - 1, chi2_sf(stat, K - 1), alpha)


def welch_t_one_sided(a, b, alpha: float = 0.05) -> TestResult:
    """Welch's t-test of H1: mean(a) > mean(b)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise DataError("each sample needs at least 2 observations")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0.0:
        if diff == 0.0:
            return _result("welch_t_one_sided", 0.0, a.size + b.size - 2, 0.5, alpha)
        t = math.copysign(math.inf, diff)
        return _result("welch_t_one_sided", t, a.size + b.size - 2, 0.0 if diff > 0 else 1.0, alpha)
    t = diff / math.sqrt(se2)
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    return _result("welch_t_one_sided", t, df, student_t_sf(t, df), alpha)


def ls_slope(xs, ys) -> tuple[float, float]:
    """Ordinary least-squares ``(slope, intercept)``."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size != ys.size or xs.size < 2:
        raise DataError("need at least 2 paired points")
    xm, ym = xs.mean(), ys.mean()
    sxx = np.sum((xs - xm) ** 2)
    if sxx == 0.0:
        raise DataError("xs are all equal")
    slope = float(np.sum((xs - xm) * (ys - ym)) / sxx)
    return slope, float(ym - slope * xm)
