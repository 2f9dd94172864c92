"""Two-sample, contingency and variance tests used inside the invariance tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

ALTERNATIVES = ("two_sided", "greater", "less")


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str
    alternative: str = "two_sided"
    flags: tuple[str, ...] = field(default=())

    __test__ = False  # not a pytest class


def _check_alt(alternative: str) -> None:
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")


def _clip(p: float) -> float:
    return float(min(1.0, max(0.0, p)))


def _vector(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def rank_sum_null_counts(m: int, n: int) -> np.ndarray:
    """Number of size-``m`` subsets of {1..m+n} for each rank sum.

    Index ``k`` of the result counts subsets with rank sum ``k + m(m+1)/2``.
    """
    N = m + n
    # dp[j][s]: subsets of size j with (shifted) sum s
    max_u = m * n
    dp = np.zeros((m + 1, max_u + 1), dtype=object)
    dp[0][0] = 1
    for i in range(1, N + 1):
        for j in range(min(i, m), 0, -1):
            # adding element i to a subset of size j-1 shifts u by i - j
            shift = i - j
            if shift > max_u:
                continue
            dp[j][shift:] = dp[j][shift:] + dp[j - 1][: max_u + 1 - shift]
    return dp[m]


def wilcoxon_rank_sum(a, b, alternative: str = "two_sided", *, exact: bool | None = None) -> TestResult:
    """Wilcoxon rank-sum test of a location shift between ``a`` and ``b``.

    The statistic is the rank sum of ``a`` (midranks for ties).  The exact
    null is enumerated when the combined size is at most 20 and there are
    no ties; otherwise the normal approximation with tie and continuity
    corrections is used.  ``greater`` means ``a`` tends to be larger.
    """
    _check_alt(alternative)
    a = _vector(a, "a")
    b = _vector(b, "b")
    m, n = a.size, b.size
    pooled = np.concatenate([a, b])
    ranks = stats.rankdata(pooled)
    W = float(ranks[:m].sum())
    has_ties = np.unique(pooled).size < pooled.size
    if exact is None:
        exact = (m + n) <= 20 and not has_ties

    if exact and not has_ties:
        counts = rank_sum_null_counts(m, n)
        total = math.comb(m + n, m)
        u = int(round(W - m * (m + 1) / 2))
        p_le = float(sum(counts[: u + 1]) / total)
        p_ge = float(sum(counts[u:]) / total)
        if alternative == "less":
            p = p_le
        elif alternative == "greater":
            p = p_ge
        else:
            p = min(1.0, 2 * min(p_le, p_ge))
        return TestResult(W, _clip(p), "wilcoxon_rank_sum_exact", alternative)

    N = m + n
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(((tie_counts**3) - tie_counts).sum())
    var = m * n / 12.0 * ((N + 1) - tie_term / (N * (N - 1))) if N > 1 else 0.0
    z = W - m * (N + 1) / 2.0
    if var <= 0:
        return TestResult(W, 1.0, "wilcoxon_rank_sum_normal", alternative, ("zero_variance",))
    if alternative == "two_sided":
        corr = 0.5 * np.sign(z)
    elif alternative == "greater":
        corr = 0.5
    else:
        corr = -0.5
    z = (z - corr) / math.sqrt(var)
    if alternative == "two_sided":
        p = 2 * min(stats.norm.sf(z), stats.norm.cdf(z))
    elif alternative == "greater":
        p = stats.norm.sf(z)
    else:
        p = stats.norm.cdf(z)
    return TestResult(W, _clip(p), "wilcoxon_rank_sum_normal", alternative)


def ks_two_sample(a, b) -> TestResult:
    """Two-sample Kolmogorov-Smirnov test with the asymptotic Kolmogorov tail."""
    a = np.sort(_vector(a, "a"))
    b = np.sort(_vector(b, "b"))
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    D = float(np.max(np.abs(cdf_a - cdf_b)))
    ne = a.size * b.size / (a.size + b.size)
    p = float(special.kolmogorov(math.sqrt(ne) * D)) if D > 0 else 1.0
    return TestResult(D, _clip(p), "ks_two_sample")


def levene(groups, center: str = "median") -> TestResult:
    """Levene test of equal spread; ``center="median"`` is Brown-Forsythe."""
    groups = [_vector(g, f"group {i}") for i, g in enumerate(groups)]
    if len(groups) < 2:
        raise ValueError("levene needs at least two groups")
    if any(g.size < 2 for g in groups):
        raise ValueError("every group needs at least two observations")
    if center == "median":
        centre = [np.median(g) for g in groups]
    elif center == "mean":
        centre = [np.mean(g) for g in groups]
    else:
        raise ValueError("center must be 'median' or 'mean'")
    z = [np.abs(g - c) for g, c in zip(groups, centre)]
    k = len(z)
    N = sum(g.size for g in z)
    grand = np.concatenate(z).mean()
    between = sum(g.size * (g.mean() - grand) ** 2 for g in z) / (k - 1)
    within = sum(((g - g.mean()) ** 2).sum() for g in z) / (N - k)
    if within == 0:
        if between == 0:
            return TestResult(0.0, 1.0, "levene", flags=("degenerate",))
        return TestResult(math.inf, 0.0, "levene", flags=("degenerate",))
    F = float(between / within)
    return TestResult(F, _clip(stats.f.sf(F, k - 1, N - k)), "levene")


def _hypergeom_pmf(row1: int, col1: int, total: int) -> tuple[np.ndarray, int]:
    lo = max(0, row1 + col1 - total)
    hi = min(row1, col1)
    support = np.arange(lo, hi + 1)
    logp = (
        special.gammaln(col1 + 1) - special.gammaln(support + 1) - special.gammaln(col1 - support + 1)
        + special.gammaln(total - col1 + 1) - special.gammaln(row1 - support + 1)
        - special.gammaln(total - col1 - row1 + support + 1)
        - (special.gammaln(total + 1) - special.gammaln(row1 + 1) - special.gammaln(total - row1 + 1))
    )
    return np.exp(logp), lo


def fisher_exact_2x2(table, alternative: str = "two_sided") -> TestResult:
    """Fisher's exact test on a 2x2 table of counts.

    The top-left cell is hypergeometric given the margins; ``greater``
    means an odds ratio above one.  The statistic is the sample odds ratio.
    """
    _check_alt(alternative)
    t = np.asarray(table)
    if t.shape != (2, 2):
        raise ValueError("table must be 2x2")
    if np.any(t < 0) or np.any(t != np.round(t)):
        raise ValueError("table entries must be nonnegative integers")
    t = t.astype(np.int64)
    total = int(t.sum())
    if total == 0:
        raise ValueError("table has no counts")
    a, b, c, d = (int(v) for v in t.ravel())
    odds = (a * d) / (b * c) if b * c > 0 else (math.inf if a * d > 0 else math.nan)
    row1, col1 = a + b, a + c
    pmf, lo = _hypergeom_pmf(row1, col1, total)
    x = a - lo
    if alternative == "less":
        p = pmf[: x + 1].sum()
    elif alternative == "greater":
        p = pmf[x:].sum()
    else:
        p = pmf[pmf <= pmf[x] * (1 + 1e-7)].sum()
    return TestResult(float(odds), _clip(p), "fisher_exact", alternative)


def two_proportion_test(k1: int, n1: int, k2: int, n2: int, alternative: str = "two_sided") -> TestResult:
    """Chi-squared test of equal proportions with Yates' continuity correction.

    One-sided alternatives use the signed square root of the statistic;
    ``greater`` means ``k1/n1 > k2/n2``.
    """
    _check_alt(alternative)
    if n1 < 1 or n2 < 1:
        raise ValueError("sample sizes must be positive")
    if not (0 <= k1 <= n1 and 0 <= k2 <= n2):
        raise ValueError("need 0 <= k_i <= n_i")
    x = np.array([k1, k2], dtype=float)
    n = np.array([n1, n2], dtype=float)
    pooled = x.sum() / n.sum()
    delta = x[0] / n[0] - x[1] / n[1]
    if pooled in (0.0, 1.0):
        p = 1.0 if alternative == "two_sided" else 0.5
        return TestResult(0.0, p, "two_proportion", alternative, ("degenerate",))
    yates = min(0.5, abs(delta) / (1 / n[0] + 1 / n[1]))
    obs = np.column_stack([x, n - x])
    exp = np.column_stack([n * pooled, n * (1 - pooled)])
    chi2 = float((((np.abs(obs - exp) - yates) ** 2) / exp).sum())
    if alternative == "two_sided":
        p = stats.chi2.sf(chi2, 1)
    else:
        z = np.sign(delta) * math.sqrt(chi2)
        p = stats.norm.sf(z) if alternative == "greater" else stats.norm.cdf(z)
    return TestResult(chi2, _clip(p), "two_proportion", alternative)


def f_test_accuracy(err_restricted, err_full) -> TestResult:
    """One-sided F test that the full model has the smaller squared error.

    Treats the two error sums as independent chi-squared variables with
    ``m`` degrees of freedom each, although they come from the same rows.
    """
    r = np.asarray(err_restricted, dtype=float).ravel()
    f = np.asarray(err_full, dtype=float).ravel()
    if r.size != f.size:
        raise ValueError("error vectors must have equal length")
    m = r.size
    if m < 3:
        raise ValueError("need at least 3 held-out rows")
    den = float(f.sum())
    num = float(r.sum())
    if den == 0:
        return TestResult(math.inf, 0.0, "f_test_accuracy", "greater", ("zero_denominator",))
    F = num / den
    return TestResult(F, _clip(stats.f.sf(F, m, m)), "f_test_accuracy", "greater")
