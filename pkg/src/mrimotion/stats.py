"""Statistical evaluation: normality gating, paired tests, BH-FDR, ICC and re-scan accounting.

Comparisons between methods follow one fixed protocol:

1. pair metric values by volume id;
2. check the paired differences for normality (D'Agostino-Pearson K^2);
3. run a paired t-test when normal, the Wilcoxon signed-rank test otherwise;
4. adjust the p-values of a whole family (one metric, one dataset) with
   Benjamini-Hochberg and assign significance stars from the adjusted values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import special, stats as sps

from .errors import (
    DegenerateTable,
    EmptyInput,
    MismatchedCohorts,
    TooFewSamples,
    ZeroVariance,
)

ALPHA = 0.05
EXACT_WILCOXON_MAX_N = 12
NORMALITY_MIN_N = 8


def stars(p: float) -> str:
    """Significance mark; a p exactly at a threshold earns the weaker mark."""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "ns"


@dataclass(frozen=True)
class PairedSample:
    labels: tuple
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        labels = tuple(self.labels)
        if not (len(labels) == a.size == b.size):
            raise ValueError("labels, a and b must have equal length")
        if a.size < 2:
            raise TooFewSamples("a paired sample needs at least two pairs")
        if len(set(labels)) != len(labels):
            raise ValueError("paired sample labels must be unique")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def diffs(self) -> np.ndarray:
        return self.b - self.a


@dataclass(frozen=True)
class TestResult:
    test: str
    statistic: float
    p_value: float
    n_effective: int

    @property
    def stars(self) -> str:
        return stars(self.p_value)


@dataclass(frozen=True)
class NormalityResult:
    is_normal: bool
    p: float
    statistic: float


def _skew_z(x: np.ndarray) -> float:
    n = x.size
    d = x - x.mean()
    m2 = np.mean(d ** 2)
    b = np.mean(d ** 3) / m2 ** 1.5
    y = b * math.sqrt((n + 1) * (n + 3) / (6.0 * (n - 2)))
    beta2 = (3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3)
             / ((n - 2.0) * (n + 5) * (n + 7) * (n + 9)))
    w2 = -1.0 + math.sqrt(2.0 * (beta2 - 1.0))
    delta = 1.0 / math.sqrt(0.5 * math.log(w2))
    alpha = math.sqrt(2.0 / (w2 - 1.0))
    y = 1.0 if y == 0 else y
    return delta * math.log(y / alpha + math.sqrt((y / alpha) ** 2 + 1.0))


def _kurtosis_z(x: np.ndarray) -> float:
    n = x.size
    d = x - x.mean()
    m2 = np.mean(d ** 2)
    b2 = np.mean(d ** 4) / m2 ** 2
    mean_b2 = 3.0 * (n - 1) / (n + 1)
    var_b2 = 24.0 * n * (n - 2) * (n - 3) / ((n + 1.0) ** 2 * (n + 3) * (n + 5))
    z = (b2 - mean_b2) / math.sqrt(var_b2)
    root_beta1 = (6.0 * (n * n - 5 * n + 2) / ((n + 7.0) * (n + 9))
                  * math.sqrt(6.0 * (n + 3) * (n + 5) / (n * (n - 2.0) * (n - 3))))
    a = 6.0 + 8.0 / root_beta1 * (2.0 / root_beta1 + math.sqrt(1.0 + 4.0 / root_beta1 ** 2))
    term1 = 1.0 - 2.0 / (9.0 * a)
    denom = 1.0 + z * math.sqrt(2.0 / (a - 4.0))
    term2 = math.copysign(abs((1.0 - 2.0 / a) / denom) ** (1.0 / 3.0), denom)
    return (term1 - term2) / math.sqrt(2.0 / (9.0 * a))


def normality_check(diffs) -> NormalityResult:
    """D'Agostino-Pearson omnibus test; ``is_normal`` when ``p >= 0.05``."""
    x = np.asarray(diffs, dtype=np.float64)
    if x.size < NORMALITY_MIN_N:
        raise TooFewSamples(f"normality check needs n >= {NORMALITY_MIN_N}, got {x.size}")
    if np.all(x == x[0]):
        raise ZeroVariance("constant sample has no distribution shape")
    k2 = _skew_z(x) ** 2 + _kurtosis_z(x) ** 2
    p = math.exp(-0.5 * k2)  # chi-square(2) survival function
    return NormalityResult(p >= ALPHA, p, k2)


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided Student-t tail probability via the regularized incomplete beta."""
    if math.isinf(t):
        return 0.0
    return float(special.betainc(0.5 * df, 0.5, df / (df + t * t)))


def paired_t_test(s: PairedSample) -> TestResult:
    d = s.diffs
    n = d.size
    if np.all(d == d[0]):
        raise ZeroVariance("all paired differences are identical")
    sd = float(np.std(d, ddof=1))
    t = float(d.mean()) / (sd / math.sqrt(n))
    return TestResult("t_paired", t, t_two_sided_p(t, n - 1), n)


def _wilcoxon_exact_p(ranks: np.ndarray, w_obs: float) -> float:
    n = ranks.size
    signs = (np.arange(2 ** n)[:, None] >> np.arange(n)) & 1
    w_plus = signs @ ranks
    w_min = np.minimum(w_plus, ranks.sum() - w_plus)
    hits = np.count_nonzero(w_min <= w_obs + 1e-9)
    return min(1.0, hits / 2 ** n)


def wilcoxon_signed_rank(s: PairedSample) -> TestResult:
    """Signed-rank test with zero-drop and mid-ranks for ties.

    Exact sign enumeration for up to 12 non-zero differences, otherwise the
    normal approximation with continuity and tie corrections.
    """
    d = s.diffs
    d = d[d != 0]
    n = d.size
    if n < 5:
        raise TooFewSamples(f"Wilcoxon test needs >= 5 non-zero differences, got {n}")
    ranks = sps.rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if n <= EXACT_WILCOXON_MAX_N:
        return TestResult("wilcoxon", w, _wilcoxon_exact_p(ranks, w), n)
    _, tie_counts = np.unique(ranks, return_counts=True)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
    z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(var)
    p = min(1.0, 2.0 * float(special.ndtr(-z)))
    return TestResult("wilcoxon", w, p, n)


@dataclass(frozen=True)
class FdrEntry:
    p: float
    p_adjusted: float
    rejected: bool


def fdr_bh(p_values: Sequence[float], q: float = ALPHA) -> list[FdrEntry]:
    """Benjamini-Hochberg step-up procedure, results in input order."""
    p = np.asarray(p_values, dtype=np.float64)
    m = p.size
    if m == 0:
        return []
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p-values must lie in [0, 1]")
    order = np.argsort(p, kind="stable")
    ranked = p[order]
    ranks = np.arange(1, m + 1)
    below = np.nonzero(ranked <= ranks * q / m)[0]
    k = below[-1] + 1 if below.size else 0
    adjusted_sorted = np.minimum.accumulate((m * ranked / ranks)[::-1])[::-1]
    adjusted_sorted = np.minimum(adjusted_sorted, 1.0)
    adjusted = np.empty(m)
    adjusted[order] = adjusted_sorted
    rejected = np.zeros(m, dtype=bool)
    rejected[order[:k]] = True
    return [FdrEntry(float(a), float(b), bool(r)) for a, b, r in zip(p, adjusted, rejected)]


def variance_ratio(a, b) -> float:
    """F-ratio var(a) / var(b); reported for homogeneity, never used for gating."""
    vb = float(np.var(b, ddof=1))
    return math.inf if vb == 0 else float(np.var(a, ddof=1)) / vb


# -- inter-rater reliability ---------------------------------------------------


@dataclass(frozen=True)
class IccResult:
    icc: float
    ci95: tuple
    ms_rows: float
    ms_cols: float
    ms_error: float


def anova_mean_squares(table) -> tuple[float, float, float]:
    """Two-way mean squares (subjects, raters, residual) of a complete table."""
    y = np.asarray(table, dtype=np.float64)
    n, k = y.shape
    grand = y.mean()
    row_means = y.mean(axis=1)
    col_means = y.mean(axis=0)
    ss_rows = k * np.sum((row_means - grand) ** 2)
    ss_cols = n * np.sum((col_means - grand) ** 2)
    resid = y - row_means[:, None] - col_means[None, :] + grand
    ss_err = np.sum(resid ** 2)
    return ss_rows / (n - 1), ss_cols / (k - 1), ss_err / ((n - 1) * (k - 1))


def icc_absolute_agreement(table, alpha: float = ALPHA) -> IccResult:
    """Single-rater absolute-agreement ICC(A,1) with its F-based confidence interval.

    Parameters
    ----------
    table : array_like, shape (n_subjects, n_raters)
    """
    y = np.asarray(table, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] < 2 or y.shape[1] < 2:
        raise ValueError("ratings must be a complete table with >= 2 subjects and >= 2 raters")
    if not np.all(np.isfinite(y)):
        raise ValueError("ratings table has missing or non-finite cells")
    n, k = y.shape
    msr, msc, mse = anova_mean_squares(y)
    tol = 1e-12 * max(1.0, float(np.mean(y ** 2)))
    msr = 0.0 if msr <= tol else msr
    msc = 0.0 if msc <= tol else msc
    mse = 0.0 if mse <= tol else mse
    if msr == 0 and mse == 0:
        raise DegenerateTable("no between-subject or residual variance; ICC is undefined")
    icc = (msr - mse) / (msr + (k - 1) * mse + k * (msc - mse) / n)
    if mse == 0 and msc == 0:
        return IccResult(icc, (1.0, 1.0), msr, msc, mse)

    a = k * icc
    c = n * (1 + (k - 1) * icc) - k * icc
    if mse == 0:
        v = k - 1.0
    else:
        fj = msc / mse
        v = ((k - 1) * (n - 1) * (a * fj + c) ** 2
             / ((n - 1) * a ** 2 * fj ** 2 + c ** 2))
    f_up = sps.f.ppf(1 - alpha / 2, n - 1, v)
    f_lo = sps.f.ppf(1 - alpha / 2, v, n - 1)
    shared = k * msc + (k * n - k - n) * mse
    lower = n * (msr - f_up * mse) / (f_up * shared + n * msr)
    upper = n * (f_lo * msr - mse) / (shared + n * f_lo * msr)
    return IccResult(icc, (float(lower), float(min(upper, 1.0))), msr, msc, mse)


# -- Likert accounting ---------------------------------------------------------

ACCEPTABLE_SCORE = 3


def _check_scores(scores) -> np.ndarray:
    s = np.asarray(scores)
    if s.size == 0:
        raise EmptyInput("no scores given")
    if np.any(s != np.round(s)) or np.any((s < 1) | (s > 5)):
        raise ValueError("Likert scores must be integers in 1..5")
    return s


def rescan_rate(scores, threshold: int = ACCEPTABLE_SCORE) -> float:
    """Fraction of scores strictly below ``threshold`` (those volumes need a re-scan)."""
    s = _check_scores(scores)
    return np.count_nonzero(s < threshold) / s.size


def rescan_reduction(before, after, threshold: int = ACCEPTABLE_SCORE) -> dict:
    """Re-scan rates before and after, and their absolute difference, in percent."""
    rb = 100.0 * rescan_rate(before, threshold)
    ra = 100.0 * rescan_rate(after, threshold)
    return {"before_pct": rb, "after_pct": ra, "absolute_reduction_pct": rb - ra}


# -- method comparison ---------------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    dataset: str
    metric: str
    comparison: str
    test: str
    statistic: Optional[float]
    p_raw: Optional[float]
    p_adjusted: Optional[float] = None
    degenerate: bool = False
    variance_ratio: Optional[float] = None
    n: int = 0
    too_few: bool = False  # untestable because of sample size, not variance

    @property
    def stars(self) -> str:
        if self.too_few:
            return "n/a"
        if self.degenerate:
            return "ns (degenerate)"
        return stars(self.p_adjusted if self.p_adjusted is not None else self.p_raw)


def paired_metric_sample(rows_a, rows_b, metric: str) -> PairedSample:
    """Pair two methods' metric rows by volume id (sorted, so row order is irrelevant)."""
    rows_a, rows_b = list(rows_a), list(rows_b)
    va = {r.volume_id: getattr(r, metric) for r in rows_a}
    vb = {r.volume_id: getattr(r, metric) for r in rows_b}
    if len(va) != len(rows_a) or len(vb) != len(rows_b):
        raise MismatchedCohorts("duplicate volume ids within one method")
    if set(va) != set(vb):
        missing = sorted(set(va) ^ set(vb))
        raise MismatchedCohorts(f"cohorts differ in {len(missing)} volume ids, e.g. {missing[:3]}")
    ids = sorted(va)
    return PairedSample(tuple(ids), [_num(va[i]) for i in ids], [_num(vb[i]) for i in ids])


def _num(value) -> float:
    return math.nan if value is None else float(value)


def run_paired_test(s: PairedSample) -> TestResult:
    """Normality-gated dispatch to the paired t-test or the Wilcoxon test.

    Below the normality check's minimum size the distribution cannot be
    verified, so the rank test is used.
    """
    d = s.diffs
    if np.all(d == 0):
        raise ZeroVariance("all paired differences are zero")
    try:
        normal = normality_check(d).is_normal
    except (TooFewSamples, ZeroVariance):
        normal = False
    return paired_t_test(s) if normal else wilcoxon_signed_rank(s)


def apply_fdr(comparisons: Sequence[Comparison], q: float = ALPHA) -> list[Comparison]:
    """BH-adjust the testable members of one family; degenerate ones pass through."""
    testable = [i for i, c in enumerate(comparisons) if not c.degenerate]
    adjusted = fdr_bh([comparisons[i].p_raw for i in testable], q)
    out = list(comparisons)
    for i, entry in zip(testable, adjusted):
        out[i] = replace(out[i], p_adjusted=entry.p_adjusted)
    return out


def compare_family(baseline_rows, candidates: Mapping[str, Sequence], metric: str,
                   dataset: str = "", baseline_label: str = "baseline",
                   q: float = ALPHA) -> list[Comparison]:
    """Compare every candidate method against the baseline on one metric.

    The candidates form one FDR family. Comparisons whose differences are all
    zero, or whose values are missing or non-finite, are reported as
    degenerate and left out of the adjustment, as are samples too small for
    either test.
    """
    results = []
    for label in sorted(candidates):
        sample = paired_metric_sample(baseline_rows, candidates[label], metric)
        name = f"{label} vs {baseline_label}"
        if not (np.all(np.isfinite(sample.a)) and np.all(np.isfinite(sample.b))):
            results.append(Comparison(dataset, metric, name, "none", None, None,
                                      degenerate=True, n=len(sample.labels)))
            continue
        vr = variance_ratio(sample.b, sample.a)
        try:
            res = run_paired_test(sample)
        except (ZeroVariance, TooFewSamples) as exc:
            results.append(Comparison(dataset, metric, name, "none", None, None,
                                      degenerate=True, variance_ratio=vr,
                                      n=len(sample.labels),
                                      too_few=isinstance(exc, TooFewSamples)))
            continue
        results.append(Comparison(dataset, metric, name, res.test, res.statistic, res.p_value,
                                  variance_ratio=vr, n=res.n_effective))
    return apply_fdr(results, q)


def compare_methods(rows_a, rows_b, metric: str, dataset: str = "",
                    labels: tuple = ("a", "b")) -> Comparison:
    """Single comparison of method ``b`` against method ``a`` (a family of one)."""
    return compare_family(rows_a, {labels[1]: rows_b}, metric, dataset, labels[0])[0]
