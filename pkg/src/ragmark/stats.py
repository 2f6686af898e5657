"""Evaluation mathematics: regression metrics, stratified sampling, and the
variance-corrected paired t-test for cross-validated comparisons.

The corrected test inflates the standard error of the fold differences by
sqrt(1/K + n_test/n_train) to account for overlapping training sets across
folds; a plain paired t-test would be anti-conservative there.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateVarianceError


@dataclass(frozen=True)
class FoldScores:
    """Per-fold scores for two systems, paired by fold."""

    system_a: tuple[float, ...]
    system_b: tuple[float, ...]
    n_train: int
    n_test: int

    def __post_init__(self) -> None:
        if len(self.system_a) != len(self.system_b):
            raise ValueError("fold score lists must have equal length")
        if len(self.system_a) < 2:
            raise ValueError("need at least 2 folds")
        if self.n_train <= 0 or self.n_test <= 0:
            raise ValueError("n_train and n_test must be positive")

    @property
    def k(self) -> int:
        return len(self.system_a)

    def differences(self) -> tuple[float, ...]:
        return tuple(a - b for a, b in zip(self.system_a, self.system_b))


@dataclass(frozen=True)
class CorrectedTTestResult:
    t_statistic: float
    p_value: float  # two-sided
    degrees_of_freedom: int


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    # Modified Lentz evaluation of the continued fraction for I_x(a, b).
    max_iterations = 300
    eps = 1e-15
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iterations + 1):
        m2 = 2 * m
        numerator = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        numerator = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), accurate to about 1e-10 over the t-test's parameter range."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # Use the side of the symmetry relation where the fraction converges fast.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: int) -> float:
    """Two-sided p-value of a Student-t statistic with ``df`` degrees of freedom."""
    if df < 1:
        raise ValueError("df must be at least 1")
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def student_t_sf(t: float, df: int) -> float:
    """Upper-tail probability P(T > t) for a Student-t variable."""
    tail = student_t_two_sided_p(t, df) / 2.0
    return tail if t >= 0 else 1.0 - tail


def corrected_paired_ttest(
    scores: FoldScores, alternative: str = "two-sided"
) -> CorrectedTTestResult:
    """Variance-corrected paired t-test over cross-validation fold scores.

    t = mean(d) / (sd(d) * sqrt(1/K + n_test/n_train)) with K-1 degrees of
    freedom, where d are the per-fold score differences. The p-value is
    two-sided by default; ``alternative`` may be "greater" (system A scores
    higher) or "less". Raises :class:`DegenerateVarianceError` when the
    differences have zero variance.
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    diffs = np.asarray(scores.differences(), dtype=np.float64)
    k = scores.k
    mean_diff = float(np.mean(diffs))
    sd = float(np.std(diffs, ddof=1))
    if sd == 0.0:
        raise DegenerateVarianceError("fold differences have zero variance")
    inflation = math.sqrt(1.0 / k + scores.n_test / scores.n_train)
    t = mean_diff / (sd * inflation)
    df = k - 1
    if alternative == "two-sided":
        p = student_t_two_sided_p(t, df)
    elif alternative == "greater":
        p = student_t_sf(t, df)
    else:
        p = student_t_sf(-t, df)
    return CorrectedTTestResult(t_statistic=t, p_value=p, degrees_of_freedom=df)


def _paired_arrays(pred: Sequence[float], actual: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.ndim != 1 or a.ndim != 1:
        raise ValueError("pred and actual must be one-dimensional")
    if p.shape != a.shape:
        raise ValueError(f"length mismatch: {p.size} predictions vs {a.size} actuals")
    if p.size == 0:
        raise ValueError("pred and actual must be non-empty")
    return p, a


def rmse(pred: Sequence[float], actual: Sequence[float]) -> float:
    p, a = _paired_arrays(pred, actual)
    return float(np.sqrt(np.mean((p - a) ** 2)))


def mae(pred: Sequence[float], actual: Sequence[float]) -> float:
    p, a = _paired_arrays(pred, actual)
    return float(np.mean(np.abs(p - a)))


def r2(pred: Sequence[float], actual: Sequence[float]) -> float:
    """Coefficient of determination: 1 - SS_res / SS_tot."""
    p, a = _paired_arrays(pred, actual)
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("r2 undefined for constant actuals")
    ss_res = float(np.sum((a - p) ** 2))
    return 1.0 - ss_res / ss_tot


def pinball_loss(pred: Sequence[float], actual: Sequence[float], q: float) -> float:
    """Quantile loss: q * (y - yhat) when y >= yhat, else (1-q) * (yhat - y)."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie strictly inside (0, 1)")
    p, a = _paired_arrays(pred, actual)
    residual = a - p
    return float(np.mean(np.where(residual >= 0, q * residual, (q - 1.0) * residual)))


def quantile_bins(values: Sequence[float], n_bins: int) -> list[list[int]]:
    """Index bins formed by quantile breakpoints (inclusive linear interpolation).

    Values exactly equal to a breakpoint go to the higher bin. Raises when
    any bin ends up with fewer than 2 members, naming the bin.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("values must be a non-empty one-dimensional sequence")
    edges = np.quantile(arr, [i / n_bins for i in range(1, n_bins)], method="linear")
    bins: list[list[int]] = [[] for _ in range(n_bins)]
    for index, value in enumerate(arr):
        bins[int(np.searchsorted(edges, value, side="right"))].append(index)
    for bin_index, members in enumerate(bins):
        if len(members) < 2:
            raise ValueError(
                f"bin {bin_index} has {len(members)} member(s); need at least 2"
            )
    return bins


def stratified_split(
    values: Sequence[float],
    test_fraction: float,
    n_bins: int = 10,
    seed: int = 0,
) -> tuple[list[int], list[int]]:
    """Seeded train/test split stratified over quantile bins of ``values``.

    Within each bin, ``round(test_fraction * bin_size)`` indices are sampled
    without replacement. Returns sorted (train, test) index lists forming a
    partition of ``range(len(values))``.
    """
    if not 0.0 <= test_fraction <= 1.0:
        raise ValueError("test_fraction must lie in [0, 1]")
    bins = quantile_bins(values, n_bins)
    rng = random.Random(seed)
    test: list[int] = []
    for members in bins:
        take = round(test_fraction * len(members))
        test.extend(rng.sample(members, take))
    test_set = set(test)
    train = [i for i in range(len(values)) if i not in test_set]
    return train, sorted(test)


def stratified_kfold(
    values: Sequence[float],
    k: int,
    n_bins: int = 10,
    seed: int = 0,
) -> list[list[int]]:
    """Seeded K disjoint folds, each proportionally stratified over quantile bins.

    Every bin's members are shuffled and dealt round-robin, rotating the
    starting fold across bins so total fold sizes stay balanced. Folds are
    returned as sorted index lists partitioning ``range(len(values))``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    bins = quantile_bins(values, n_bins)
    rng = random.Random(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for members in bins:
        shuffled = list(members)
        rng.shuffle(shuffled)
        for position, index in enumerate(shuffled):
            folds[(position + offset) % k].append(index)
        offset = (offset + len(shuffled)) % k
    return [sorted(fold) for fold in folds]
