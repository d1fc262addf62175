"""One-way ANOVA, chi-square independence, Welch t, Spearman and Bonferroni."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .special import chi2_sf, f_sf, t_sf_two_sided


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: tuple[float, ...]
    p_value: float
    label: str

    __test__ = False  # not a pytest class


def one_way_anova(groups: Sequence[Sequence[float]]) -> TestResult:
    """Fixed-effects one-way ANOVA."""
    if len(groups) < 2:
        raise ValueError("ANOVA needs at least 2 groups")
    gs = [np.asarray(g, dtype=float) for g in groups]
    for i, g in enumerate(gs):
        if len(g) < 2:
            raise ValueError(f"group {i} has {len(g)} sample(s); need at least 2")
    n = sum(len(g) for g in gs)
    k = len(gs)
    grand = np.concatenate(gs).mean()
    ssb = float(sum(len(g) * (g.mean() - grand) ** 2 for g in gs))
    ssw = float(sum(((g - g.mean()) ** 2).sum() for g in gs))
    dfb, dfw = k - 1, n - k
    if ssw == 0.0:
        f, p = (0.0, 1.0) if ssb == 0.0 else (math.inf, 0.0)
    else:
        f = (ssb / dfb) / (ssw / dfw)
        p = f_sf(f, dfb, dfw)
    return TestResult(f, (dfb, dfw), p, "one-way ANOVA")


def chi_square_independence(table) -> TestResult:
    """Pearson chi-square test of independence on a contingency table (no continuity correction)."""
    obs = np.asarray(table, dtype=float)
    if obs.ndim != 2 or obs.shape[0] < 2 or obs.shape[1] < 2:
        raise ValueError("contingency table must be at least 2x2")
    if (obs < 0).any():
        raise ValueError("counts must be non-negative")
    rows, cols = obs.sum(axis=1), obs.sum(axis=0)
    for i, r in enumerate(rows):
        if r <= 0:
            raise ValueError(f"row {i} has zero total")
    for j, c in enumerate(cols):
        if c <= 0:
            raise ValueError(f"column {j} has zero total")
    expected = np.outer(rows, cols) / obs.sum()
    stat = float(((obs - expected) ** 2 / expected).sum())
    dof = (obs.shape[0] - 1) * (obs.shape[1] - 1)
    return TestResult(stat, (dof,), chi2_sf(stat, dof), "chi-square independence")


def welch_t(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sided Welch t test with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least 2 values")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0.0:
        if diff == 0.0:
            return TestResult(0.0, (float(len(a) + len(b) - 2),), 1.0, "Welch t")
        raise ValueError("both samples have zero variance and different means")
    df = se2 ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    t = diff / math.sqrt(se2)
    return TestResult(float(t), (float(df),), float(t_sf_two_sided(t, df)), "Welch t")


def rankdata(x: Sequence[float]) -> np.ndarray:
    """Ranks starting at 1, ties receiving their average rank."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    xs = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> TestResult:
    """Spearman rank correlation; p from the t approximation with ``n - 2`` dof.

    Returns NaN statistic and p-value when either input is constant.
    """
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 3:
        raise ValueError("spearman needs at least 3 pairs")
    rx, ry = rankdata(x), rankdata(y)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    denom = math.sqrt(float((dx * dx).sum() * (dy * dy).sum()))
    if denom == 0.0:
        return TestResult(math.nan, (n - 2,), math.nan, "Spearman")
    rho = float((dx * dy).sum() / denom)
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0:
        p = 0.0
    else:
        t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
        p = t_sf_two_sided(t, n - 2)
    return TestResult(rho, (n - 2,), p, "Spearman")


def bonferroni_adjust(p_values: Sequence[float], m: int | None = None) -> list[float]:
    """``min(1, p * m)`` with ``m`` defaulting to the number of p-values."""
    m = len(p_values) if m is None else m
    if m < 1:
        raise ValueError("m must be >= 1")
    return [min(1.0, p * m) for p in p_values]


def bonferroni_alpha(alpha: float, m: int) -> float:
    if m < 1:
        raise ValueError("m must be >= 1")
    return alpha / m
