"""Nonparametric statistics: Spearman rank correlation, Wilcoxon
signed-rank (normal approximation with tie correction), and descriptive
summaries. Pure functions, thread-safe."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from scipy.stats import t as _t_dist


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    n: int
    p_value: float


@dataclass(frozen=True)
class WilcoxonResult:
    w: float
    z: float
    p_value: float
    n_effective: int


def _ranks(values: Sequence[float]) -> list[float]:
    """Ranks starting at 1, ties receiving the average of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j + 2) / 2  # positions are 1-based
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def mean(values: Sequence[float]) -> float:
    if not values:
        raise ValueError("empty input")
    return sum(values) / len(values)


def _pearson(x: Sequence[float], y: Sequence[float]) -> float:
    mx, my = mean(x), mean(y)
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        raise ValueError("zero-variance input")
    return sxy / math.sqrt(sxx * syy)


def spearman(x: Sequence[float], y: Sequence[float]) -> SpearmanResult:
    """Rank correlation with average-rank ties; p from the t approximation."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 3:
        raise ValueError(f"need at least 3 pairs, got {n}")
    rho = _pearson(_ranks(x), _ranks(y))
    if abs(rho) >= 1.0:
        p = 0.0
    else:
        t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
        p = 2.0 * float(_t_dist.sf(abs(t), n - 2))
    return SpearmanResult(rho=rho, n=n, p_value=p)


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def wilcoxon_signed_rank(before: Sequence[float], after: Sequence[float]) -> WilcoxonResult:
    """Paired test on after - before; zero differences are dropped.

    W = min(W+, W-); Z uses the tie-corrected normal approximation with a
    continuity correction of 0.5 toward the mean, and the two-sided p
    comes from the normal CDF. The correction keeps the approximation
    within the advertised 0.02 of exact enumeration for paired samples of
    9-10 untied differences.
    """
    if len(before) != len(after):
        raise ValueError(f"length mismatch: {len(before)} vs {len(after)}")
    diffs = [a - b for b, a in zip(before, after) if a != b]
    m = len(diffs)
    if m == 0:
        raise ValueError("all differences are zero")

    abs_ranks = _ranks([abs(d) for d in diffs])
    w_plus = sum(r for d, r in zip(diffs, abs_ranks) if d > 0)
    w_minus = sum(r for d, r in zip(diffs, abs_ranks) if d < 0)
    w = min(w_plus, w_minus)

    mu = m * (m + 1) / 4.0
    var = m * (m + 1) * (2 * m + 1) / 24.0
    tie_sizes: dict[float, int] = {}
    for d in diffs:
        tie_sizes[abs(d)] = tie_sizes.get(abs(d), 0) + 1
    var -= sum(t**3 - t for t in tie_sizes.values()) / 48.0
    sd = math.sqrt(var)
    if sd > 0:
        continuity = 0.5 if w > mu else -0.5 if w < mu else 0.0
        z = (w - mu - continuity) / sd
    else:
        z = 0.0
    p = 2.0 * _norm_sf(abs(z))
    return WilcoxonResult(w=w, z=z, p_value=min(p, 1.0), n_effective=m)


def descriptive(values: Sequence[float]) -> dict:
    """Mean, population SD, median, and interpolated-quartile IQR."""
    if not values:
        raise ValueError("empty input")
    data = sorted(values)
    n = len(data)
    mu = mean(data)
    sd = math.sqrt(sum((v - mu) ** 2 for v in data) / n)
    return {
        "mean": mu,
        "sd": sd,
        "median": _quantile(data, 0.5),
        "iqr": _quantile(data, 0.75) - _quantile(data, 0.25),
    }


def _quantile(sorted_vals: Sequence[float], q: float) -> float:
    """Linear interpolation between order statistics (numpy's default)."""
    n = len(sorted_vals)
    if n == 1:
        return float(sorted_vals[0])
    pos = q * (n - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return sorted_vals[lo] * (1.0 - frac) + sorted_vals[hi] * frac
