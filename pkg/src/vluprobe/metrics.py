"""Statistics for probe evaluation: correlations, accuracy over label sets,
micro-averaged recall@k with answer equivalence, ROC-AUC, and seeded
percentile-bootstrap confidence intervals.

Conventions frozen here:
- Spearman uses average ranks for ties.
- Kendall is the tie-corrected tau-b.
- ROC-AUC is the Mann-Whitney statistic; tied score pairs credit 0.5.
- Bootstrap resample b draws its indices from the counter-derived SplitMix64
  stream counter_stream(seed, b); index = floor(u53 * n_items). The interval
  is the linearly interpolated ((1-level)/2, 1-(1-level)/2) percentile pair of
  the resampled statistics.
"""

from __future__ import annotations

import math
from typing import Callable, Collection, Sequence

from .errors import AllTied, EmptyGold, LengthMismatch, SingleClass, ZeroVariance
from .rng import counter_stream


def _check_paired(xs: Sequence[float], ys: Sequence[float], min_len: int = 2) -> None:
    if len(xs) != len(ys):
        raise LengthMismatch(f"{len(xs)} vs {len(ys)}")
    if len(xs) < min_len:
        raise LengthMismatch(f"need at least {min_len} pairs, got {len(xs)}")


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    _check_paired(xs, ys)
    n = len(xs)
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    syy = math.fsum((y - my) ** 2 for y in ys)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVariance("constant input")
    r = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the mean of their rank block."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    _check_paired(xs, ys)
    return pearson(average_ranks(xs), average_ranks(ys))


def _tie_term(values: Sequence) -> int:
    """Sum over tie groups of t*(t-1)/2."""
    total = 0
    svals = sorted(values)
    i = 0
    while i < len(svals):
        j = i
        while j + 1 < len(svals) and svals[j + 1] == svals[i]:
            j += 1
        t = j - i + 1
        total += t * (t - 1) // 2
        i = j + 1
    return total


def _count_inversions(seq: list[float]) -> int:
    """Strict inversions (i < j, seq[i] > seq[j]) via merge sort."""
    if len(seq) < 2:
        return 0
    mid = len(seq) // 2
    left, right = seq[:mid], seq[mid:]
    inv = _count_inversions(left) + _count_inversions(right)
    merged = []
    i = j = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            inv += len(left) - i
            merged.append(right[j])
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    seq[:] = merged
    return inv


def kendall_tau_b(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Tie-corrected tau-b in O(n log n): sort by (x, y), count strict y
    inversions (exactly the discordant pairs), then apply the tie correction."""
    _check_paired(xs, ys)
    n = len(xs)
    tot = n * (n - 1) // 2
    ties_x = _tie_term(xs)
    ties_y = _tie_term(ys)
    if ties_x == tot or ties_y == tot:
        raise AllTied("one side is entirely tied")
    pairs = sorted(zip(xs, ys))
    ties_xy = _tie_term(pairs)  # groups of identical (x, y)
    discordant = _count_inversions([y for _, y in pairs])
    concordant = tot - ties_x - ties_y + ties_xy - discordant
    denom = math.sqrt((tot - ties_x) * (tot - ties_y))
    tau = (concordant - discordant) / denom
    return max(-1.0, min(1.0, tau))


def accuracy(predictions: Sequence[str], golds: Sequence[Collection[str]]) -> float:
    if len(predictions) != len(golds):
        raise LengthMismatch(f"{len(predictions)} vs {len(golds)}")
    if not predictions:
        raise LengthMismatch("need at least 1 prediction")
    for i, g in enumerate(golds):
        if not g:
            raise EmptyGold(i)
    hits = sum(1 for p, g in zip(predictions, golds) if p in g)
    return hits / len(predictions)


def recall_at_k(
    rankings: Sequence[Sequence[str]],
    golds: Sequence[str],
    k: int,
    equivalence: Sequence[Collection[str]] = (),
) -> float:
    """Fraction of questions whose gold, or any member of its equivalence
    class, appears among the top k of its ranking (micro-average per question)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(rankings) != len(golds):
        raise LengthMismatch(f"{len(rankings)} vs {len(golds)}")
    hits = 0
    for ranking, gold in zip(rankings, golds):
        accepted = {gold}
        for cls in equivalence:
            if gold in cls:
                accepted |= set(cls)
        if any(label in accepted for label in ranking[:k]):
            hits += 1
    return hits / len(rankings) if rankings else 0.0


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC via average ranks; tied pairs credit 0.5 exactly."""
    if len(scores) != len(labels):
        raise LengthMismatch(f"{len(scores)} vs {len(labels)}")
    n_pos = sum(1 for v in labels if v == 1)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("need both classes")
    ranks = average_ranks(scores)
    rank_sum_pos = math.fsum(r for r, v in zip(ranks, labels) if v == 1)
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _percentile(sorted_vals: Sequence[float], q: float) -> float:
    """Linear-interpolation percentile of pre-sorted values, q in [0, 1]."""
    if not sorted_vals:
        raise ValueError("empty sample")
    pos = q * (len(sorted_vals) - 1)
    lo = math.floor(pos)
    hi = math.ceil(pos)
    if lo == hi:
        return sorted_vals[lo]
    frac = pos - lo
    return sorted_vals[lo] * (1.0 - frac) + sorted_vals[hi] * frac


def bootstrap_ci(
    statistic: Callable[[Sequence[int]], float],
    n_items: int,
    n_boot: int = 200,
    level: float = 0.95,
    seed: int = 0,
) -> tuple[float, float]:
    """Seeded percentile bootstrap over item indices.

    statistic receives the resampled index list (length n_items, drawn with
    replacement). Resample b is independent given (seed, b), so resamples may
    run in any order or in parallel.
    """
    if n_items < 1:
        raise ValueError("n_items must be >= 1")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    stats = []
    for b in range(n_boot):
        rng = counter_stream(seed, b)
        idx = [rng.next_below(n_items) for _ in range(n_items)]
        stats.append(statistic(idx))
    stats.sort()
    alpha = (1.0 - level) / 2.0
    return (_percentile(stats, alpha), _percentile(stats, 1.0 - alpha))
