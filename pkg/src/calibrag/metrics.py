"""Calibration and discrimination metrics over (confidence, outcome) pairs.

Expected calibration error uses M equal-width bins over [0, 1]; the last
bin is closed on the right so a confidence of exactly 1.0 is counted
once.  Empty bins contribute zero.  AUROC is the Mann-Whitney statistic
with half credit for ties, computed from average ranks; it agrees
exactly with brute-force pair counting.  Negative log-likelihood clamps
probabilities at 1e-12 before the log.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

PROB_CLAMP = 1e-12


class MetricError(ValueError):
    """Raised for malformed metric inputs."""


def _validate(confidences, outcomes) -> tuple[np.ndarray, np.ndarray]:
    conf = np.asarray(confidences, dtype=np.float64)
    out = np.asarray(outcomes)
    if conf.ndim != 1 or conf.size == 0:
        raise MetricError("confidences must be a non-empty 1-d sequence")
    if out.shape != conf.shape:
        raise MetricError("outcomes must match confidences in length")
    if np.any(~np.isfinite(conf)) or np.any(conf < 0.0) or np.any(conf > 1.0):
        raise MetricError("confidences must lie in [0, 1]")
    if not np.all((out == 0) | (out == 1)):
        raise MetricError("outcomes must be 0 or 1")
    return conf, out.astype(np.float64)


def _bin_indices(conf: np.ndarray, bins: int) -> np.ndarray:
    idx = np.floor(conf * bins).astype(int)
    return np.minimum(idx, bins - 1)


def ece(confidences, outcomes, bins: int = 10) -> float:
    """Expected calibration error with M equal-width bins."""
    conf, out = _validate(confidences, outcomes)
    if bins < 1:
        raise MetricError(f"bins must be >= 1, got {bins}")
    idx = _bin_indices(conf, bins)
    n = conf.size
    total = 0.0
    for m in range(bins):
        mask = idx == m
        count = int(mask.sum())
        if count == 0:
            continue
        gap = abs(float(out[mask].mean()) - float(conf[mask].mean()))
        total += (count / n) * gap
    return total


@dataclass(frozen=True)
class BinStats:
    lo: float
    hi: float
    count: int
    mean_confidence: float  # nan when the bin is empty
    mean_accuracy: float  # nan when the bin is empty


def reliability_data(confidences, outcomes, bins: int = 10) -> list[BinStats]:
    """Per-bin counts and means; ECE is reconstructible from these."""
    conf, out = _validate(confidences, outcomes)
    if bins < 1:
        raise MetricError(f"bins must be >= 1, got {bins}")
    idx = _bin_indices(conf, bins)
    stats = []
    for m in range(bins):
        mask = idx == m
        count = int(mask.sum())
        stats.append(
            BinStats(
                lo=m / bins,
                hi=(m + 1) / bins,
                count=count,
                mean_confidence=float(conf[mask].mean()) if count else math.nan,
                mean_accuracy=float(out[mask].mean()) if count else math.nan,
            )
        )
    return stats


def write_reliability_csv(stats: list[BinStats], path: str) -> None:
    """Plot-ready CSV: bin_lo,bin_hi,count,mean_conf,mean_acc."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count", "mean_conf", "mean_acc"])
        for b in stats:
            writer.writerow(
                [
                    b.lo,
                    b.hi,
                    b.count,
                    b.mean_confidence if b.count else "",
                    b.mean_accuracy if b.count else "",
                ]
            )


def brier(confidences, outcomes) -> float:
    """Mean squared gap between confidence and outcome."""
    conf, out = _validate(confidences, outcomes)
    return float(np.mean(np.square(conf - out)))


def nll(confidences, outcomes) -> float:
    """Mean negative log-likelihood of the realized outcomes."""
    conf, out = _validate(confidences, outcomes)
    p = np.where(out == 1.0, conf, 1.0 - conf)
    return float(-np.mean(np.log(np.clip(p, PROB_CLAMP, None))))


def accuracy(outcomes) -> float:
    out = np.asarray(outcomes, dtype=np.float64)
    if out.size == 0:
        raise MetricError("outcomes must be non-empty")
    return float(out.mean())


def auroc(confidences, outcomes) -> float:
    """Mann-Whitney AUROC with 0.5 credit for tied confidences.

    Raises MetricError when either class is absent.
    """
    conf, out = _validate(confidences, outcomes)
    n_pos = int(out.sum())
    n_neg = out.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("auroc undefined: one outcome class is absent")

    order = np.argsort(conf, kind="mergesort")
    sorted_conf = conf[order]
    ranks = np.empty(conf.size, dtype=np.float64)
    i = 0
    while i < conf.size:
        j = i
        while j + 1 < conf.size and sorted_conf[j + 1] == sorted_conf[i]:
            j += 1
        # average rank for the tie group, 1-based
        ranks[order[i : j + 1]] = 0.5 * ((i + 1) + (j + 1))
        i = j + 1

    rank_sum = float(ranks[out == 1.0].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def cumulative_accuracy_at_k(outcomes_per_task: list, k_max: int) -> np.ndarray:
    """Fraction of tasks with any success in the top-k, for k = 1..k_max.

    Each task must supply at least k_max ranked outcomes; a shorter list
    raises MetricError naming the offending task position.  The result is
    non-decreasing in k.
    """
    if k_max < 1:
        raise MetricError(f"k_max must be >= 1, got {k_max}")
    if not outcomes_per_task:
        raise MetricError("outcomes_per_task must be non-empty")
    rows = []
    for pos, outcomes in enumerate(outcomes_per_task):
        row = np.asarray(outcomes, dtype=np.float64)
        if row.size < k_max:
            raise MetricError(
                f"task at position {pos} has {row.size} outcomes, need >= {k_max}"
            )
        if not np.all((row == 0) | (row == 1)):
            raise MetricError(f"task at position {pos} has non-binary outcomes")
        rows.append(row[:k_max])
    grid = np.stack(rows)
    any_hit = np.maximum.accumulate(grid, axis=1)
    return any_hit.mean(axis=0)
