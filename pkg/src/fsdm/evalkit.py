"""Agreement metrics at 5/4/3/2-class granularity, overnight sleep
statistics, and Bland-Altman analysis.

Conventions (documented because the literature varies): WASO excludes
terminal wake after the last sleep epoch; classes absent from both
prediction and reference contribute F1 = 1; Cohen's kappa is 0 when the
chance agreement is already 1 (single class in both marginals).
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .hypno import Hypnogram, SleepStage

EPOCH_MIN = 0.5


class MergeScheme(Enum):
    FIVE = "five"
    FOUR = "four"    # N1 and N2 merged
    THREE = "three"  # all NREM merged
    TWO = "two"      # sleep vs wake


_MERGE_MAPS = {
    MergeScheme.FIVE: np.array([0, 1, 2, 3, 4]),
    MergeScheme.FOUR: np.array([0, 1, 1, 2, 3]),
    MergeScheme.THREE: np.array([0, 1, 1, 1, 2]),
    MergeScheme.TWO: np.array([0, 1, 1, 1, 1]),
}

_N_CLASSES = {
    MergeScheme.FIVE: 5,
    MergeScheme.FOUR: 4,
    MergeScheme.THREE: 3,
    MergeScheme.TWO: 2,
}


def merge_classes(h: Hypnogram, scheme: MergeScheme) -> np.ndarray:
    """Relabel stages under the merge scheme, as an integer sequence."""
    return _MERGE_MAPS[scheme][h.to_indices()]


def _masked_labels(pred: Hypnogram, ref: Hypnogram, scheme: MergeScheme,
                   valid_mask: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    a = merge_classes(pred, scheme)
    b = merge_classes(ref, scheme)
    if a.shape != b.shape:
        raise ValueError("prediction and reference lengths differ")
    if valid_mask is not None:
        valid_mask = np.asarray(valid_mask, dtype=bool)
        if valid_mask.shape != a.shape:
            raise ValueError("mask length mismatch")
        a, b = a[valid_mask], b[valid_mask]
    if a.size == 0:
        raise ValueError("no valid epochs to score")
    return a, b


def accuracy(pred: Hypnogram, ref: Hypnogram, scheme: MergeScheme = MergeScheme.FIVE,
             valid_mask: np.ndarray | None = None) -> float:
    a, b = _masked_labels(pred, ref, scheme, valid_mask)
    return float(np.mean(a == b))


def cohens_kappa(pred: Hypnogram, ref: Hypnogram, scheme: MergeScheme = MergeScheme.FIVE,
                 valid_mask: np.ndarray | None = None) -> float:
    a, b = _masked_labels(pred, ref, scheme, valid_mask)
    k = _N_CLASSES[scheme]
    p_o = float(np.mean(a == b))
    pa = np.bincount(a, minlength=k) / a.size
    pb = np.bincount(b, minlength=k) / b.size
    p_e = float(pa @ pb)
    if 1.0 - p_e < 1e-12:
        return 0.0
    return (p_o - p_e) / (1.0 - p_e)


def f1_per_class(pred: Hypnogram, ref: Hypnogram,
                 valid_mask: np.ndarray | None = None) -> np.ndarray:
    """Five per-stage F1 scores; a stage absent from both sides scores 1."""
    a, b = _masked_labels(pred, ref, MergeScheme.FIVE, valid_mask)
    out = np.empty(5)
    for c in range(5):
        tp = int(np.sum((a == c) & (b == c)))
        fp = int(np.sum((a == c) & (b != c)))
        fn = int(np.sum((a != c) & (b == c)))
        if tp + fp + fn == 0:
            out[c] = 1.0
        else:
            out[c] = 2 * tp / (2 * tp + fp + fn)
    return out


@dataclass(frozen=True)
class StatReport:
    tst_min: float
    sol_min: float | None
    waso_min: float
    rem_latency_min: float | None
    time_in_rem_min: float
    w_min: float
    n1_min: float
    n2_min: float
    n3_min: float
    r_min: float


def overnight_stats(h: Hypnogram, valid_epochs: int) -> StatReport:
    """Overnight statistics from the first valid_epochs epochs.

    SOL counts epochs before the first non-wake epoch; WASO counts wake
    epochs strictly after sleep onset and at-or-before the last sleep
    epoch; REM latency runs from sleep onset to the first REM epoch and
    is absent without REM.  An all-wake recording has no sleep onset.
    """
    if valid_epochs < 1:
        raise ValueError("valid_epochs must be at least 1")
    stages = h.to_indices()[:valid_epochs]
    counts = np.bincount(stages, minlength=5)
    minutes = counts * EPOCH_MIN
    sleep_idx = np.flatnonzero(stages != SleepStage.W)
    tst = float(sleep_idx.size * EPOCH_MIN)
    time_in_rem = float(minutes[SleepStage.R])
    if sleep_idx.size == 0:
        return StatReport(
            tst_min=0.0, sol_min=None, waso_min=0.0, rem_latency_min=None,
            time_in_rem_min=0.0,
            w_min=float(minutes[0]), n1_min=float(minutes[1]), n2_min=float(minutes[2]),
            n3_min=float(minutes[3]), r_min=float(minutes[4]),
        )
    onset, last = int(sleep_idx[0]), int(sleep_idx[-1])
    sol = onset * EPOCH_MIN
    waso = float(np.sum(stages[onset + 1:last + 1] == SleepStage.W) * EPOCH_MIN)
    rem_idx = np.flatnonzero(stages == SleepStage.R)
    rem_latency = float((rem_idx[0] - onset) * EPOCH_MIN) if rem_idx.size else None
    return StatReport(
        tst_min=tst, sol_min=sol, waso_min=waso, rem_latency_min=rem_latency,
        time_in_rem_min=time_in_rem,
        w_min=float(minutes[0]), n1_min=float(minutes[1]), n2_min=float(minutes[2]),
        n3_min=float(minutes[3]), r_min=float(minutes[4]),
    )


def aggregate_stat(samples: Sequence[StatReport], stat_name: str) -> float | None:
    """Median of a statistic over per-sample reports.

    Absent (None) values are excluded; the result is None when the
    statistic is absent from every sample.  Even counts take the
    midpoint of the two central order statistics.
    """
    if len(samples) == 0:
        raise ValueError("at least one sample is required")
    values = [getattr(r, stat_name) for r in samples]
    present = [v for v in values if v is not None]
    if not present:
        return None
    return float(statistics.median(present))


def bland_altman(pairs: Sequence[tuple[float, float]]) -> dict[str, float]:
    """Bias and 95% limits of agreement of (estimate − reference) pairs."""
    if len(pairs) < 2:
        raise ValueError("Bland-Altman requires at least 2 pairs")
    d = np.array([est - ref for est, ref in pairs], dtype=np.float64)
    bias = float(d.mean())
    sd = float(d.std(ddof=1))
    return {"bias": bias, "loa_low": bias - 1.96 * sd, "loa_high": bias + 1.96 * sd}


def report_to_dict(report: StatReport) -> dict:
    return {
        "tst_min": report.tst_min,
        "sol_min": report.sol_min,
        "waso_min": report.waso_min,
        "rem_latency_min": report.rem_latency_min,
        "time_in_rem_min": report.time_in_rem_min,
        "w_min": report.w_min,
        "n1_min": report.n1_min,
        "n2_min": report.n2_min,
        "n3_min": report.n3_min,
        "r_min": report.r_min,
    }
