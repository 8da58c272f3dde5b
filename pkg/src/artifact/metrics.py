"""Evaluation: confusion matrices, grid ROC/AUC, operating points, and
attention-map localization scoring against 4-second window labels.

The ROC sweep is grid-based (thresholds 0 to 1 in 0.01 steps, prediction is
score >= threshold) to mirror the evaluation protocol literally; an exact
rank-based AUC is reported alongside for diagnostics. The best operating
point maximizes the geometric mean of sensitivity and specificity, breaking
ties toward the lowest threshold (favoring sensitivity).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .nn.attention import AttentionMap
from .signal import EPOCH_SECONDS, WINDOW_SECONDS, WINDOWS_PER_EPOCH


@dataclass
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        for v in (self.tp, self.fp, self.tn, self.fn):
            if v < 0:
                raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def sensitivity_specificity(cm: ConfusionMatrix):
    """se = TP/(TP+FN), sp = TN/(TN+FP); errors when a class is absent."""
    if cm.tp + cm.fn == 0:
        raise ValueError("no positive cases: sensitivity undefined")
    if cm.tn + cm.fp == 0:
        raise ValueError("no negative cases: specificity undefined")
    return cm.tp / (cm.tp + cm.fn), cm.tn / (cm.tn + cm.fp)


def confusion_from_flags(flags: np.ndarray, labels: np.ndarray) -> ConfusionMatrix:
    flags = np.asarray(flags, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if flags.shape != labels.shape:
        raise ValueError("flags and labels must align")
    return ConfusionMatrix(
        tp=int(np.sum(flags & labels)),
        fp=int(np.sum(flags & ~labels)),
        tn=int(np.sum(~flags & ~labels)),
        fn=int(np.sum(~flags & labels)),
    )


@dataclass
class RocCurve:
    points: list          # (threshold, se, sp) per grid threshold
    auc: float            # trapezoid over the grid sweep
    auc_exact: float      # rank-based (Mann-Whitney) AUC, for diagnostics
    best: tuple           # (threshold, se, sp) at max geometric mean

    def to_dict(self) -> dict:
        return {
            "points": [[float(t), float(se), float(sp)] for t, se, sp in self.points],
            "auc": self.auc,
            "auc_exact": self.auc_exact,
            "best": {"threshold": self.best[0], "se": self.best[1], "sp": self.best[2]},
        }


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    return np.round(np.arange(lo, hi + step / 2, step), 10)


def exact_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Rank-based AUC (Mann-Whitney U with midranks for ties)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def roc_auc(scores, labels, step: float = 0.01) -> RocCurve:
    """Grid ROC over thresholds 0..1; prediction is score >= threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must align")
    if labels.all() or not labels.any():
        raise ValueError("both classes must be present")
    points = []
    for t in _grid(0.0, 1.0, step):
        cm = confusion_from_flags(scores >= t, labels)
        se, sp = sensitivity_specificity(cm)
        points.append((float(t), se, sp))
    # Walk the curve by descending threshold so fpr and tpr are both
    # non-decreasing along the integration path, (0,0) -> (1,1).
    by_desc_threshold = points[::-1]
    fpr = np.array([1.0 - sp for _, _, sp in by_desc_threshold])
    tpr = np.array([se for _, se, _ in by_desc_threshold])
    auc = float(np.trapezoid(tpr, fpr))
    best = best_operating_point(points)
    return RocCurve(points, auc, exact_auc(scores, labels), best)


def best_operating_point(points) -> tuple:
    """(threshold, se, sp) maximizing sqrt(se*sp); ties pick the lowest threshold."""
    best = None
    best_g = -1.0
    for t, se, sp in sorted(points, key=lambda p: p[0]):
        g = float(np.sqrt(se * sp))
        if g > best_g + 1e-15:
            best_g = g
            best = (t, se, sp)
    return best


# ---------------------------------------------------------------------------
# Attention-map localization


def localize(amap: AttentionMap, threshold: float) -> list:
    """Maximal runs of map steps at/above the threshold, as [start_s, end_s).

    Only the non-excluded region is considered. Degenerate (flat) maps carry
    no localization signal and yield no intervals. The minimum reportable
    duration is one feature step.
    """
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    if amap.degenerate:
        return []
    values = amap.values
    n = values.size
    n_edge = amap.edge_steps
    active = np.zeros(n, dtype=bool)
    active[n_edge : n - n_edge] = values[n_edge : n - n_edge] >= threshold
    dt = amap.time_scale_s_per_step
    intervals = []
    start = None
    for i in range(n + 1):
        if i < n and active[i]:
            if start is None:
                start = i
        elif start is not None:
            intervals.append((start * dt, i * dt))
            start = None
    return intervals


def interval_credits_window(start_s: float, end_s: float, window_index: int) -> bool:
    """Whether one prediction counts as correct for a labeled artifact window.

    Rule 1: the prediction covers more than half of the 4-s window (> 2 s).
    Rule 2: more than half of the prediction's own duration lies inside the
    window (covers short or edge-spanning predictions). Either rule suffices.
    """
    w_lo = window_index * WINDOW_SECONDS
    w_hi = w_lo + WINDOW_SECONDS
    overlap = min(end_s, w_hi) - max(start_s, w_lo)
    if overlap <= 0:
        return False
    if overlap > 0.5 * WINDOW_SECONDS:
        return True
    return overlap > 0.5 * (end_s - start_s)


def _validate_intervals(intervals):
    for start_s, end_s in intervals:
        if start_s < 0 or end_s > EPOCH_SECONDS or end_s <= start_s:
            raise ValueError(f"interval [{start_s}, {end_s}) outside epoch bounds")


def window_flags_from_intervals(intervals) -> list:
    """Windows touched by any predicted interval (detection flags for display)."""
    _validate_intervals(intervals)
    flags = []
    for k in range(WINDOWS_PER_EPOCH):
        w_lo, w_hi = k * WINDOW_SECONDS, (k + 1) * WINDOW_SECONDS
        flags.append(any(min(e, w_hi) - max(s, w_lo) > 0 for s, e in intervals))
    return flags


def score_localization(intervals, window_labels) -> ConfusionMatrix:
    """Window-level confusion for one epoch's predicted intervals.

    A labeled artifact window is a TP when some interval credits it under the
    overlap rules, otherwise an FN. A clean window is an FP when any interval
    touches it at all, otherwise a TN; the any-overlap FP rule keeps the FP
    count monotone non-increasing in the localization threshold. All five
    windows of the epoch are scored.
    """
    if len(window_labels) != WINDOWS_PER_EPOCH:
        raise ValueError(f"expected {WINDOWS_PER_EPOCH} window labels")
    _validate_intervals(intervals)
    touched = window_flags_from_intervals(intervals)
    cm = ConfusionMatrix()
    for k, lab in enumerate(window_labels):
        if lab == "artifact":
            if any(interval_credits_window(s, e, k) for s, e in intervals):
                cm.tp += 1
            else:
                cm.fn += 1
        else:
            if touched[k]:
                cm.fp += 1
            else:
                cm.tn += 1
    return cm


@dataclass
class LocalizationResult:
    threshold: float
    se: float
    sp: float
    confusion: ConfusionMatrix
    predicted_intervals: list = field(default_factory=list)  # per-epoch interval lists


def localization_confusion(maps, window_labels_list, threshold: float):
    """Aggregate window-level confusion over selected epochs at one threshold."""
    if len(maps) != len(window_labels_list):
        raise ValueError("maps and window labels must align")
    cm = ConfusionMatrix()
    per_epoch = []
    for amap, wl in zip(maps, window_labels_list):
        intervals = localize(amap, threshold)
        per_epoch.append(intervals)
        cm = cm + score_localization(intervals, wl)
    return cm, per_epoch


def sweep_localization_threshold(maps, window_labels_list, lo: float = 0.0, hi: float = 1.0,
                                 step: float = 0.01):
    """Tune the attention threshold by geometric mean of window-level se/sp.

    Returns (LocalizationResult at the best threshold, roc points list).
    The caller restricts `maps` to epochs the classifier predicted as
    artifact (true and false positives), matching the evaluation protocol.
    """
    points = []
    best = None
    best_g = -1.0
    for t in _grid(lo, hi, step):
        cm, per_epoch = localization_confusion(maps, window_labels_list, float(t))
        se, sp = sensitivity_specificity(cm)
        points.append((float(t), se, sp))
        g = float(np.sqrt(se * sp))
        if g > best_g + 1e-15:
            best_g = g
            best = LocalizationResult(float(t), se, sp, cm, per_epoch)
    return best, points
