"""Labeled-data model: window labeling, subject-wise splits, SMOTE, pipeline.

Epoch labels follow the any-overlap rule: a 4-s window is an artifact window
iff a ground-truth interval overlaps it at all, and an epoch is an artifact
epoch iff any of its five windows is.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .signal import (
    ARTIFACT,
    CLEAN,
    EPOCH_SECONDS,
    TARGET_RATE_HZ,
    WINDOW_SECONDS,
    WINDOWS_PER_EPOCH,
    Epoch,
    Recording,
    resample,
    segment_epochs,
    trim_head,
)

HEAD_TRIM_SECONDS = 20.0


@dataclass(frozen=True)
class TruthInterval:
    """Exact [start_s, end_s) extent of one injected artifact."""

    start_s: float
    end_s: float
    kind: str = "artifact"

    def __post_init__(self):
        if not self.end_s > self.start_s:
            raise ValueError(f"empty interval [{self.start_s}, {self.end_s})")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass
class LabeledSet:
    """Epochs plus per-epoch subject ids for one split."""

    epochs: list
    subject_ids: list
    split: str

    def __post_init__(self):
        if len(self.epochs) != len(self.subject_ids):
            raise ValueError("epochs and subject_ids must align")
        if self.split not in ("train", "validation", "test"):
            raise ValueError(f"unknown split {self.split!r}")

    def artifact_fraction(self) -> float:
        labels = [e.label for e in self.epochs]
        return labels.count(ARTIFACT) / len(labels) if labels else 0.0


def assign_window_labels(epoch: Epoch, truth_intervals) -> Epoch:
    """Label an epoch's five 4-s windows from epoch-local truth intervals.

    A window is an artifact window iff some interval overlaps it at all;
    the epoch label is the OR over window labels.
    """
    intervals = [
        iv if isinstance(iv, TruthInterval) else TruthInterval(*iv) for iv in truth_intervals
    ]
    for iv in intervals:
        if iv.start_s < 0 or iv.end_s > EPOCH_SECONDS:
            raise ValueError(
                f"interval [{iv.start_s}, {iv.end_s}) outside epoch range [0, {EPOCH_SECONDS})"
            )
    window_labels = []
    for k in range(WINDOWS_PER_EPOCH):
        w_lo, w_hi = k * WINDOW_SECONDS, (k + 1) * WINDOW_SECONDS
        hit = any(iv.start_s < w_hi and iv.end_s > w_lo for iv in intervals)
        window_labels.append(ARTIFACT if hit else CLEAN)
    label = ARTIFACT if ARTIFACT in window_labels else CLEAN
    return replace(epoch, label=label, window_labels=tuple(window_labels))


def split_by_subject(sets, fractions=(0.58, 0.17, 0.25), seed=None):
    """Partition (subject_id, epochs) pairs into subject-disjoint splits.

    `fractions` are (train, validation, test) targets over subjects; realized
    fractions land within one subject's worth of the targets. With a seed the
    subject order is shuffled first, otherwise subjects are taken sorted by id.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    by_subject = {}
    for subject_id, epochs in sets:
        by_subject.setdefault(subject_id, []).extend(epochs)
    if len(by_subject) < 3:
        raise ValueError("need at least 3 subjects for a 3-way subject-wise split")
    order = sorted(by_subject)
    if seed is not None:
        rng = np.random.default_rng(seed)
        order = [order[i] for i in rng.permutation(len(order))]
    n = len(order)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_train = max(1, min(n_train, n - 2))
    n_val = max(1, min(n_val, n - n_train - 1))
    groups = {
        "train": order[:n_train],
        "validation": order[n_train : n_train + n_val],
        "test": order[n_train + n_val :],
    }
    out = []
    for split, subjects in groups.items():
        epochs, subject_ids = [], []
        for sid in subjects:
            for ep in by_subject[sid]:
                epochs.append(ep)
                subject_ids.append(sid)
        out.append(LabeledSet(epochs, subject_ids, split))
    return tuple(out)


def smote_oversample(minority, k: int, target_count: int, seed: int) -> np.ndarray:
    """Generate `target_count` synthetic minority vectors by SMOTE interpolation.

    Each synthetic sample is s = x + lam * (nn - x) with lam ~ Uniform[0, 1]
    and nn one of x's k nearest minority neighbors (Euclidean). Deterministic
    under `seed`; draw order is: base indices, neighbor choices, lambdas.
    """
    x = np.asarray(minority, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("minority must be a 2-D array of vectors")
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n <= k:
        raise ValueError(f"need more than k={k} minority samples, got {n}")
    # k nearest neighbors, self excluded; stable sort pins tie order.
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, np.inf)
    neighbors = np.argsort(d2, axis=1, kind="stable")[:, :k]

    rng = np.random.default_rng(seed)
    base = rng.integers(0, n, size=target_count)
    choice = rng.integers(0, k, size=target_count)
    lam = rng.random(target_count)
    nn = neighbors[base, choice]
    return x[base] + lam[:, None] * (x[nn] - x[base])


def balance_with_smote(vectors: np.ndarray, labels: np.ndarray, k: int = 5, seed: int = 0):
    """Equalize class counts by SMOTE-augmenting the minority class.

    Returns (vectors, labels) with synthetic minority samples appended so both
    classes have exactly the majority count. When the minority class is too
    small for k neighbors, k shrinks to what the data supports (plain
    duplication for a single-sample minority) so desk-scale sets stay usable.
    """
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size != 2:
        raise ValueError("balance_with_smote expects exactly two classes")
    minority_class = classes[np.argmin(counts)]
    deficit = int(counts.max() - counts.min())
    if deficit == 0:
        return np.asarray(vectors), labels
    minority = np.asarray(vectors)[labels == minority_class]
    if len(minority) == 1:
        synthetic = np.repeat(minority, deficit, axis=0)
    else:
        k_eff = min(k, len(minority) - 1)
        synthetic = smote_oversample(minority, k=k_eff, target_count=deficit, seed=seed)
    out_x = np.concatenate([np.asarray(vectors), synthetic], axis=0)
    out_y = np.concatenate([labels, np.full(deficit, minority_class, dtype=labels.dtype)])
    return out_x, out_y


def recording_to_epochs(
    rec: Recording,
    truth=None,
    trim_s: float = HEAD_TRIM_SECONDS,
    target_hz: float = TARGET_RATE_HZ,
):
    """Standard preprocessing: trim head, resample to 128 Hz, epoch, label.

    `truth` holds absolute-time TruthIntervals (or dicts with start_s/end_s);
    they are intersected with each epoch and converted to epoch-local time
    before window labeling. Without truth, epochs come back unlabeled.
    """
    rec = trim_head(rec, trim_s) if trim_s > 0 else rec
    rec = resample(rec, target_hz)
    epochs = segment_epochs(rec)
    if truth is None:
        return epochs
    intervals = []
    for iv in truth:
        if isinstance(iv, dict):
            intervals.append(TruthInterval(iv["start_s"], iv["end_s"], iv.get("kind", "artifact")))
        else:
            intervals.append(iv)
    labeled = []
    for ep in epochs:
        ep_lo = rec.start_offset_s + ep.epoch_index * EPOCH_SECONDS
        ep_hi = ep_lo + EPOCH_SECONDS
        local = []
        for iv in intervals:
            lo = max(iv.start_s, ep_lo)
            hi = min(iv.end_s, ep_hi)
            if hi > lo:
                local.append(TruthInterval(lo - ep_lo, hi - ep_lo, iv.kind))
        labeled.append(assign_window_labels(ep, local))
    return labeled


def epochs_to_arrays(epochs, dtype=np.float32):
    """Stack labeled epochs into (X, y) with y=1 for artifact epochs."""
    keep = [e for e in epochs if e.label != "unlabeled"]
    if not keep:
        raise ValueError("no labeled epochs")
    x = np.stack([e.values for e in keep]).astype(dtype)
    y = np.array([1 if e.label == ARTIFACT else 0 for e in keep], dtype=np.int64)
    return x, y
