"""Non-learning baseline detectors: spectral band-power and std-deviation z-score.

Both need whole-night context (a per-night baseline, or the z-score over all
windows), so neither is streaming-capable by design. They are pure functions
over a completed recording and parallelize across recordings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import (
    EPOCH_SECONDS,
    Recording,
    WINDOW_SECONDS,
    WINDOWS_PER_EPOCH,
    band_power,
    butterworth_bandpass,
    notch_filter,
    welch_psd,
)

NREM_STAGES = ("N1", "N2", "N3")
NOT_APPLICABLE = "not_applicable"
LOW_BAND = (0.75, 4.5)
HIGH_BAND = (20.0, 30.0)


@dataclass
class SpectralThresholdState:
    """Per-night NREM baseline band powers plus the exceedance multiplier.

    The baseline rule needs a margin: a mean alone is exceeded by roughly half
    the epochs, so an epoch is flagged only when its band power exceeds
    ``multiplier`` times the NREM mean. The multiplier (default 2.0) is our
    configuration, not a literature constant.
    """

    baseline_low: float
    baseline_high: float
    multiplier: float = 2.0

    def __post_init__(self):
        if self.baseline_low <= 0 or self.baseline_high <= 0:
            raise ValueError("baselines must be positive")


@dataclass
class StdDetectorConfig:
    window_s: float = WINDOW_SECONDS
    threshold_z: float = 1.0
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.window_s <= 0:
            raise ValueError("window_s must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def spectral_preprocess(rec: Recording, notch_hz: float = 50.0, band=(0.5, 40.0),
                        order: int = 4, q: float = 30.0) -> Recording:
    """Mains notch plus Butterworth band-pass, the expected detector input."""
    return butterworth_bandpass(notch_filter(rec, notch_hz, q), band[0], band[1], order)


def _epoch_band_powers(rec: Recording, seg_len: int = 512, overlap: float = 0.5):
    samples_per_epoch = int(round(EPOCH_SECONDS * rec.rate_hz))
    n_epochs = rec.samples.size // samples_per_epoch
    powers = np.empty((n_epochs, 2))
    for k in range(n_epochs):
        chunk = rec.samples[k * samples_per_epoch : (k + 1) * samples_per_epoch]
        ps = welch_psd(chunk, rec.rate_hz, seg_len=seg_len, overlap=overlap)
        powers[k, 0] = band_power(ps, *LOW_BAND)
        powers[k, 1] = band_power(ps, *HIGH_BAND)
    return powers


def spectral_detect(rec: Recording, stages: dict, multiplier: float = 2.0) -> list:
    """Flag epochs whose delta- or beta-band power exceeds the NREM baseline.

    `rec` must already be notch- and band-pass-filtered (spectral_preprocess).
    `stages` maps epoch_index -> stage; the baseline averages band powers over
    epochs staged N1/N2/N3, and Wake/REM epochs come back "not_applicable"
    because the method is undefined there.
    """
    powers = _epoch_band_powers(rec)
    n_epochs = powers.shape[0]
    nrem = [k for k in range(n_epochs) if stages.get(k) in NREM_STAGES]
    if not nrem:
        raise ValueError("no NREM epochs: spectral baseline undefined")
    state = SpectralThresholdState(
        baseline_low=float(np.mean(powers[nrem, 0])),
        baseline_high=float(np.mean(powers[nrem, 1])),
        multiplier=multiplier,
    )
    out = []
    for k in range(n_epochs):
        if stages.get(k) not in NREM_STAGES:
            out.append(NOT_APPLICABLE)
            continue
        hit = (
            powers[k, 0] > state.multiplier * state.baseline_low
            or powers[k, 1] > state.multiplier * state.baseline_high
        )
        out.append("artifact" if hit else "clean")
    return out


def window_zscores(rec: Recording, cfg: StdDetectorConfig = StdDetectorConfig()) -> np.ndarray:
    """Per-window z-scores of log standard deviation over the whole recording.

    These are invariant under positive amplitude scaling: a global gain turns
    into an additive log constant that the z-scoring removes.
    """
    win = int(round(cfg.window_s * rec.rate_hz))
    n_windows = rec.samples.size // win
    if n_windows < 1:
        raise ValueError("recording shorter than one window")
    chunks = rec.samples[: n_windows * win].reshape(n_windows, win)
    stds = chunks.std(axis=1)  # population std
    logs = np.log(stds + cfg.epsilon)
    sigma = logs.std()
    if sigma == 0:
        return np.zeros(n_windows)
    return (logs - logs.mean()) / sigma


def std_detect(rec: Recording, cfg: StdDetectorConfig = StdDetectorConfig()):
    """(window flags, epoch flags): window z > threshold, epoch = OR of its windows."""
    z = window_zscores(rec, cfg)
    window_flags = z > cfg.threshold_z
    n_epochs = window_flags.size // WINDOWS_PER_EPOCH
    epoch_flags = (
        window_flags[: n_epochs * WINDOWS_PER_EPOCH]
        .reshape(n_epochs, WINDOWS_PER_EPOCH)
        .any(axis=1)
    )
    return window_flags, epoch_flags


def sweep_std_threshold(rec: Recording, labels: np.ndarray, lo: float = 0.05, hi: float = 3.0,
                        step: float = 0.01, cfg: StdDetectorConfig = StdDetectorConfig()):
    """Tune threshold_z by maximizing the geometric mean of epoch-level se/sp.

    Returns (best_threshold, se, sp). The z-scores are computed once; each
    grid threshold just re-compares, so lowering the threshold can only add
    flags. Ties pick the lowest threshold.
    """
    labels = np.asarray(labels, dtype=bool)
    z = window_zscores(rec, cfg)
    n_epochs = z.size // WINDOWS_PER_EPOCH
    if labels.size != n_epochs:
        raise ValueError(f"got {labels.size} labels for {n_epochs} epochs")
    if labels.all() or not labels.any():
        raise ValueError("labels are single-class; geometric mean is undefined")
    z_epochs = z[: n_epochs * WINDOWS_PER_EPOCH].reshape(n_epochs, WINDOWS_PER_EPOCH)
    thresholds = np.round(np.arange(lo, hi + step / 2, step), 10)
    best = (-1.0, None, None, None)
    for t in thresholds:
        flags = (z_epochs > t).any(axis=1)
        tp = int(np.sum(flags & labels))
        fn = int(np.sum(~flags & labels))
        tn = int(np.sum(~flags & ~labels))
        fp = int(np.sum(flags & ~labels))
        se = tp / (tp + fn)
        sp = tn / (tn + fp)
        gmean = np.sqrt(se * sp)
        if gmean > best[0]:
            best = (gmean, float(t), se, sp)
    return best[1], best[2], best[3]


def std_epoch_scores(rec: Recording, cfg: StdDetectorConfig = StdDetectorConfig()) -> np.ndarray:
    """Per-epoch max window z-score, usable as a continuous score for ROC/AUC."""
    z = window_zscores(rec, cfg)
    n_epochs = z.size // WINDOWS_PER_EPOCH
    return z[: n_epochs * WINDOWS_PER_EPOCH].reshape(n_epochs, WINDOWS_PER_EPOCH).max(axis=1)
