"""DSP primitives for single-channel sleep EEG.

Resampling, zero-phase filtering, Welch spectral estimation, epoching and
per-epoch min-max normalization. All functions are pure: they never mutate
their inputs, so recordings can be processed in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy import signal as sps

# Epoching convention: 20-second epochs at 128 Hz, five 4-second windows each.
TARGET_RATE_HZ = 128.0
EPOCH_SECONDS = 20.0
EPOCH_SAMPLES = 2560
WINDOW_SECONDS = 4.0
WINDOWS_PER_EPOCH = 5

ARTIFACT = "artifact"
CLEAN = "clean"
UNLABELED = "unlabeled"
LABELS = (ARTIFACT, CLEAN, UNLABELED)


@dataclass
class Recording:
    """Raw single-channel EEG: samples in microvolts plus provenance.

    start_offset_s tracks how many seconds were trimmed from the front so
    that absolute event times stay meaningful after preprocessing.
    """

    samples: np.ndarray
    rate_hz: float
    id: str = ""
    start_offset_s: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if self.samples.size == 0:
            raise ValueError("recording has no samples")
        if not self.rate_hz > 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        if self.start_offset_s < 0:
            raise ValueError("start_offset_s must be non-negative")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.rate_hz


@dataclass
class Epoch:
    """One normalized 20-s segment (2560 samples at 128 Hz).

    The epoch label is consistent with the five 4-s window labels: it is
    "artifact" iff at least one window is. `degenerate` marks a constant
    (flatline) epoch whose min-max scaling was undefined.
    """

    values: np.ndarray
    epoch_index: int
    label: str = UNLABELED
    window_labels: tuple = (UNLABELED,) * WINDOWS_PER_EPOCH
    degenerate: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (EPOCH_SAMPLES,):
            raise ValueError(
                f"epoch must hold exactly {EPOCH_SAMPLES} samples, got {self.values.shape}"
            )
        self.window_labels = tuple(self.window_labels)
        if len(self.window_labels) != WINDOWS_PER_EPOCH:
            raise ValueError(f"expected {WINDOWS_PER_EPOCH} window labels")
        for lab in (self.label, *self.window_labels):
            if lab not in LABELS:
                raise ValueError(f"unknown label {lab!r}")


@dataclass
class PowerSpectrum:
    """One-sided power spectral density estimate (uV^2/Hz)."""

    freqs_hz: np.ndarray
    psd: np.ndarray
    resolution_hz: float

    def __post_init__(self):
        self.freqs_hz = np.asarray(self.freqs_hz, dtype=np.float64)
        self.psd = np.asarray(self.psd, dtype=np.float64)
        if self.freqs_hz.shape != self.psd.shape:
            raise ValueError("freqs_hz and psd must have matching length")
        if np.any(np.diff(self.freqs_hz) <= 0):
            raise ValueError("freqs_hz must be strictly increasing")
        if np.any(self.psd < 0):
            raise ValueError("psd values must be non-negative")
        if not self.resolution_hz > 0:
            raise ValueError("resolution_hz must be positive")


def resample(rec: Recording, target_hz: float) -> Recording:
    """Resample a recording to target_hz using polyphase rational resampling.

    The exact rational ratio (e.g. 250->128 Hz is x64/125) avoids cumulative
    drift over multi-hour recordings; the polyphase Kaiser low-pass provides
    the anti-alias filtering required when decimating.
    """
    if not target_hz > 0:
        raise ValueError("target_hz must be positive")
    if np.isclose(target_hz, rec.rate_hz):
        return replace(rec, samples=rec.samples.copy())
    ratio = Fraction(target_hz / rec.rate_hz).limit_denominator(10_000)
    up, down = ratio.numerator, ratio.denominator
    out = sps.resample_poly(rec.samples, up, down, window=("kaiser", 5.0))
    return Recording(out, float(target_hz), id=rec.id, start_offset_s=rec.start_offset_s)


def trim_head(rec: Recording, seconds: float) -> Recording:
    """Drop the first `seconds` of a recording (settling/adjustment period)."""
    if seconds < 0:
        raise ValueError("seconds must be non-negative")
    if seconds == 0:
        return replace(rec, samples=rec.samples.copy())
    n = int(round(seconds * rec.rate_hz))
    if n >= rec.samples.size:
        raise ValueError(
            f"cannot trim {seconds} s from a {rec.duration_s:.2f} s recording"
        )
    return Recording(
        rec.samples[n:].copy(),
        rec.rate_hz,
        id=rec.id,
        start_offset_s=rec.start_offset_s + seconds,
    )


def epoch_minmax_scale(values: np.ndarray) -> tuple:
    """Min-max scale one epoch to [0, 1].

    Returns (scaled, degenerate). A constant epoch cannot be scaled; it maps
    to all 0.5 with degenerate=True so a flatline (itself a quality defect)
    stays visible downstream instead of raising mid-pipeline.
    """
    values = np.asarray(values, dtype=np.float64)
    lo = values.min()
    hi = values.max()
    if hi == lo:
        return np.full_like(values, 0.5), True
    return (values - lo) / (hi - lo), False


def butterworth_bandpass(rec: Recording, lo_hz: float, hi_hz: float, order: int = 4) -> Recording:
    """Zero-phase Butterworth band-pass (forward-backward sosfiltfilt).

    Zero-phase application keeps artifact positions unshifted in time.
    """
    nyq = rec.rate_hz / 2.0
    if not (0 < lo_hz < hi_hz < nyq):
        raise ValueError(f"invalid band ({lo_hz}, {hi_hz}) Hz for rate {rec.rate_hz} Hz")
    sos = sps.butter(order, [lo_hz, hi_hz], btype="bandpass", fs=rec.rate_hz, output="sos")
    out = sps.sosfiltfilt(sos, rec.samples)
    return Recording(out, rec.rate_hz, id=rec.id, start_offset_s=rec.start_offset_s)


def notch_filter(rec: Recording, f0_hz: float, q: float = 30.0) -> Recording:
    """Zero-phase IIR notch removing narrowband interference (e.g. 50 Hz mains)."""
    nyq = rec.rate_hz / 2.0
    if not (0 < f0_hz < nyq):
        raise ValueError(f"notch frequency {f0_hz} Hz outside (0, {nyq}) Hz")
    b, a = sps.iirnotch(f0_hz, q, fs=rec.rate_hz)
    out = sps.filtfilt(b, a, rec.samples)
    return Recording(out, rec.rate_hz, id=rec.id, start_offset_s=rec.start_offset_s)


def welch_psd(values: np.ndarray, rate_hz: float, seg_len: int = 512, overlap: float = 0.5) -> PowerSpectrum:
    """Welch averaged periodogram (Hann window, density scaling, one-sided).

    Density scaling means integrating the psd over frequency approximates the
    signal variance for zero-mean input. Defaults (4-s segments at 128 Hz,
    50% overlap) give 0.25 Hz resolution, fine enough for a 0.75 Hz band edge.
    """
    values = np.asarray(values, dtype=np.float64)
    if not 0 <= overlap < 1:
        raise ValueError("overlap must be in [0, 1)")
    if seg_len > values.size:
        raise ValueError(f"seg_len {seg_len} exceeds data length {values.size}")
    noverlap = int(seg_len * overlap)
    freqs, psd = sps.welch(
        values,
        fs=rate_hz,
        window="hann",
        nperseg=seg_len,
        noverlap=noverlap,
        detrend="constant",
        scaling="density",
    )
    return PowerSpectrum(freqs, psd, resolution_hz=float(freqs[1] - freqs[0]))


def band_power(ps: PowerSpectrum, lo_hz: float, hi_hz: float) -> float:
    """Trapezoidal integral of the psd over [lo_hz, hi_hz]."""
    if not lo_hz < hi_hz:
        raise ValueError("band must satisfy lo_hz < hi_hz")
    if lo_hz < ps.freqs_hz[0] or hi_hz > ps.freqs_hz[-1]:
        raise ValueError(
            f"band ({lo_hz}, {hi_hz}) outside spectrum range "
            f"[{ps.freqs_hz[0]}, {ps.freqs_hz[-1]}]"
        )
    mask = (ps.freqs_hz >= lo_hz) & (ps.freqs_hz <= hi_hz)
    if mask.sum() < 2:
        raise ValueError("band contains fewer than two spectral bins")
    return float(np.trapezoid(ps.psd[mask], ps.freqs_hz[mask]))


def segment_epochs(rec: Recording, epoch_s: float = EPOCH_SECONDS) -> list:
    """Cut a 128 Hz recording into consecutive normalized 20-s epochs.

    Trailing partial epochs are dropped, never padded: labels are defined per
    full epoch. Each epoch is min-max scaled independently.
    """
    if not np.isclose(rec.rate_hz, TARGET_RATE_HZ):
        raise ValueError(f"segment_epochs expects a {TARGET_RATE_HZ:.0f} Hz recording")
    samples_per_epoch = int(round(epoch_s * rec.rate_hz))
    n_epochs = rec.samples.size // samples_per_epoch
    epochs = []
    for k in range(n_epochs):
        chunk = rec.samples[k * samples_per_epoch : (k + 1) * samples_per_epoch]
        scaled, degenerate = epoch_minmax_scale(chunk)
        epochs.append(Epoch(scaled, epoch_index=k, degenerate=degenerate))
    return epochs
