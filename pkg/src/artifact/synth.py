"""Seeded synthetic sleep-EEG generator with exact artifact ground truth.

Stands in for private clinical recordings at desk scale. The background mixes
pink noise, a slow delta-band oscillation and intermittent spindles; artifacts
(spikes, EMG bursts, motion steps, amplitude surges) are injected at exactly
known [start_s, end_s) positions. Slow sub-1 Hz sweat-like drifts are injected
too but deliberately kept OUT of the ground truth: they are realistic clean
negatives, not artifacts.

Identical seed + spec produce bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .data import HEAD_TRIM_SECONDS, TruthInterval
from .signal import EPOCH_SECONDS, Recording

GENERATOR_RATE_HZ = 250.0
ARTIFACT_KINDS = ("spike", "emg_burst", "motion_step", "amplitude_surge")


@dataclass
class SyntheticSpec:
    """Parameters of one synthetic recording.

    The background amplitude is slowly modulated over the night (gain_range)
    so that overall signal scale is uninformative: after per-epoch min-max
    scaling, a compressed background alone cannot separate artifact epochs
    from loud clean ones, and detectors must rely on local waveform shape.
    """

    seed: int
    duration_s: float
    artifact_rate: float = 0.045
    artifact_kinds: tuple = ARTIFACT_KINDS
    pink_noise_gain: float = 15.0
    delta_osc_gain: float = 20.0
    spindle_gain: float = 10.0
    sweat_drift_prob: float = 0.10
    gain_range: tuple = (0.7, 1.9)
    recording_id: str = ""

    def __post_init__(self):
        if self.duration_s < HEAD_TRIM_SECONDS + EPOCH_SECONDS:
            raise ValueError("duration too short for the head-trim plus one epoch")
        if not 0 <= self.artifact_rate < 0.5:
            raise ValueError("artifact_rate must stay below 0.5 (data must stay imbalanced)")
        bad = set(self.artifact_kinds) - set(ARTIFACT_KINDS)
        if bad:
            raise ValueError(f"unknown artifact kinds: {sorted(bad)}")
        self.artifact_kinds = tuple(self.artifact_kinds)


def _pink_noise(rng: np.random.Generator, n: int, rate_hz: float) -> np.ndarray:
    """1/f-amplitude noise, unit standard deviation."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / rate_hz)
    spec[1:] /= np.sqrt(freqs[1:])
    spec[0] = 0.0
    x = np.fft.irfft(spec, n)
    return x / x.std()


def _band_noise(rng: np.random.Generator, n: int, rate_hz: float, lo: float, hi: float) -> np.ndarray:
    """Band-limited Gaussian noise, unit standard deviation."""
    sos = sps.butter(4, [lo, hi], btype="bandpass", fs=rate_hz, output="sos")
    x = sps.sosfiltfilt(sos, rng.standard_normal(n))
    return x / x.std()


def generate_synthetic(spec: SyntheticSpec):
    """Build one synthetic Recording plus its exact truth intervals.

    Artifact epochs are drawn per-epoch Bernoulli(artifact_rate) on the
    post-head-trim epoch grid; each artifact fits inside its epoch, so truth
    intervals never overlap each other.
    """
    rate = GENERATOR_RATE_HZ
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration_s * rate))
    t = np.arange(n) / rate

    x = spec.pink_noise_gain * _pink_noise(rng, n, rate)
    x += spec.delta_osc_gain * _band_noise(rng, n, rate, 0.75, 4.5)

    head = HEAD_TRIM_SECONDS
    n_epochs = int((spec.duration_s - head) // EPOCH_SECONDS)

    # Intermittent sleep spindles (11-15 Hz, ~0.5-1.5 s), part of the background.
    for k in range(n_epochs):
        if rng.random() < 0.3:
            dur = rng.uniform(0.5, 1.5)
            t0 = head + k * EPOCH_SECONDS + rng.uniform(0.0, EPOCH_SECONDS - dur)
            i0, i1 = int(t0 * rate), int((t0 + dur) * rate)
            freq = rng.uniform(11.0, 15.0)
            phase = rng.uniform(0, 2 * np.pi)
            env = np.hanning(i1 - i0)
            x[i0:i1] += spec.spindle_gain * env * np.sin(2 * np.pi * freq * t[i0:i1] + phase)

    base_std = float(np.std(x))

    # Benign high-amplitude physiology, always labeled clean. These share the
    # artifacts' global statistics (one large excursion dominating the epoch's
    # amplitude range) but not their local waveform shape, so detectors cannot
    # get away with "background looks compressed" as the only cue.
    for k in range(n_epochs):
        if rng.random() < 0.15:  # K-complex: large biphasic slow transient
            dur = rng.uniform(0.6, 1.0)
            t0 = head + k * EPOCH_SECONDS + rng.uniform(0.0, EPOCH_SECONDS - dur)
            i0, i1 = int(t0 * rate), int((t0 + dur) * rate)
            amp = rng.uniform(2.2, 3.2) * base_std
            phase = np.linspace(0, 2 * np.pi, i1 - i0)
            x[i0:i1] += -amp * np.sin(phase) * np.hanning(i1 - i0)
    for k in range(n_epochs):
        if rng.random() < 0.15:  # slow-wave burst: amplified delta for a few seconds
            dur = rng.uniform(3.0, 8.0)
            t0 = head + k * EPOCH_SECONDS + rng.uniform(0.0, EPOCH_SECONDS - dur)
            i0, i1 = int(t0 * rate), int((t0 + dur) * rate)
            burst = _band_noise(rng, i1 - i0, rate, 0.75, 4.5)
            amp = rng.uniform(1.8, 2.6) * base_std
            x[i0:i1] += amp * np.hanning(i1 - i0) * burst

    # Slow amplitude modulation over the night: per-epoch gains interpolated
    # at epoch centers, so absolute scale varies smoothly and carries no
    # artifact information.
    lo_g, hi_g = spec.gain_range
    n_nodes = n_epochs + 2
    node_gains = rng.uniform(lo_g, hi_g, size=n_nodes)
    node_times = np.linspace(0.0, spec.duration_s, n_nodes)
    gain_env = np.interp(t, node_times, node_gains)
    x *= gain_env

    # Slow sweat-like drift segments: high amplitude, <1 Hz, labeled clean.
    for k in range(n_epochs):
        if rng.random() < spec.sweat_drift_prob:
            dur = rng.uniform(6.0, 14.0)
            t0 = head + k * EPOCH_SECONDS + rng.uniform(0.0, EPOCH_SECONDS - dur)
            i0, i1 = int(t0 * rate), int((t0 + dur) * rate)
            freq = rng.uniform(0.2, 0.8)
            env = np.hanning(i1 - i0)
            amp = rng.uniform(2.5, 3.5) * spec.pink_noise_gain * gain_env[i0]
            x[i0:i1] += amp * env * np.sin(2 * np.pi * freq * (t[i0:i1] - t[i0]))

    # Settling transient in the to-be-trimmed head: large drift plus noise.
    head_n = int(head * rate)
    x[:head_n] += 600.0 * np.exp(-t[:head_n] / 4.0) * (1.0 + 0.5 * rng.standard_normal(head_n))

    truth = []
    # Artifacts stay clear of epoch edges so they remain inside the attention
    # map's non-excluded region (0.7 s at each end).
    margin = 0.8
    for k in range(n_epochs):
        if rng.random() >= spec.artifact_rate:
            continue
        kind = spec.artifact_kinds[rng.integers(0, len(spec.artifact_kinds))]
        ep_lo = head + k * EPOCH_SECONDS
        if kind == "spike":
            dur = rng.uniform(0.06, 0.2)
            amp = rng.uniform(150.0, 400.0) * (1 if rng.random() < 0.5 else -1)
            t0 = ep_lo + rng.uniform(margin, EPOCH_SECONDS - dur - margin)
            i0, i1 = int(t0 * rate), int((t0 + dur) * rate)
            x[i0:i1] += amp * np.hanning(i1 - i0)
            truth.append(TruthInterval(t0, t0 + dur, kind))
        elif kind == "emg_burst":
            dur = rng.uniform(0.5, 3.0)
            t0 = ep_lo + rng.uniform(margin, EPOCH_SECONDS - dur - margin)
            i0, i1 = int(t0 * rate), int((t0 + dur) * rate)
            burst = _band_noise(rng, i1 - i0, rate, 20.0, 60.0)
            local_std = base_std * gain_env[i0]  # x5 the local background amplitude
            x[i0:i1] += 5.0 * local_std * np.hanning(i1 - i0) * burst
            truth.append(TruthInterval(t0, t0 + dur, kind))
        elif kind == "motion_step":
            tau = rng.uniform(0.2, 0.6)
            dur = 3.0 * tau
            t0 = ep_lo + rng.uniform(margin, EPOCH_SECONDS - dur - margin)
            i0 = int(t0 * rate)
            amp = rng.uniform(5.0, 10.0) * base_std * gain_env[i0]
            amp *= 1 if rng.random() < 0.5 else -1
            rel = t[i0:] - t[i0]
            x[i0:] += amp * np.exp(-rel / tau)
            truth.append(TruthInterval(t0, t0 + dur, kind))
        elif kind == "amplitude_surge":
            dur = rng.uniform(1.0, 4.0)
            t0 = ep_lo + rng.uniform(margin, EPOCH_SECONDS - dur - margin)
            i0, i1 = int(t0 * rate), int((t0 + dur) * rate)
            x[i0:i1] *= 1.0 + 3.0 * np.hanning(i1 - i0)  # peaks at x4 amplitude
            truth.append(TruthInterval(t0, t0 + dur, kind))

    rec_id = spec.recording_id or f"syn-{spec.seed}"
    return Recording(x, rate, id=rec_id), truth


@dataclass
class DatasetSpec:
    """A whole synthetic dataset: several subjects, one or more nights each."""

    seed: int
    subjects: int = 10
    recordings_per_subject: int = 1
    epochs_per_recording: int = 200
    artifact_rate: float = 0.045
    artifact_kinds: tuple = ARTIFACT_KINDS
    pink_noise_gain: float = 15.0
    delta_osc_gain: float = 20.0
    spindle_gain: float = 10.0
    sweat_drift_prob: float = 0.10

    @classmethod
    def from_dict(cls, d: dict, seed=None):
        d = dict(d)
        if seed is not None:
            d["seed"] = seed
        kinds = d.pop("artifact_kinds", ARTIFACT_KINDS)
        return cls(artifact_kinds=tuple(kinds), **d)


def generate_dataset(dspec: DatasetSpec):
    """Yield (subject_id, Recording, truth) triples, deterministically seeded."""
    duration = HEAD_TRIM_SECONDS + dspec.epochs_per_recording * EPOCH_SECONDS
    out = []
    idx = 0
    for s in range(dspec.subjects):
        subject_id = f"subj{s:03d}"
        for r in range(dspec.recordings_per_subject):
            child_seed = int(
                np.random.SeedSequence((dspec.seed, idx)).generate_state(1, np.uint32)[0]
            )
            spec = SyntheticSpec(
                seed=child_seed,
                duration_s=duration,
                artifact_rate=dspec.artifact_rate,
                artifact_kinds=dspec.artifact_kinds,
                pink_noise_gain=dspec.pink_noise_gain,
                delta_osc_gain=dspec.delta_osc_gain,
                spindle_gain=dspec.spindle_gain,
                sweat_drift_prob=dspec.sweat_drift_prob,
                recording_id=f"{subject_id}-n{r:02d}",
            )
            rec, truth = generate_synthetic(spec)
            out.append((subject_id, rec, truth))
            idx += 1
    return out
