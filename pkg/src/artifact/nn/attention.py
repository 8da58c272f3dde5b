"""1-D convolutional block attention: channel gating, spatial gating, and the
activation energy map used to localize artifacts in time.

The block refines a feature map F[B,C,L] sequentially: channel attention
squeezes the length axis through shared average- and max-pooled descriptors
and a bottleneck MLP; spatial attention squeezes the channel axis and runs a
kernel-7 convolution over the two pooled traces. Both gates are sigmoids, so
their values lie strictly inside (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .layers import Conv1d, Dense, Layer


class ChannelAttention(Layer):
    """Per-channel gate from pooled descriptors through a shared bottleneck MLP."""

    def __init__(self, name, channels, reduction_ratio=8, seed=0, dtype=np.float32):
        self.name = name
        self.channels = channels
        hidden = max(1, channels // reduction_ratio)
        self.fc1 = Dense(f"{name}.fc1", channels, hidden, seed=seed, dtype=dtype)
        self.fc2 = Dense(f"{name}.fc2", hidden, channels, seed=seed, dtype=dtype)

    def _mlp(self, v):
        return self.fc2.forward(ag.relu(self.fc1.forward(v)))

    def forward(self, f, training=False):
        avg = ag.tmean(f, axis=2)          # [B, C]
        mx = ag.amax(f, axis=2)            # [B, C]
        gate = ag.sigmoid(ag.add(self._mlp(avg), self._mlp(mx)))
        return ag.reshape(gate, (f.shape[0], self.channels, 1))


class SpatialAttention(Layer):
    """Per-position gate: kernel-7 convolution over channel-pooled traces."""

    def __init__(self, name, kernel=7, seed=0, dtype=np.float32):
        self.name = name
        pad = kernel // 2
        self.conv = Conv1d(f"{name}.conv", 2, 1, kernel, stride=1, padding=pad,
                           bias=True, seed=seed, dtype=dtype)

    def forward(self, f, training=False):
        avg = ag.tmean(f, axis=1, keepdims=True)   # [B, 1, L]
        mx = ag.amax(f, axis=1, keepdims=True)     # [B, 1, L]
        stacked = ag.concat([avg, mx], axis=1)     # [B, 2, L]
        return ag.sigmoid(self.conv.forward(stacked))


class CBAM(Layer):
    """Sequential channel-then-spatial attention; preserves the input shape."""

    def __init__(self, name, channels, reduction_ratio=8, kernel=7, seed=0, dtype=np.float32):
        self.name = name
        self.channel = ChannelAttention(f"{name}.channel", channels, reduction_ratio,
                                        seed=seed, dtype=dtype)
        self.spatial = SpatialAttention(f"{name}.spatial", kernel, seed=seed, dtype=dtype)

    def forward(self, f, training=False):
        refined = ag.mul(f, self.channel.forward(f))
        return ag.mul(refined, self.spatial.forward(refined))


@dataclass
class AttentionMap:
    """Per-time-step activation energy for one epoch, normalized to [0, 1].

    Values outside the edge-exclusion margin are min-max normalized; the
    excluded edge steps are set to 0. A degenerate (all-equal) map normalizes
    to all zeros and is flagged: a flat map carries no localization signal.
    """

    values: np.ndarray
    epoch_index: int
    time_scale_s_per_step: float
    edge_exclusion_s: float = 0.7
    degenerate: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("attention map must be one-dimensional")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValueError("attention map values must lie in [0, 1]")

    @property
    def edge_steps(self) -> int:
        n_edge = edge_exclusion_steps(self.edge_exclusion_s, self.time_scale_s_per_step)
        if self.values.size - 2 * n_edge < 2:
            return 0  # toy-length maps keep every step
        return n_edge

    def to_dict(self) -> dict:
        return {
            "epoch_index": self.epoch_index,
            "time_scale_s_per_step": self.time_scale_s_per_step,
            "edge_exclusion_s": self.edge_exclusion_s,
            "values": [float(v) for v in self.values],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttentionMap":
        values = np.asarray(d["values"], dtype=np.float64)
        # Non-degenerate maps carry a normalized 1 somewhere; degenerate maps
        # are all zeros, so the flag is recoverable from the values alone.
        return cls(
            values=values,
            epoch_index=int(d["epoch_index"]),
            time_scale_s_per_step=float(d["time_scale_s_per_step"]),
            edge_exclusion_s=float(d.get("edge_exclusion_s", 0.7)),
            degenerate=bool(values.size == 0 or values.max() == 0.0),
        )


def edge_exclusion_steps(edge_s: float, s_per_step: float) -> int:
    """Steps to drop at each end: any step overlapping the excluded margin."""
    return int(np.ceil(edge_s / s_per_step - 1e-12))


def activation_attention_map(
    a: np.ndarray,
    epoch_index: int,
    time_scale_s_per_step: float,
    p: float = 4.0,
    edge_exclusion_s: float = 0.7,
) -> AttentionMap:
    """Collapse a feature map A[C,L] to a normalized per-step energy map.

    Raw energy is sum over channels of |A|^p (p=4 emphasizes the strongest
    activations). The map is min-max normalized over the region that excludes
    `edge_exclusion_s` seconds at each end; excluded steps are zeroed.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("expected a [channels, length] feature map")
    raw = np.sum(np.abs(a) ** p, axis=0)
    n = raw.size
    n_edge = edge_exclusion_steps(edge_exclusion_s, time_scale_s_per_step)
    if n - 2 * n_edge < 2:
        n_edge = 0  # toy-length maps keep every step rather than vanishing
    interior = raw[n_edge : n - n_edge]
    lo, hi = interior.min(), interior.max()
    values = np.zeros_like(raw)
    if hi == lo:
        return AttentionMap(values, epoch_index, time_scale_s_per_step,
                            edge_exclusion_s, degenerate=True)
    values[n_edge : n - n_edge] = (interior - lo) / (hi - lo)
    return AttentionMap(values, epoch_index, time_scale_s_per_step,
                        edge_exclusion_s, degenerate=False)
