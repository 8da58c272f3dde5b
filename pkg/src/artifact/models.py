"""Model zoo: two-branch CNN, CNN-LSTM, their CBAM variants, heuristic 1D-CNN.

The two-branch architecture pairs a small-kernel temporal branch (kernel
derived from half the sampling rate: 64 samples at 128 Hz, stride 8) with a
large-kernel frequency branch (four seconds of signal: kernel 512, stride 64).
Each branch stacks five convolutions (four in the LSTM variants), every one
followed by batch normalization and ReLU; the mid convolutions are length
preserving, and the branch ends with its two max-pool stages plus dropout 0.5
after each pool. Pooling after the conv stack keeps the feature grid at the
first convolution's stride through the whole stack, so a temporal-branch
feature step spans 62.5 ms of signal and its receptive field stays under two
seconds: the attention map read from the temporal branch's final CBAM block
localizes, instead of smearing across the epoch. CBAM variants attach an
attention block after every convolution of the temporal branch only.

The exact kernel/filter/pool numbers live in BRANCH_CONFIGS and are surfaced
by ``layer_table`` so parameter counts can be audited against the documented
architecture. The toy profile divides all channel counts (and LSTM units)
by 4; it is the default for tests, with the full profile behind a flag.
"""

from __future__ import annotations

import numpy as np

from .nn import autograd as ag
from .nn.attention import CBAM, AttentionMap, activation_attention_map
from .nn.layers import BatchNorm1d, BiLSTM, Conv1d, Dense, Dropout, Layer, MaxPool1d

MODEL_KINDS = ("cnn", "cnn_lstm", "cnn_cbam", "cnn_cbam_lstm", "heuristic_1dcnn")
PROFILES = {"toy": 4, "full": 1}
INPUT_SAMPLES = 2560
RATE_HZ = 128.0
DROPOUT_RATE = 0.5
CBAM_REDUCTION = 8
ATTENTION_POWER = 4.0

# (conv1 kernel, stride, padding), (mid kernel, padding), pool1, pool2
BRANCH_CONFIGS = {
    "temporal": {"conv1": (64, 8, (28, 28)), "mid": (8, (3, 4)), "pool1": 8, "pool2": 4},
    "frequency": {"conv1": (512, 64, (224, 224)), "mid": (6, (2, 3)), "pool1": 4, "pool2": 2},
}
BASE_FILTERS = (64, 128)  # conv1 filters, mid-conv filters (full profile)
LSTM_UNITS = 128  # full profile
HEURISTIC_FILTERS = 64
HEURISTIC_KERNEL = 65
HEURISTIC_HIDDEN = 8


class ConvBranch(Layer):
    """One CNN branch: wide first conv, pool, stack of small convs, pool."""

    def __init__(self, name, config, n_convs, filters, with_cbam, seed, dtype):
        self.name = name
        self.with_cbam = with_cbam
        c1, c2 = filters
        k1, s1, p1 = config["conv1"]
        km, pm = config["mid"]
        self.blocks = []
        conv = Conv1d(f"{name}.conv1", 1, c1, k1, stride=s1, padding=p1, bias=False,
                      seed=seed, dtype=dtype)
        bn = BatchNorm1d(f"{name}.bn1", c1, dtype=dtype)
        cbam = CBAM(f"{name}.cbam1", c1, CBAM_REDUCTION, seed=seed, dtype=dtype) if with_cbam else None
        self.blocks.append((conv, bn, cbam))
        c_prev = c1
        for i in range(2, n_convs + 1):
            conv = Conv1d(f"{name}.conv{i}", c_prev, c2, km, stride=1, padding=pm,
                          bias=False, seed=seed, dtype=dtype)
            bn = BatchNorm1d(f"{name}.bn{i}", c2, dtype=dtype)
            cbam = (CBAM(f"{name}.cbam{i}", c2, CBAM_REDUCTION, seed=seed, dtype=dtype)
                    if with_cbam else None)
            self.blocks.append((conv, bn, cbam))
            c_prev = c2
        self.pool1 = MaxPool1d(config["pool1"])
        self.pool2 = MaxPool1d(config["pool2"])
        self.drop = Dropout(DROPOUT_RATE)
        self.out_channels = c_prev
        # Samples of input signal per feature-grid step at the attention
        # capture point (after the last conv block, before any pooling).
        self.capture_stride = s1

    def named_parameters(self):
        out = []
        for conv, bn, cbam in self.blocks:
            out.extend(conv.named_parameters())
            out.extend(bn.named_parameters())
            if cbam is not None:
                out.extend(cbam.named_parameters())
        return out

    def named_buffers(self):
        out = []
        for _, bn, _ in self.blocks:
            out.extend(bn.named_buffers())
        return out

    def forward(self, x, training, rng, capture=None):
        h = x
        for i, (conv, bn, cbam) in enumerate(self.blocks):
            h = ag.relu(bn.forward(conv.forward(h), training=training))
            if cbam is not None:
                h = cbam.forward(h)
                if capture is not None and i == len(self.blocks) - 1:
                    capture["attention"] = h.data.copy()
        h = self.drop.forward(self.pool1.forward(h), rng, training=training)
        h = self.drop.forward(self.pool2.forward(h), rng, training=training)
        return h


class Model(Layer):
    """Common model plumbing: dtype handling, dropout RNG, probabilities."""

    kind = ""
    has_cbam = False

    def __init__(self, seed, profile, dtype):
        if profile not in PROFILES:
            raise ValueError(f"unknown profile {profile!r}")
        self.seed = seed
        self.profile = profile
        self.dtype = dtype
        self.seed_dropout((seed, 0xD0))

    def seed_dropout(self, entropy):
        self._dropout_rng = np.random.default_rng(np.random.SeedSequence(entropy))

    def _as_input(self, x):
        if isinstance(x, ag.Tensor):
            return x
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 2:
            x = x[:, None, :]
        return ag.Tensor(x)

    def predict_proba(self, x, batch_size: int = 256) -> np.ndarray:
        """Softmax class probabilities in eval mode, [N, 2]."""
        x = np.asarray(x, dtype=self.dtype)
        outs = []
        with ag.no_grad():
            for lo in range(0, len(x), batch_size):
                logits = self.forward(x[lo : lo + batch_size], training=False)
                outs.append(ag.softmax(logits, axis=1).data)
        return np.concatenate(outs, axis=0).astype(np.float64)

    def count_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


class TwoBranchCNN(Model):
    """Baseline two-branch CNN; `with_cbam` adds attention on the temporal branch."""

    def __init__(self, seed=0, profile="toy", dtype=np.float32, with_cbam=False):
        super().__init__(seed, profile, dtype)
        div = PROFILES[profile]
        filters = (BASE_FILTERS[0] // div, BASE_FILTERS[1] // div)
        self.kind = "cnn_cbam" if with_cbam else "cnn"
        self.has_cbam = with_cbam
        self.n_convs = 5
        self.temporal = ConvBranch("temporal", BRANCH_CONFIGS["temporal"], self.n_convs,
                                   filters, with_cbam, seed, dtype)
        self.frequency = ConvBranch("frequency", BRANCH_CONFIGS["frequency"], self.n_convs,
                                    filters, False, seed, dtype)
        t_steps = INPUT_SAMPLES // (8 * 8 * 4)   # temporal grid after both pools
        f_steps = INPUT_SAMPLES // (64 * 4 * 2)  # frequency grid after both pools
        flat = filters[1] * (t_steps + f_steps)
        self.head = Dense("head", flat, 2, seed=seed, dtype=dtype)

    @property
    def attention_time_scale_s(self) -> float:
        return self.temporal.capture_stride / RATE_HZ

    def named_parameters(self):
        return (self.temporal.named_parameters() + self.frequency.named_parameters()
                + self.head.named_parameters())

    def named_buffers(self):
        return self.temporal.named_buffers() + self.frequency.named_buffers()

    def forward(self, x, training=False, capture=None):
        x = self._as_input(x)
        if x.shape[1] != 1 or x.shape[2] != INPUT_SAMPLES:
            raise ValueError(f"expected input [B,1,{INPUT_SAMPLES}], got {x.shape}")
        rng = self._dropout_rng
        ht = self.temporal.forward(x, training, rng, capture=capture)
        hf = self.frequency.forward(x, training, rng)
        if capture is not None:
            capture["temporal"] = ht.data.copy()
            capture["frequency"] = hf.data.copy()
        batch = x.shape[0]
        flat = ag.concat(
            [ag.reshape(ht, (batch, -1)), ag.reshape(hf, (batch, -1))], axis=1
        )
        return self.head.forward(flat)


class TwoBranchCNNLSTM(Model):
    """Two CNN branches feeding a BiLSTM, with a dense shortcut from the CNN features."""

    def __init__(self, seed=0, profile="toy", dtype=np.float32, with_cbam=False):
        super().__init__(seed, profile, dtype)
        div = PROFILES[profile]
        filters = (BASE_FILTERS[0] // div, BASE_FILTERS[1] // div)
        units = LSTM_UNITS // div
        self.kind = "cnn_cbam_lstm" if with_cbam else "cnn_lstm"
        self.has_cbam = with_cbam
        self.n_convs = 4
        self.units = units
        self.temporal = ConvBranch("temporal", BRANCH_CONFIGS["temporal"], self.n_convs,
                                   filters, with_cbam, seed, dtype)
        self.frequency = ConvBranch("frequency", BRANCH_CONFIGS["frequency"], self.n_convs,
                                    filters, False, seed, dtype)
        t_steps = INPUT_SAMPLES // (8 * 8 * 4)
        f_steps = INPUT_SAMPLES // (64 * 4 * 2)
        flat = filters[1] * (t_steps + f_steps)
        self.lstm = BiLSTM("lstm", filters[1], units=units, seed=seed, dtype=dtype)
        self.shortcut = Dense("shortcut", flat, 2 * units, seed=seed, dtype=dtype)
        self.head = Dense("head", 2 * units, 2, seed=seed, dtype=dtype)

    @property
    def attention_time_scale_s(self) -> float:
        return self.temporal.capture_stride / RATE_HZ

    def named_parameters(self):
        return (self.temporal.named_parameters() + self.frequency.named_parameters()
                + self.lstm.named_parameters() + self.shortcut.named_parameters()
                + self.head.named_parameters())

    def named_buffers(self):
        return self.temporal.named_buffers() + self.frequency.named_buffers()

    def forward(self, x, training=False, capture=None):
        x = self._as_input(x)
        if x.shape[1] != 1 or x.shape[2] != INPUT_SAMPLES:
            raise ValueError(f"expected input [B,1,{INPUT_SAMPLES}], got {x.shape}")
        rng = self._dropout_rng
        ht = self.temporal.forward(x, training, rng, capture=capture)
        hf = self.frequency.forward(x, training, rng)
        if capture is not None:
            capture["temporal"] = ht.data.copy()
            capture["frequency"] = hf.data.copy()
        batch = x.shape[0]
        seq = ag.concat([ag.transpose(ht, (0, 2, 1)), ag.transpose(hf, (0, 2, 1))], axis=1)
        out = self.lstm.forward(seq, training=training)  # [B, T, 2*units]
        u = self.units
        final = ag.concat([out[:, out.shape[1] - 1, :u], out[:, 0, u:]], axis=1)
        flat = ag.concat(
            [ag.reshape(ht, (batch, -1)), ag.reshape(hf, (batch, -1))], axis=1
        )
        merged = ag.relu(ag.add(final, self.shortcut.forward(flat)))
        return self.head.forward(merged)


class Heuristic1DCNN(Model):
    """Single conv (no downsampling) + BN + ReLU + global average pooling head."""

    kind = "heuristic_1dcnn"

    def __init__(self, seed=0, profile="toy", dtype=np.float32, pad_mode="zeros"):
        super().__init__(seed, profile, dtype)
        div = PROFILES[profile]
        filters = HEURISTIC_FILTERS // div
        pad = HEURISTIC_KERNEL // 2
        self.conv = Conv1d("conv", 1, filters, HEURISTIC_KERNEL, stride=1, padding=pad,
                           bias=False, pad_mode=pad_mode, seed=seed, dtype=dtype)
        self.bn = BatchNorm1d("bn", filters, dtype=dtype)
        self.fc1 = Dense("fc1", filters, HEURISTIC_HIDDEN, seed=seed, dtype=dtype)
        self.fc2 = Dense("fc2", HEURISTIC_HIDDEN, 2, seed=seed, dtype=dtype)

    def named_parameters(self):
        return (self.conv.named_parameters() + self.bn.named_parameters()
                + self.fc1.named_parameters() + self.fc2.named_parameters())

    def named_buffers(self):
        return self.bn.named_buffers()

    def parameter_partition(self):
        """(conv-part params, dense-head params) for dual-optimizer training."""
        conv_part = [self.conv.w, self.bn.gamma, self.bn.beta]
        dense_head = [self.fc1.w, self.fc1.b, self.fc2.w, self.fc2.b]
        return conv_part, dense_head

    def forward(self, x, training=False, capture=None):
        x = self._as_input(x)
        h = ag.relu(self.bn.forward(self.conv.forward(x), training=training))
        pooled = ag.tmean(h, axis=2)  # global average pooling -> [B, filters]
        return self.fc2.forward(ag.relu(self.fc1.forward(pooled)))


def build_model(kind: str, seed: int, profile: str = "toy", dtype=np.float32, **kwargs):
    """Construct a seeded model of the requested kind."""
    if kind == "cnn":
        return TwoBranchCNN(seed, profile, dtype, with_cbam=False)
    if kind == "cnn_cbam":
        return TwoBranchCNN(seed, profile, dtype, with_cbam=True)
    if kind == "cnn_lstm":
        return TwoBranchCNNLSTM(seed, profile, dtype, with_cbam=False)
    if kind == "cnn_cbam_lstm":
        return TwoBranchCNNLSTM(seed, profile, dtype, with_cbam=True)
    if kind == "heuristic_1dcnn":
        return Heuristic1DCNN(seed, profile, dtype, **kwargs)
    raise ValueError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")


def attention_maps(model, x, epoch_indices=None, batch_size: int = 64):
    """Eval-mode attention maps for a batch of epochs.

    Captures the temporal branch's final CBAM output during forward and
    collapses it with the activation energy map. Errors on non-CBAM models.
    """
    if not getattr(model, "has_cbam", False):
        raise ValueError(f"model kind {model.kind!r} has no attention block to map")
    x = np.asarray(x, dtype=model.dtype)
    if epoch_indices is None:
        epoch_indices = list(range(len(x)))
    maps = []
    scale = model.attention_time_scale_s
    with ag.no_grad():
        for lo in range(0, len(x), batch_size):
            capture = {}
            model.forward(x[lo : lo + batch_size], training=False, capture=capture)
            acts = capture["attention"]  # [b, C, L_feat]
            for j in range(acts.shape[0]):
                maps.append(
                    activation_attention_map(
                        acts[j], epoch_index=int(epoch_indices[lo + j]),
                        time_scale_s_per_step=scale, p=ATTENTION_POWER,
                    )
                )
    return maps


def layer_table(kind: str, profile: str = "toy") -> list:
    """Architecture rows (name, shape, parameter count) for audit and docs."""
    model = build_model(kind, seed=0, profile=profile)
    rows = []
    for name, p in model.named_parameters():
        rows.append({"name": name, "shape": list(p.data.shape), "params": int(p.data.size)})
    return rows
