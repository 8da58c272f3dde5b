"""Layer set: convolution, batch norm, pooling, dropout, dense, BiLSTM.

Layers are thin stateful wrappers over the autograd ops. Every parameter is
seeded from (seed, layer name), so two architectures sharing a layer name and
seed get bit-identical initial weights. Forward passes take an explicit
``training`` flag instead of global mode state.
"""

from __future__ import annotations

import zlib

import numpy as np

from . import autograd as ag
from .autograd import Tensor


def init_rng(seed: int, name: str) -> np.random.Generator:
    """Deterministic per-parameter RNG keyed by layer name."""
    return np.random.default_rng(np.random.SeedSequence((seed, zlib.crc32(name.encode()))))


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def orthogonal(rng: np.random.Generator, n: int, dtype) -> np.ndarray:
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))  # fix signs so the factorization is unique
    return q.astype(dtype)


class Layer:
    """Base: named parameters, buffers, state dict plumbing."""

    def named_parameters(self):
        out = []
        for key, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                out.append((val.name or key, val))
            elif isinstance(val, Layer):
                out.extend(val.named_parameters())
        return out

    def named_buffers(self):
        out = []
        for val in vars(self).values():
            if isinstance(val, Layer):
                out.extend(val.named_buffers())
        return out

    def state_dict(self) -> dict:
        state = {name: t.data.copy() for name, t in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict):
        own = dict(self.named_parameters())
        bufs = dict(self.named_buffers())
        for name, arr in state.items():
            if name in own:
                if own[name].data.shape != arr.shape:
                    raise ValueError(f"shape mismatch for {name}")
                own[name].data = arr.astype(own[name].data.dtype, copy=True)
            elif name in bufs:
                bufs[name][...] = arr
            else:
                raise KeyError(f"unknown parameter {name!r}")
        missing = (set(own) | set(bufs)) - set(state)
        if missing:
            raise KeyError(f"state dict missing {sorted(missing)}")

    def parameters(self):
        return [t for _, t in self.named_parameters()]


class Conv1d(Layer):
    def __init__(self, name, c_in, c_out, kernel, stride=1, padding=(0, 0), bias=True,
                 pad_mode="zeros", seed=0, dtype=np.float32):
        self.name = name
        self.stride = stride
        self.padding = (padding, padding) if isinstance(padding, int) else tuple(padding)
        self.pad_mode = pad_mode
        rng = init_rng(seed, name)
        w = kaiming_uniform(rng, (c_out, c_in, kernel), fan_in=c_in * kernel, dtype=dtype)
        self.w = Tensor(w, requires_grad=True, name=f"{name}.w")
        self.b = None
        if bias:
            self.b = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True, name=f"{name}.b")

    def named_parameters(self):
        out = [(self.w.name, self.w)]
        if self.b is not None:
            out.append((self.b.name, self.b))
        return out

    def forward(self, x, training=False):
        return ag.conv1d(x, self.w, self.b, stride=self.stride, padding=self.padding,
                         pad_mode=self.pad_mode)


class Dense(Layer):
    def __init__(self, name, d_in, d_out, seed=0, dtype=np.float32):
        self.name = name
        rng = init_rng(seed, name)
        w = kaiming_uniform(rng, (d_in, d_out), fan_in=d_in, dtype=dtype)
        self.w = Tensor(w, requires_grad=True, name=f"{name}.w")
        self.b = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True, name=f"{name}.b")

    def named_parameters(self):
        return [(self.w.name, self.w), (self.b.name, self.b)]

    def forward(self, x, training=False):
        return ag.add(ag.matmul(x, self.w), self.b)


class BatchNorm1d(Layer):
    """Batch normalization over (batch, length) per channel for [B,C,L] input.

    Train mode normalizes with batch statistics and updates running stats with
    momentum 0.9; eval mode uses the stored running statistics, so inference
    is deterministic.
    """

    def __init__(self, name, channels, eps=1e-5, momentum=0.9, dtype=np.float32):
        self.name = name
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True, name=f"{name}.gamma")
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True, name=f"{name}.beta")
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def named_parameters(self):
        return [(self.gamma.name, self.gamma), (self.beta.name, self.beta)]

    def named_buffers(self):
        return [(f"{self.name}.running_mean", self.running_mean),
                (f"{self.name}.running_var", self.running_var)]

    def forward(self, x, training=False):
        out, mu, var = ag.batch_norm(
            x, self.gamma, self.beta, self.eps, training,
            running_mean=self.running_mean, running_var=self.running_var,
        )
        if training:
            m = self.momentum
            self.running_mean[...] = m * self.running_mean + (1 - m) * mu
            self.running_var[...] = m * self.running_var + (1 - m) * var
        return out


class Dropout(Layer):
    def __init__(self, rate):
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate

    def forward(self, x, rng, training=False):
        return ag.dropout(x, self.rate, rng, training)


class MaxPool1d(Layer):
    def __init__(self, size):
        self.size = size

    def forward(self, x, training=False):
        return ag.maxpool1d(x, self.size)


class BiLSTM(Layer):
    """Single bidirectional LSTM layer returning the full [B,T,2H] sequence.

    Standard cell equations; one bias vector per direction (input and
    recurrent biases merged). Input-to-hidden weights use Kaiming-uniform
    init, recurrent weights are orthogonal per gate block.
    """

    def __init__(self, name, d_in, units=128, seed=0, dtype=np.float32):
        self.name = name
        self.units = units
        self.params = {}
        for direction in ("fwd", "bwd"):
            rng = init_rng(seed, f"{name}.{direction}")
            w_ih = kaiming_uniform(rng, (d_in, 4 * units), fan_in=d_in, dtype=dtype)
            w_hh = np.concatenate([orthogonal(rng, units, dtype) for _ in range(4)], axis=1)
            b = np.zeros(4 * units, dtype=dtype)
            self.params[f"{name}.{direction}.w_ih"] = Tensor(
                w_ih, requires_grad=True, name=f"{name}.{direction}.w_ih")
            self.params[f"{name}.{direction}.w_hh"] = Tensor(
                w_hh.astype(dtype), requires_grad=True, name=f"{name}.{direction}.w_hh")
            self.params[f"{name}.{direction}.b"] = Tensor(
                b, requires_grad=True, name=f"{name}.{direction}.b")

    def named_parameters(self):
        return [(n, t) for n, t in self.params.items()]

    def _run_direction(self, xs, direction):
        h_units = self.units
        w_ih = self.params[f"{self.name}.{direction}.w_ih"]
        w_hh = self.params[f"{self.name}.{direction}.w_hh"]
        b = self.params[f"{self.name}.{direction}.b"]
        batch = xs[0].shape[0]
        dtype = xs[0].dtype
        h = Tensor(np.zeros((batch, h_units), dtype=dtype))
        c = Tensor(np.zeros((batch, h_units), dtype=dtype))
        outs = []
        for x_t in xs:
            z = ag.add(ag.add(ag.matmul(x_t, w_ih), ag.matmul(h, w_hh)), b)
            i = ag.sigmoid(z[:, 0 * h_units : 1 * h_units])
            f = ag.sigmoid(z[:, 1 * h_units : 2 * h_units])
            g = ag.tanh(z[:, 2 * h_units : 3 * h_units])
            o = ag.sigmoid(z[:, 3 * h_units : 4 * h_units])
            c = ag.add(ag.mul(f, c), ag.mul(i, g))
            h = ag.mul(o, ag.tanh(c))
            outs.append(h)
        return outs

    def forward(self, x, training=False):
        """x: Tensor[B,T,D] -> Tensor[B,T,2*units]."""
        batch, t_len, _ = x.shape
        xs = [x[:, t, :] for t in range(t_len)]
        fwd = self._run_direction(xs, "fwd")
        bwd = self._run_direction(list(reversed(xs)), "bwd")
        bwd = list(reversed(bwd))
        steps = [ag.concat([f, bk], axis=1) for f, bk in zip(fwd, bwd)]
        stacked = ag.concat([ag.reshape(s, (batch, 1, 2 * self.units)) for s in steps], axis=1)
        return stacked
