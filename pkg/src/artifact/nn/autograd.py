"""Minimal reverse-mode autodiff over numpy arrays.

A Tensor wraps a row-major numpy array plus an optional gradient of the same
shape. Operations build a graph of parent links and backward closures; calling
``backward()`` on a scalar loss topologically sorts the graph and accumulates
analytic gradients into every tensor that requires them.

The engine is deliberately small: it covers exactly the layer set the models
need (convolution, pooling, batch norm, dense, LSTM gates, attention gating,
softmax/cross-entropy) and nothing more. All reductions are single-threaded
numpy reductions, so results are reproducible run to run.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from scipy.special import expit

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph construction (inference paths)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """Dense n-dimensional array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None, name=""):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad = self.grad + g

    def backward(self):
        """Backpropagate from a scalar; populates .grad on the whole graph."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss tensor")
        if self._backward is None and not self._parents:
            raise RuntimeError("backward() called on a tensor with no recorded graph")
        topo, seen, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar; implementations live below.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, mul(other, -1.0))
        return add(self, -other if np.isscalar(other) else -np.asarray(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / np.asarray(other))

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _make(data, parents, backward, requires) -> Tensor:
    if _GRAD_ENABLED and requires:
        return Tensor(data, requires_grad=True, parents=parents, backward=backward)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise arithmetic


def add(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        # Python scalars are weakly typed: float32 graphs stay float32.
        a = as_tensor(a)
        out_data = a.data + b

        def backward_scalar(g):
            if a.requires_grad:
                a.accumulate_grad(g)

        return _make(out_data, (a,), backward_scalar, a.requires_grad)

    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _make(out_data, (a, b), backward, a.requires_grad or b.requires_grad)


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = as_tensor(a)
        out_data = a.data * b

        def backward_scalar(g):
            if a.requires_grad:
                a.accumulate_grad(g * b)

        return _make(out_data, (a,), backward_scalar, a.requires_grad)

    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), backward, a.requires_grad or b.requires_grad)


def power(a, p) -> Tensor:
    a = as_tensor(a)
    out_data = a.data**p

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * p * a.data ** (p - 1.0))

    return _make(out_data, (a,), backward, a.requires_grad)


def texp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * out_data)

    return _make(out_data, (a,), backward, a.requires_grad)


def tlog(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.log(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g / a.data)

    return _make(out_data, (a,), backward, a.requires_grad)


def tabs(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.abs(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * np.sign(a.data))

    return _make(out_data, (a,), backward, a.requires_grad)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), backward, a.requires_grad)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out_data = expit(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward, a.requires_grad)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    out_data = np.where(mask, a.data, 0.0).astype(a.data.dtype, copy=False)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * mask)

    return _make(out_data, (a,), backward, a.requires_grad)


# ---------------------------------------------------------------------------
# Linear algebra and shape


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul supports 2-D operands only")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g)

    return _make(out_data, (a, b), backward, a.requires_grad or b.requires_grad)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g.reshape(a.shape))

    return _make(out_data, (a,), backward, a.requires_grad)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    out_data = np.ascontiguousarray(a.data.transpose(axes))
    inv = np.argsort(axes)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g.transpose(inv))

    return _make(out_data, (a,), backward, a.requires_grad)


def concat(tensors, axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(sl)])

    requires = any(t.requires_grad for t in tensors)
    return _make(out_data, tuple(tensors), backward, requires)


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    out_data = a.data[idx]
    if not isinstance(out_data, np.ndarray):
        out_data = np.asarray(out_data)

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            a.accumulate_grad(full)

    return _make(out_data.copy(), (a,), backward, a.requires_grad)


# ---------------------------------------------------------------------------
# Reductions


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a.accumulate_grad(np.broadcast_to(g, a.shape).astype(a.dtype, copy=False))
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate_grad(np.broadcast_to(g, a.shape).astype(a.dtype, copy=False))

    return _make(np.asarray(out_data), (a,), backward, a.requires_grad)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.shape[i] for i in axis]))
    else:
        count = a.shape[axis]
    return mul(tsum(a, axis, keepdims), 1.0 / count)


def amax(a, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; gradient routes to the first argmax position."""
    a = as_tensor(a)
    idx = np.argmax(a.data, axis=axis)
    out_data = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis)
    if not keepdims:
        out_data = np.squeeze(out_data, axis=axis)

    def backward(g):
        if not a.requires_grad:
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), g, axis=axis)
        a.accumulate_grad(full)

    return _make(out_data, (a,), backward, a.requires_grad)


# ---------------------------------------------------------------------------
# Neural-network specific operations


def _pad_1d(x: np.ndarray, pl: int, pr: int, mode: str) -> np.ndarray:
    if pl == 0 and pr == 0:
        return x
    np_mode = {"zeros": "constant", "circular": "wrap"}[mode]
    return np.pad(x, ((0, 0), (0, 0), (pl, pr)), mode=np_mode)


def conv1d(x, w, b=None, stride: int = 1, padding=(0, 0), pad_mode: str = "zeros") -> Tensor:
    """Cross-correlation of x[B,C,L] with w[K,C,S] plus optional bias b[K].

    `padding` is (left, right); asymmetric padding keeps even kernels
    length-preserving. Implemented as an im2col view plus one tensordot so
    the heavy lifting happens inside BLAS.
    """
    x, w = as_tensor(x), as_tensor(w)
    if b is not None:
        b = as_tensor(b)
    if isinstance(padding, int):
        padding = (padding, padding)
    pl, pr = padding
    batch, c_in, length = x.shape
    k_out, c_w, s = w.shape
    if c_in != c_w:
        raise ValueError(f"input has {c_in} channels but kernel expects {c_w}")
    xp = _pad_1d(x.data, pl, pr, pad_mode)
    lp = xp.shape[2]
    l_out = (lp - s) // stride + 1
    if l_out < 1:
        raise ValueError("kernel longer than padded input")

    # im2col: one contiguous copy, reused by forward and backward gemms.
    s0, s1, s2 = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, shape=(batch, l_out, c_in, s), strides=(s0, s2 * stride, s1, s2)
    )
    col = np.ascontiguousarray(view).reshape(batch * l_out, c_in * s)
    wmat = w.data.reshape(k_out, c_in * s)
    out_data = np.ascontiguousarray((col @ wmat.T).reshape(batch, l_out, k_out).transpose(0, 2, 1))
    if b is not None:
        out_data += b.data[None, :, None]

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(batch * l_out, k_out)
        if w.requires_grad:
            w.accumulate_grad((g2.T @ col).reshape(k_out, c_in, s))
        if b is not None and b.requires_grad:
            b.accumulate_grad(g.sum(axis=(0, 2)))
        if x.requires_grad:
            if stride == 1:
                # dx is a full correlation of g with the flipped kernel:
                # one im2col + gemm instead of a scatter loop.
                gp = np.pad(g, ((0, 0), (0, 0), (s - 1, s - 1)), mode="constant")
                t0, t1, t2 = gp.strides
                gview = np.lib.stride_tricks.as_strided(
                    gp, shape=(batch, lp, k_out, s), strides=(t0, t2, t1, t2)
                )
                gcol = np.ascontiguousarray(gview).reshape(batch * lp, k_out * s)
                wflip = np.ascontiguousarray(w.data[:, :, ::-1].transpose(0, 2, 1)).reshape(
                    k_out * s, c_in
                )
                dxp = (gcol @ wflip).reshape(batch, lp, c_in).transpose(0, 2, 1)
            else:
                dcol = (g2 @ wmat).reshape(batch, l_out, c_in, s).transpose(0, 2, 1, 3)
                dxp = np.zeros_like(xp)
                for off in range(s):
                    dxp[:, :, off : off + stride * (l_out - 1) + 1 : stride] += dcol[:, :, :, off]
            if pl or pr:
                dx = np.ascontiguousarray(dxp[:, :, pl : pl + length])
                if pad_mode == "circular":
                    if pl:
                        dx[:, :, length - pl :] += dxp[:, :, :pl]
                    if pr:
                        dx[:, :, :pr] += dxp[:, :, pl + length :]
            else:
                dx = np.ascontiguousarray(dxp)
            x.accumulate_grad(dx)

    parents = (x, w) if b is None else (x, w, b)
    requires = x.requires_grad or w.requires_grad or (b is not None and b.requires_grad)
    return _make(out_data, parents, backward, requires)


def maxpool1d(x, size: int) -> Tensor:
    """Non-overlapping max pooling along the last axis; tail remainder dropped."""
    x = as_tensor(x)
    batch, c, length = x.shape
    l_out = length // size
    if l_out < 1:
        raise ValueError(f"pool size {size} exceeds length {length}")
    v = x.data[:, :, : l_out * size].reshape(batch, c, l_out, size)
    idx = np.argmax(v, axis=3)
    out_data = np.take_along_axis(v, idx[..., None], axis=3)[..., 0]

    def backward(g):
        if not x.requires_grad:
            return
        dv = np.zeros_like(v)
        np.put_along_axis(dv, idx[..., None], g[..., None], axis=3)
        dx = np.zeros_like(x.data)
        dx[:, :, : l_out * size] = dv.reshape(batch, c, l_out * size)
        x.accumulate_grad(dx)

    return _make(out_data, (x,), backward, x.requires_grad)


def dropout(x, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: scaling happens at train time, eval is a pass-through."""
    if not 0 <= rate < 1:
        raise ValueError("dropout rate must be in [0, 1)")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    out_data = x.data * mask

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * mask)

    return _make(out_data, (x,), backward, x.requires_grad)


def batch_norm(x, gamma, beta, eps: float, training: bool,
               running_mean=None, running_var=None):
    """Fused per-channel batch normalization over [B, C, L].

    Train mode normalizes with batch statistics (population variance) and
    returns (out, batch_mean, batch_var) so the layer can update its running
    buffers; eval mode normalizes with the provided running statistics.
    Fused forward/backward keeps the step from materializing the dozen
    [B,C,L] intermediates the composite formulation would create.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.shape[1]
    gam = gamma.data.reshape(1, c, 1)
    bet = beta.data.reshape(1, c, 1)
    requires = x.requires_grad or gamma.requires_grad or beta.requires_grad

    if training:
        mu = x.data.mean(axis=(0, 2), keepdims=True)
        var = ((x.data - mu) ** 2).mean(axis=(0, 2), keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xn = (x.data - mu) * inv
        out_data = gam * xn + bet

        def backward(g):
            if beta.requires_grad:
                beta.accumulate_grad(g.sum(axis=(0, 2)))
            if gamma.requires_grad:
                gamma.accumulate_grad((g * xn).sum(axis=(0, 2)))
            if x.requires_grad:
                dxn = g * gam
                m1 = dxn.mean(axis=(0, 2), keepdims=True)
                m2 = (dxn * xn).mean(axis=(0, 2), keepdims=True)
                x.accumulate_grad(inv * (dxn - m1 - xn * m2))

        out = _make(out_data, (x, gamma, beta), backward, requires)
        return out, mu.reshape(-1), var.reshape(-1)

    rm = np.asarray(running_mean).reshape(1, c, 1)
    rv = np.asarray(running_var).reshape(1, c, 1)
    inv_r = 1.0 / np.sqrt(rv + eps)
    xn_r = (x.data - rm) * inv_r
    out_data = gam * xn_r + bet

    def backward_eval(g):
        if beta.requires_grad:
            beta.accumulate_grad(g.sum(axis=(0, 2)))
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xn_r).sum(axis=(0, 2)))
        if x.requires_grad:
            x.accumulate_grad(g * (gam * inv_r))

    return _make(out_data, (x, gamma, beta), backward_eval, requires), None, None


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if x.requires_grad:
            dot = (g * out_data).sum(axis=axis, keepdims=True)
            x.accumulate_grad(out_data * (g - dot))

    return _make(out_data, (x,), backward, x.requires_grad)


def cross_entropy(logits, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer labels under softmax(logits[B,K])."""
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    batch = logits.shape[0]
    if labels.shape != (batch,):
        raise ValueError("labels must be a 1-D integer array matching the batch")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - lse
    loss = -log_probs[np.arange(batch), labels].mean()
    out_data = np.asarray(loss, dtype=logits.dtype)

    def backward(g):
        if logits.requires_grad:
            probs = np.exp(log_probs)
            probs[np.arange(batch), labels] -= 1.0
            logits.accumulate_grad(g * probs / batch)

    return _make(out_data, (logits,), backward, logits.requires_grad)
