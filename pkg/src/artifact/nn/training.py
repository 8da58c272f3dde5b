"""Training loop: mini-batch Adam with early stopping on validation loss.

Model protocol: ``forward(x, training)`` returning logits, ``parameters()``,
``state_dict()``/``load_state_dict()``, and ``seed_dropout(seed)``. Given a
seed the whole run is reproducible batch for batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .optim import Adam


@dataclass
class TrainConfig:
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 20
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for lo in range(0, n, batch_size):
        yield order[lo : lo + batch_size]


def evaluate_loss(model, x: np.ndarray, y: np.ndarray, batch_size: int = 256) -> float:
    """Mean cross-entropy in eval mode (dropout off, running batch-norm stats)."""
    total = 0.0
    with ag.no_grad():
        for lo in range(0, len(x), batch_size):
            xb = x[lo : lo + batch_size]
            yb = y[lo : lo + batch_size]
            loss = ag.cross_entropy(model.forward(xb, training=False), yb)
            total += float(loss.data) * len(xb)
    return total / len(x)


def train(model, train_set, val_set, cfg: TrainConfig):
    """Train until `patience` epochs pass without a validation-loss improvement.

    Returns (best_state, history): the weights at the best validation loss and
    one history row per epoch. Improvement is strict (`<`); a plateau counts
    toward patience.
    """
    x_train, y_train = train_set
    x_val, y_val = val_set
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("train and validation sets must be non-empty")

    shuffle_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0x5487F1E)))
    model.seed_dropout((cfg.seed, 0xD40))
    opt = Adam(model.parameters(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)

    best_loss = np.inf
    best_state = model.state_dict()
    since_improve = 0
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        running, seen = 0.0, 0
        for idx in _batches(len(x_train), cfg.batch_size, shuffle_rng):
            opt.zero_grad()
            loss = ag.cross_entropy(model.forward(x_train[idx], training=True), y_train[idx])
            loss.backward()
            opt.step()
            running += float(loss.data) * len(idx)
            seen += len(idx)
        train_loss = running / seen
        val_loss = evaluate_loss(model, x_val, y_val)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        if val_loss < best_loss:
            best_loss = val_loss
            best_state = model.state_dict()
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= cfg.patience:
                break
    model.load_state_dict(best_state)
    return best_state, history


def train_dual_optimizer(model, train_set, val_set, cfg: TrainConfig):
    """Two-phase training for the heuristic model.

    Phase 1 trains the convolutional part with the dense head frozen at its
    initialization; phase 2 freezes the convolutional part at its phase-1 best
    and fine-tunes the dense head. Each phase gets a fresh Adam state and the
    same early-stopping rule.
    """
    part = getattr(model, "parameter_partition", None)
    if part is None:
        raise ValueError("model must expose parameter_partition() for dual-optimizer training")
    conv_params, dense_params = part()
    if not conv_params or not dense_params:
        raise ValueError("partition must yield both a conv part and a dense head")

    x_train, y_train = train_set
    x_val, y_val = val_set
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("train and validation sets must be non-empty")

    all_params = model.parameters()
    history = {"phase1": [], "phase2": []}
    for phase_no, (phase, params) in enumerate(
        (("phase1", conv_params), ("phase2", dense_params)), start=1
    ):
        shuffle_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0x5487F1E, phase_no)))
        model.seed_dropout((cfg.seed, 0xD40, phase_no))
        opt = Adam(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
        best_loss = np.inf
        best_state = model.state_dict()
        since_improve = 0
        for epoch in range(1, cfg.max_epochs + 1):
            running, seen = 0.0, 0
            for idx in _batches(len(x_train), cfg.batch_size, shuffle_rng):
                for p in all_params:
                    p.grad = None  # frozen params still receive grads from backward
                loss = ag.cross_entropy(model.forward(x_train[idx], training=True), y_train[idx])
                loss.backward()
                opt.step()
                running += float(loss.data) * len(idx)
                seen += len(idx)
            val_loss = evaluate_loss(model, x_val, y_val)
            history[phase].append(
                {"epoch": epoch, "train_loss": running / seen, "val_loss": val_loss}
            )
            if val_loss < best_loss:
                best_loss = val_loss
                best_state = model.state_dict()
                since_improve = 0
            else:
                since_improve += 1
                if since_improve >= cfg.patience:
                    break
        model.load_state_dict(best_state)
    return model.state_dict(), history
