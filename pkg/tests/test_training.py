"""Training loop: early stopping semantics, determinism, dual-optimizer phases."""

import numpy as np
import pytest

from artifact.nn import autograd as ag
from artifact.nn.autograd import Tensor
from artifact.nn.training import TrainConfig, evaluate_loss, train, train_dual_optimizer
from artifact.models import build_model


class StubModel:
    """Produces a scripted validation-loss sequence; training steps are inert.

    Validation logits are (0, c) with all-zero labels, so the cross-entropy is
    log(1 + e^c); inverting gives the c that realizes any scripted loss.
    """

    def __init__(self, val_losses):
        self.val_losses = list(val_losses)
        self.eval_calls = 0
        self.p = Tensor(np.zeros(1, dtype=np.float64), requires_grad=True, name="p")

    def parameters(self):
        return [self.p]

    def state_dict(self):
        return {"p": self.p.data.copy(), "eval_calls": np.array([self.eval_calls])}

    def load_state_dict(self, state):
        self.p.data = state["p"].copy()

    def seed_dropout(self, entropy):
        pass

    def forward(self, x, training=False):
        batch = len(x)
        if training:
            c = 0.0
        else:
            loss = self.val_losses[min(self.eval_calls, len(self.val_losses) - 1)]
            self.eval_calls += 1
            c = float(np.log(np.expm1(loss)))
        logits = np.zeros((batch, 2))
        logits[:, 1] = c
        return ag.add(ag.mul(self.p, 0.0), logits)


def stub_sets(n=4):
    x = np.zeros((n, 8), dtype=np.float32)
    y = np.zeros(n, dtype=np.int64)
    return (x, y), (x, y)


class TestEarlyStopping:
    def test_strictly_decreasing_runs_all_epochs(self):
        script = [1.0 - 0.005 * i for i in range(100)]
        model = StubModel(script)
        train_set, val_set = stub_sets()
        cfg = TrainConfig(batch_size=4, max_epochs=100, patience=20, seed=0)
        _, history = train(model, train_set, val_set, cfg)
        assert len(history) == 100
        assert history[-1]["val_loss"] == pytest.approx(script[-1], abs=1e-9)

    def test_improve_once_then_plateau_stops_at_patience(self):
        model = StubModel([0.7] * 200)  # epoch 1 improves over inf, then flat
        train_set, val_set = stub_sets()
        cfg = TrainConfig(batch_size=4, max_epochs=100, patience=20, seed=0)
        _, history = train(model, train_set, val_set, cfg)
        assert len(history) == 21  # 1 improvement + 20 stalled epochs

    def test_improvement_resets_patience(self):
        script = [1.0] + [0.9] * 5 + [0.8] + [0.85] * 100
        model = StubModel(script)
        train_set, val_set = stub_sets()
        cfg = TrainConfig(batch_size=4, max_epochs=100, patience=10, seed=0)
        _, history = train(model, train_set, val_set, cfg)
        assert len(history) == 7 + 10  # improvements at epochs 1, 2, 7

    def test_best_weights_restored(self):
        script = [0.5] + [2.0] * 25
        model = StubModel(script)
        marker = model.p.data.copy()
        train_set, val_set = stub_sets()
        cfg = TrainConfig(batch_size=4, max_epochs=50, patience=20, seed=0)
        best_state, history = train(model, train_set, val_set, cfg)
        assert len(history) == 21
        assert best_state["eval_calls"][0] == 1  # snapshot taken after epoch 1
        assert np.array_equal(model.p.data, marker)

    def test_empty_sets_rejected(self):
        model = StubModel([1.0])
        x = np.zeros((0, 8), dtype=np.float32)
        y = np.zeros(0, dtype=np.int64)
        with pytest.raises(ValueError):
            train(model, (x, y), (x, y), TrainConfig())

    def test_patience_cannot_exceed_max_epochs(self):
        with pytest.raises(ValueError):
            TrainConfig(max_epochs=10, patience=20)


def tiny_separable_data(n=48, seed=0):
    """Class 1 carries a large mid-epoch spike; class 0 is plain noise."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2560)).astype(np.float32) * 0.1 + 0.5
    y = np.arange(n) % 2
    x[y == 1, 1200:1230] += 3.0
    return x.astype(np.float32), y.astype(np.int64)


class TestRealTraining:
    def test_loss_decreases_on_separable_data(self):
        # eval-mode batch-norm stats take a while to converge at momentum 0.9,
        # so allow enough epochs for the validation loss to reflect the fit
        x, y = tiny_separable_data()
        model = build_model("heuristic_1dcnn", seed=1)
        cfg = TrainConfig(batch_size=16, max_epochs=25, patience=25, lr=1e-2, seed=3)
        _, history = train(model, (x, y), (x, y), cfg)
        assert min(h["val_loss"] for h in history) < history[0]["val_loss"]
        assert history[-1]["train_loss"] < history[0]["train_loss"]

    def test_same_seed_identical_history_and_weights(self):
        x, y = tiny_separable_data()
        cfg = TrainConfig(batch_size=16, max_epochs=3, patience=3, lr=1e-3, seed=11)
        m1 = build_model("cnn", seed=2)
        _, h1 = train(m1, (x, y), (x, y), cfg)
        m2 = build_model("cnn", seed=2)
        _, h2 = train(m2, (x, y), (x, y), cfg)
        assert h1 == h2
        s1, s2 = m1.state_dict(), m2.state_dict()
        assert all(np.array_equal(s1[k], s2[k]) for k in s1)


class TestDualOptimizer:
    def test_phases_freeze_correct_parts(self):
        x, y = tiny_separable_data()
        model = build_model("heuristic_1dcnn", seed=4)
        conv_part, dense_head = model.parameter_partition()
        dense_init = [p.data.copy() for p in dense_head]

        phase1_conv = {}

        orig_load = model.load_state_dict
        states = []

        def recording_load(state):
            states.append({k: v.copy() for k, v in state.items()})
            orig_load(state)

        model.load_state_dict = recording_load
        cfg = TrainConfig(batch_size=16, max_epochs=4, patience=4, lr=1e-2, seed=5)
        _, history = train_dual_optimizer(model, (x, y), (x, y), cfg)
        model.load_state_dict = orig_load

        # after phase 1 the dense head still equals its initialization
        phase1_state = states[0]
        for p, init in zip(dense_head, dense_init):
            assert np.array_equal(phase1_state[p.name], init)
        # after phase 2 the conv part equals the phase-1 output
        for p in conv_part:
            assert np.array_equal(p.data, phase1_state[p.name])
        assert history["phase1"] and history["phase2"]

    def test_phase2_improves_over_phase1(self):
        x, y = tiny_separable_data(n=64, seed=6)
        model = build_model("heuristic_1dcnn", seed=7)
        cfg = TrainConfig(batch_size=16, max_epochs=15, patience=15, lr=1e-2, seed=8)
        _, history = train_dual_optimizer(model, (x, y), (x, y), cfg)
        best1 = min(h["val_loss"] for h in history["phase1"])
        best2 = min(h["val_loss"] for h in history["phase2"])
        assert best2 < best1

    def test_partitionless_model_rejected(self):
        model = build_model("cnn", seed=0)
        x, y = tiny_separable_data(n=8)
        with pytest.raises(ValueError):
            train_dual_optimizer(model, (x, y), (x, y), TrainConfig())
