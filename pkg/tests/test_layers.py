"""Layer behavior: batch norm statistics, BiLSTM oracle, Adam, serialization."""

import numpy as np
import pytest

from artifact.nn import autograd as ag
from artifact.nn.autograd import Tensor
from artifact.nn.layers import BatchNorm1d, BiLSTM, Conv1d, Dense, init_rng, orthogonal
from artifact.nn.optim import Adam, adam_step, init_adam_state
from artifact.nn.serialization import WeightFormatError, load_weights, save_weights

from reference import bilstm_reference, finite_diff_grad, rel_error

TOL = 1e-4


class TestBatchNorm:
    def test_train_mode_normalizes(self):
        rng = np.random.default_rng(0)
        bn = BatchNorm1d("bn", 4, dtype=np.float64)
        x = Tensor(rng.standard_normal((8, 4, 16)) * 3.0 + 5.0)
        out = bn.forward(x, training=True)
        mean = out.data.mean(axis=(0, 2))
        var = out.data.var(axis=(0, 2))
        assert np.allclose(mean, 0.0, atol=1e-10)
        assert np.allclose(var, 1.0, atol=1e-4)

    def test_eval_uses_running_stats_and_is_deterministic(self):
        rng = np.random.default_rng(1)
        bn = BatchNorm1d("bn", 3, dtype=np.float64)
        for _ in range(50):
            bn.forward(Tensor(rng.standard_normal((16, 3, 8)) * 2.0 + 1.0), training=True)
        x = Tensor(rng.standard_normal((4, 3, 8)))
        out1 = bn.forward(x, training=False)
        out2 = bn.forward(x, training=False)
        assert np.array_equal(out1.data, out2.data)
        # running stats converge toward the true distribution
        assert np.allclose(bn.running_mean, 1.0, atol=0.3)
        assert np.allclose(bn.running_var, 4.0, atol=1.0)

    def test_gradcheck_train_mode(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((4, 3, 6))
        bn = BatchNorm1d("bn", 3, dtype=np.float64)
        bn.gamma.data = rng.standard_normal(3)
        bn.beta.data = rng.standard_normal(3)
        labels = rng.integers(0, 2, 4)

        def loss_from(x_arr):
            out = bn.forward(Tensor(x_arr), training=True)
            return ag.cross_entropy(ag.tmean(out, axis=2), labels)

        xt = Tensor(x.copy(), requires_grad=True)
        loss = ag.cross_entropy(ag.tmean(bn.forward(xt, training=True), axis=2), labels)
        loss.backward()
        numeric = finite_diff_grad(lambda a: float(loss_from(a).data), x)
        assert rel_error(xt.grad.ravel(), numeric) < TOL
        # parameter gradients too
        for p, arr in ((bn.gamma, bn.gamma.data.copy()), (bn.beta, bn.beta.data.copy())):
            def loss_p(v, p=p):
                saved = p.data
                p.data = v
                out = loss_from(x)
                p.data = saved
                return float(out.data)

            numeric = finite_diff_grad(loss_p, arr)
            assert rel_error(p.grad.ravel(), numeric) < TOL


class TestDense:
    def test_forward_shape_and_grad(self):
        d = Dense("fc", 5, 3, seed=1, dtype=np.float64)
        x = Tensor(np.random.default_rng(3).standard_normal((2, 5)), requires_grad=True)
        out = d.forward(x)
        assert out.shape == (2, 3)
        ag.tsum(out).backward()
        assert x.grad.shape == (2, 5)
        assert d.w.grad is not None and d.b.grad is not None

    def test_seeded_init_reproducible(self):
        d1 = Dense("fc", 10, 4, seed=7)
        d2 = Dense("fc", 10, 4, seed=7)
        d3 = Dense("fc", 10, 4, seed=8)
        assert np.array_equal(d1.w.data, d2.w.data)
        assert not np.array_equal(d1.w.data, d3.w.data)


class TestBiLSTM:
    def test_zero_weights_zero_output(self):
        lstm = BiLSTM("l", d_in=3, units=4, seed=0, dtype=np.float64)
        for p in lstm.parameters():
            p.data = np.zeros_like(p.data)
        x = Tensor(np.zeros((2, 5, 3)))
        out = lstm.forward(x)
        assert np.array_equal(out.data, np.zeros((2, 5, 8)))

    def test_t1_uses_single_step(self):
        lstm = BiLSTM("l", d_in=3, units=4, seed=1, dtype=np.float64)
        x = np.random.default_rng(4).standard_normal((2, 1, 3))
        out = lstm.forward(Tensor(x))
        assert out.shape == (2, 1, 8)
        params = {
            d: (lstm.params[f"l.{d}.w_ih"].data, lstm.params[f"l.{d}.w_hh"].data,
                lstm.params[f"l.{d}.b"].data)
            for d in ("fwd", "bwd")
        }
        ref = bilstm_reference(x, params, units=4)
        assert np.allclose(out.data, ref, atol=1e-12)

    def test_matches_reference_random_instances(self):
        rng = np.random.default_rng(5)
        worst = 0.0
        for trial in range(100):
            d_in = int(rng.integers(1, 5))
            units = int(rng.integers(1, 5))
            batch = int(rng.integers(1, 4))
            t_len = int(rng.integers(1, 7))
            lstm = BiLSTM("l", d_in=d_in, units=units, seed=trial, dtype=np.float64)
            x = rng.standard_normal((batch, t_len, d_in))
            out = lstm.forward(Tensor(x))
            params = {
                d: (lstm.params[f"l.{d}.w_ih"].data, lstm.params[f"l.{d}.w_hh"].data,
                    lstm.params[f"l.{d}.b"].data)
                for d in ("fwd", "bwd")
            }
            ref = bilstm_reference(x, params, units=units)
            worst = max(worst, float(np.max(np.abs(out.data - ref))))
        assert worst < 1e-10

    def test_gradcheck(self):
        rng = np.random.default_rng(6)
        lstm = BiLSTM("l", d_in=2, units=3, seed=9, dtype=np.float64)
        x = rng.standard_normal((2, 4, 2))
        labels = rng.integers(0, 2, 2)

        def loss_value():
            out = lstm.forward(Tensor(x))
            pooled = ag.tmean(out, axis=1)
            return ag.cross_entropy(pooled[:, :2], labels)

        loss = None
        xt = Tensor(x.copy(), requires_grad=True)
        out = lstm.forward(xt)
        loss = ag.cross_entropy(ag.tmean(out, axis=1)[:, :2], labels)
        loss.backward()

        for name, p in lstm.named_parameters():
            arr = p.data.copy()

            def f(v, p=p):
                saved = p.data
                p.data = v
                val = float(loss_value().data)
                p.data = saved
                return val

            coords = [tuple(idx) for idx in
                      np.random.default_rng(1).integers(0, np.array(arr.shape), size=(6, arr.ndim))]
            numeric = finite_diff_grad(f, arr, coords=coords)
            analytic = np.array([p.grad[c] for c in coords])
            assert rel_error(analytic, numeric) < TOL, name

    def test_orthogonal_init_is_orthogonal(self):
        q = orthogonal(np.random.default_rng(0), 16, np.float64)
        assert np.allclose(q @ q.T, np.eye(16), atol=1e-10)


class TestAdam:
    def test_zero_gradient_no_change(self):
        p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        opt = Adam([p], lr=0.1)
        p.grad = np.zeros(2)
        opt.step()
        assert np.array_equal(p.data, [1.0, 2.0])

    def test_first_step_magnitude(self):
        # constant gradient, one step: update is lr * g/|g| = lr in magnitude
        p = Tensor(np.array([0.0]), requires_grad=True)
        opt = Adam([p], lr=0.05)
        p.grad = np.array([3.7])
        opt.step()
        assert abs(p.data[0] + 0.05) < 1e-6

    def test_quadratic_bowl_convergence(self):
        p = Tensor(np.array([2.5]), requires_grad=True)
        opt = Adam([p], lr=0.05)
        for _ in range(500):
            opt.zero_grad()
            p.grad = 2.0 * p.data  # d/dw of w^2
            opt.step()
        assert abs(p.data[0]) < 1e-2

    def test_nan_gradient_aborts(self):
        p = Tensor(np.array([1.0]), requires_grad=True, name="p")
        opt = Adam([p])
        p.grad = np.array([np.nan])
        with pytest.raises(FloatingPointError):
            opt.step()

    def test_functional_adam_matches_class(self):
        rng = np.random.default_rng(7)
        arrs = [rng.standard_normal(4), rng.standard_normal((2, 3))]
        tensors = [Tensor(a.copy(), requires_grad=True) for a in arrs]
        opt = Adam(tensors, lr=0.01)
        state = init_adam_state(arrs)
        params = [a.copy() for a in arrs]
        for step in range(5):
            grads = [rng.standard_normal(a.shape) for a in arrs]
            for t, g in zip(tensors, grads):
                t.grad = g
            opt.step()
            params, state = adam_step(params, grads, state, lr=0.01)
        for t, p in zip(tensors, params):
            assert np.allclose(t.data, p, atol=1e-12)

    def test_none_grad_skipped(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam([p])
        opt.step()
        assert p.data[0] == 1.0


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        state = {"a.w": rng.standard_normal((3, 4)).astype(np.float32),
                 "b.bias": rng.standard_normal(7).astype(np.float32)}
        meta = {"model_kind": "cnn", "rng_seed": 5, "profile": "toy",
                "operating_threshold": 0.5}
        p1 = tmp_path / "w1.bin"
        save_weights(p1, state, meta)
        meta2, state2 = load_weights(p1)
        p2 = tmp_path / "w2.bin"
        save_weights(p2, state2, {k: v for k, v in meta2.items() if k != "format_version"})
        assert p1.read_bytes() == p2.read_bytes()
        for k in state:
            assert np.array_equal(state[k], state2[k])
        assert meta2["model_kind"] == "cnn"

    def test_checksum_tamper_detected(self, tmp_path):
        state = {"w": np.ones((2, 2), dtype=np.float32)}
        path = tmp_path / "w.bin"
        save_weights(path, state, {"model_kind": "cnn"})
        raw = bytearray(path.read_bytes())
        raw[-1] ^= 0xFF  # flip a bit inside the last parameter blob
        path.write_bytes(bytes(raw))
        with pytest.raises(WeightFormatError):
            load_weights(path)

    def test_version_mismatch_refused(self, tmp_path):
        state = {"w": np.ones(2, dtype=np.float32)}
        path = tmp_path / "w.bin"
        save_weights(path, state, {"model_kind": "cnn"})
        raw = path.read_bytes()
        raw = raw.replace(b'"format_version":1', b'"format_version":9')
        path.write_bytes(raw)
        with pytest.raises(WeightFormatError):
            load_weights(path)

    def test_not_a_weight_file(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"definitely not weights")
        with pytest.raises(WeightFormatError):
            load_weights(path)


def test_init_rng_name_keyed():
    a = init_rng(3, "layer.a").standard_normal(5)
    b = init_rng(3, "layer.a").standard_normal(5)
    c = init_rng(3, "layer.b").standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
