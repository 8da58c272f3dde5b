"""Attention block: channel/spatial gates, composed block, activation map."""

import numpy as np
import pytest

from artifact.nn import autograd as ag
from artifact.nn.attention import (
    CBAM,
    AttentionMap,
    ChannelAttention,
    SpatialAttention,
    activation_attention_map,
    edge_exclusion_steps,
)
from artifact.nn.autograd import Tensor

from reference import (
    activation_map_raw_reference,
    channel_attention_reference,
    finite_diff_grad,
    rel_error,
    spatial_attention_reference,
)

TOL = 1e-4


def zero_params(layer):
    for p in layer.parameters():
        p.data = np.zeros_like(p.data)


class TestChannelAttention:
    def test_zero_everything_gives_half(self):
        ca = ChannelAttention("ca", channels=8, seed=0, dtype=np.float64)
        zero_params(ca)
        out = ca.forward(Tensor(np.zeros((2, 8, 16))))
        assert np.allclose(out.data, 0.5)
        assert out.shape == (2, 8, 1)

    def test_constant_channels_closed_form(self):
        # constant per channel: avg-pool equals max-pool, so gate = sigmoid(2*MLP(c))
        rng = np.random.default_rng(1)
        ca = ChannelAttention("ca", channels=6, reduction_ratio=2, seed=3, dtype=np.float64)
        c = rng.standard_normal(6)
        f = np.broadcast_to(c[None, :, None], (3, 6, 10)).copy()
        out = ca.forward(Tensor(f))
        w1, b1 = ca.fc1.w.data, ca.fc1.b.data
        w2, b2 = ca.fc2.w.data, ca.fc2.b.data
        mlp = np.maximum(c @ w1 + b1, 0.0) @ w2 + b2
        expected = 1.0 / (1.0 + np.exp(-2.0 * mlp))
        assert np.allclose(out.data[0, :, 0], expected, atol=1e-12)

    def test_matches_loop_reference(self):
        rng = np.random.default_rng(2)
        worst = 0.0
        for trial in range(100):
            channels = int(rng.integers(2, 9))
            batch = int(rng.integers(1, 4))
            length = int(rng.integers(2, 12))
            ca = ChannelAttention("ca", channels, reduction_ratio=2, seed=trial, dtype=np.float64)
            f = rng.standard_normal((batch, channels, length))
            out = ca.forward(Tensor(f))
            ref = channel_attention_reference(
                f, ca.fc1.w.data, ca.fc1.b.data, ca.fc2.w.data, ca.fc2.b.data
            )
            worst = max(worst, float(np.max(np.abs(out.data - ref))))
        assert worst < 1e-10

    def test_values_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(3)
        ca = ChannelAttention("ca", 4, seed=1, dtype=np.float64)
        out = ca.forward(Tensor(rng.standard_normal((2, 4, 7)) * 50))
        assert np.all(out.data > 0.0) and np.all(out.data < 1.0)


class TestSpatialAttention:
    def test_zero_conv_gives_half(self):
        sa = SpatialAttention("sa", seed=0, dtype=np.float64)
        zero_params(sa)
        out = sa.forward(Tensor(np.zeros((2, 4, 12))))
        assert np.allclose(out.data, 0.5)
        assert out.shape == (2, 1, 12)

    def test_single_channel_pools_equal_input(self):
        rng = np.random.default_rng(4)
        sa = SpatialAttention("sa", seed=2, dtype=np.float64)
        f = rng.standard_normal((1, 1, 9))
        out = sa.forward(Tensor(f))
        ref = spatial_attention_reference(f, sa.conv.w.data, sa.conv.b.data)
        assert np.allclose(out.data, ref, atol=1e-12)

    def test_matches_loop_reference(self):
        rng = np.random.default_rng(5)
        worst = 0.0
        for trial in range(100):
            channels = int(rng.integers(1, 7))
            batch = int(rng.integers(1, 4))
            length = int(rng.integers(7, 16))
            sa = SpatialAttention("sa", seed=trial, dtype=np.float64)
            f = rng.standard_normal((batch, channels, length))
            out = sa.forward(Tensor(f))
            ref = spatial_attention_reference(f, sa.conv.w.data, sa.conv.b.data)
            worst = max(worst, float(np.max(np.abs(out.data - ref))))
        assert worst < 1e-10


class TestCBAMBlock:
    def test_zero_attention_quarters_input(self):
        cbam = CBAM("cb", channels=4, seed=0, dtype=np.float64)
        zero_params(cbam)
        rng = np.random.default_rng(6)
        f = rng.standard_normal((2, 4, 10))
        out = cbam.forward(Tensor(f))
        assert np.allclose(out.data, 0.25 * f, atol=1e-15)

    def test_shape_preserved_and_contracting(self):
        rng = np.random.default_rng(7)
        cbam = CBAM("cb", channels=5, seed=4, dtype=np.float64)
        f = rng.standard_normal((3, 5, 14))
        out = cbam.forward(Tensor(f))
        assert out.shape == f.shape
        nonzero = f != 0
        assert np.all(np.abs(out.data[nonzero]) < np.abs(f[nonzero]))

    def test_gradcheck_through_block(self):
        rng = np.random.default_rng(8)
        cbam = CBAM("cb", channels=4, reduction_ratio=2, seed=5, dtype=np.float64)
        f = rng.standard_normal((2, 4, 9))
        labels = rng.integers(0, 2, 2)

        def loss_value(arr):
            out = cbam.forward(Tensor(arr))
            return ag.cross_entropy(ag.tmean(out, axis=2)[:, :2], labels)

        ft = Tensor(f.copy(), requires_grad=True)
        loss = ag.cross_entropy(ag.tmean(cbam.forward(ft), axis=2)[:, :2], labels)
        loss.backward()
        numeric = finite_diff_grad(lambda a: float(loss_value(a).data), f)
        assert rel_error(ft.grad.ravel(), numeric) < TOL

        for name, p in cbam.named_parameters():
            arr = p.data.copy()

            def f_param(v, p=p):
                saved = p.data
                p.data = v
                val = float(loss_value(f).data)
                p.data = saved
                return val

            numeric = finite_diff_grad(f_param, arr)
            assert rel_error(p.grad.ravel(), numeric) < TOL, name


class TestActivationAttentionMap:
    def test_hand_arithmetic(self):
        amap = activation_attention_map(np.array([[0.0, 1.0, 2.0]]), epoch_index=0,
                                        time_scale_s_per_step=10.0)
        assert np.allclose(amap.values, [0.0, 1.0 / 16.0, 1.0])
        assert not amap.degenerate

    def test_symmetric_channels_uniform_map(self):
        a = np.array([[1.0, 0.0], [0.0, 1.0]])
        amap = activation_attention_map(a, 0, time_scale_s_per_step=10.0)
        assert amap.degenerate  # raw map is flat, normalizes to zeros
        assert np.all(amap.values == 0.0)

    def test_matches_loop_reference(self):
        rng = np.random.default_rng(9)
        worst = 0.0
        for _ in range(100):
            channels = int(rng.integers(1, 6))
            length = int(rng.integers(2, 30))
            a = rng.standard_normal((channels, length)) * rng.uniform(0.5, 3)
            raw_ref = activation_map_raw_reference(a)
            raw_ours = np.sum(np.abs(a) ** 4.0, axis=0)
            worst = max(worst, float(np.max(np.abs(raw_ours - raw_ref))))
        assert worst < 1e-10

    def test_sign_flip_invariance(self):
        rng = np.random.default_rng(10)
        a = rng.standard_normal((3, 20))
        m1 = activation_attention_map(a, 0, 0.5)
        m2 = activation_attention_map(-a, 0, 0.5)
        assert np.array_equal(m1.values, m2.values)

    def test_monotone_in_channel_magnitudes(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((4, 15))
        amap = activation_attention_map(a, 0, 0.5)
        raw = np.sum(np.abs(a) ** 4, axis=0)
        l1, l2 = 3, 9
        if np.all(np.abs(a[:, l1]) >= np.abs(a[:, l2])):
            assert raw[l1] >= raw[l2]
        # constructed monotone case
        big = np.abs(a[:, l2]) + 1.0
        a[:, l1] = big
        raw = np.sum(np.abs(a) ** 4, axis=0)
        assert raw[l1] >= raw[l2]

    def test_positive_scaling_leaves_normalized_map_unchanged(self):
        rng = np.random.default_rng(12)
        a = rng.standard_normal((3, 25))
        m1 = activation_attention_map(a, 0, 0.5)
        m2 = activation_attention_map(3.2 * a, 0, 0.5)
        assert np.allclose(m1.values, m2.values, atol=1e-12)
        raw1 = np.sum(np.abs(a) ** 4, axis=0)
        raw2 = np.sum(np.abs(3.2 * a) ** 4, axis=0)
        assert np.allclose(raw2, 3.2**4 * raw1, rtol=1e-12)

    def test_edge_exclusion_zeroed(self):
        rng = np.random.default_rng(13)
        a = rng.standard_normal((2, 40))
        amap = activation_attention_map(a, 0, time_scale_s_per_step=0.5)
        n_edge = edge_exclusion_steps(0.7, 0.5)
        assert n_edge == 2
        assert np.all(amap.values[:2] == 0.0) and np.all(amap.values[-2:] == 0.0)
        interior = amap.values[2:-2]
        assert interior.max() == 1.0 and interior.min() == 0.0

    def test_all_zero_input_degenerate(self):
        amap = activation_attention_map(np.zeros((3, 30)), 0, 0.5)
        assert amap.degenerate
        assert np.all(amap.values == 0.0)

    def test_round_trip_dict(self):
        rng = np.random.default_rng(14)
        amap = activation_attention_map(rng.standard_normal((2, 40)), 7, 0.5)
        back = AttentionMap.from_dict(amap.to_dict())
        assert np.allclose(back.values, amap.values)
        assert back.epoch_index == 7
        assert back.degenerate == amap.degenerate
        flat = AttentionMap.from_dict(activation_attention_map(np.zeros((2, 40)), 1, 0.5).to_dict())
        assert flat.degenerate
