import logging
import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from tvfx.losses import (
    Balancer,
    BalancerState,
    LossWeights,
    balance_gradients,
    hinge_discriminator,
    hinge_generator,
    mode_seeking,
    mrstft,
    stft_loss,
)


def t(*v):
    return torch.tensor(v, dtype=torch.float64)


class TestHinge:
    @pytest.mark.parametrize("score,expected", [(1.0, 0.0), (0.0, 1.0), (-1.0, 2.0)])
    def test_generator(self, score, expected):
        assert hinge_generator(t(score)).item() == expected

    @pytest.mark.parametrize("real,fake,expected", [(1.0, -1.0, 0.0), (0.0, 0.0, 2.0), (-1.0, 1.0, 4.0)])
    def test_discriminator(self, real, fake, expected):
        assert hinge_discriminator(t(real), t(fake)).item() == expected

    def test_batch_average(self):
        assert hinge_generator(t(1.0, 0.0, -1.0)).item() == pytest.approx(1.0)

    @given(s=st.floats(-50, 50), r=st.floats(-50, 50))
    def test_non_negative_and_zero_on_margin(self, s, r):
        assert hinge_generator(t(s)).item() >= 0
        assert hinge_discriminator(t(r), t(s)).item() >= 0
        if s >= 1:
            assert hinge_generator(t(s)).item() == 0


class TestStft:
    def test_identical(self):
        y = torch.randn(2, 1, 2048, dtype=torch.float64)
        assert stft_loss(y, y, 512).item() == 0.0
        assert mrstft(y, y).item() == 0.0

    def test_doubled_signal_closed_form(self):
        L = 256
        y = torch.randn(1, L, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
        val = stft_loss(y, 2 * y, L).item()
        bins_times_frames = (L // 2 + 1) * 1
        assert val == pytest.approx(1.0 + bins_times_frames / L * math.log(2), abs=1e-10)

    def test_band_limit_excludes_bins(self):
        L, fs = 256, 16000
        y = torch.randn(1, L, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
        n_bins = int(4000 * L / fs) + 1
        val = stft_loss(y, 2 * y, L, sample_rate=fs, band_limit=4000.0).item()
        assert val == pytest.approx(1.0 + n_bins / L * math.log(2), abs=1e-10)

    def test_zero_reference(self):
        with pytest.raises(ValueError):
            stft_loss(torch.zeros(1, 512), torch.randn(1, 512), 256)

    def test_too_short(self):
        with pytest.raises(ValueError):
            stft_loss(torch.randn(1, 100), torch.randn(1, 100), 256)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            stft_loss(torch.randn(1, 600), torch.randn(1, 601), 256)

    def test_symmetric_under_shared_silence(self):
        g = torch.Generator().manual_seed(1)
        a = torch.randn(1, 4096, dtype=torch.float64, generator=g)
        b = torch.randn(1, 4096, dtype=torch.float64, generator=g)
        z = torch.zeros(1, 2048, dtype=torch.float64)
        x1 = mrstft(torch.cat([a, z], -1), torch.cat([b, z], -1)).item()
        x2 = mrstft(torch.cat([b, z], -1), torch.cat([a, z], -1)).item()
        assert x1 > 0 and x2 > 0
        assert np.isfinite([x1, x2]).all()

    def test_gradient_finite_differences(self):
        g = torch.Generator().manual_seed(3)
        y = torch.randn(1, 256, dtype=torch.float64, generator=g)
        y_hat = torch.randn(1, 256, dtype=torch.float64, generator=g, requires_grad=True)
        assert torch.autograd.gradcheck(lambda p: stft_loss(y, p, 64), (y_hat,), eps=1e-5, atol=1e-6, rtol=1e-3)


class TestModeSeeking:
    def test_anchors(self):
        assert mode_seeking(0.0, 0.01).item() == 1.0
        assert mode_seeking(0.01, 0.01).item() == pytest.approx(0.5)
        assert mode_seeking(1e12, 0.01).item() == pytest.approx(0.0, abs=1e-12)

    @given(d1=st.floats(0, 100), d2=st.floats(0, 100), eps=st.floats(1e-4, 1.0))
    def test_monotone_and_bounded(self, d1, d2, eps):
        a, b = mode_seeking(d1, eps).item(), mode_seeking(d2, eps).item()
        assert 0 < a <= 1 and 0 < b <= 1
        if d1 < d2:
            assert a >= b

    def test_invalid(self):
        with pytest.raises(ValueError):
            mode_seeking(1.0, 0.0)
        with pytest.raises(ValueError):
            mode_seeking(-1.0, 0.1)


class TestWeights:
    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(0.0, 0.0, 0.0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(1.0, -0.1, 0.0)


class TestBalancer:
    def test_single_loss_unit_norm(self):
        state = BalancerState()
        g = [torch.full((10,), 3.0)]
        for _ in range(5):
            out, _, _ = balance_gradients({"a": g}, {"a": 1.0}, state)
        assert torch.linalg.vector_norm(out[0]).item() == pytest.approx(1.0)

    def test_two_losses_half_each(self):
        state = BalancerState()
        grads = {"a": [torch.ones(4) * 100.0], "b": [torch.ones(4) * 0.01]}
        for _ in range(3):
            _, _, contrib = balance_gradients(grads, {"a": 1.0, "b": 1.0}, state)
        assert contrib["a"] == pytest.approx(0.5)
        assert contrib["b"] == pytest.approx(0.5)

    def test_inactive_weight_ignored(self):
        out, norms, _ = balance_gradients(
            {"a": [torch.ones(2)], "b": [torch.ones(2) * 7]}, {"a": 1.0, "b": 0.0}, BalancerState()
        )
        assert set(norms) == {"a"}
        assert torch.linalg.vector_norm(out[0]).item() == pytest.approx(1.0)

    def test_ema_converges(self):
        fresh = BalancerState()
        for _ in range(200):
            balance_gradients({"a": [torch.ones(1) * 2.0]}, {"a": 1.0}, fresh)
        assert fresh.ema["a"] == pytest.approx(2.0, rel=0.02)
        # from a far-off seed the residual weight is the geometric factor 0.99**200
        state = BalancerState()
        balance_gradients({"a": [torch.ones(1) * 10.0]}, {"a": 1.0}, state)
        for _ in range(200):
            balance_gradients({"a": [torch.ones(1) * 2.0]}, {"a": 1.0}, state)
        assert state.ema["a"] == pytest.approx(2.0 + 8.0 * 0.99**200, rel=1e-9)

    def test_ema_used_before_update(self):
        state = BalancerState(ema={"a": 4.0})
        out, norms, _ = balance_gradients({"a": [torch.ones(1) * 2.0]}, {"a": 1.0}, state)
        assert out[0].item() == pytest.approx(0.5)
        assert norms["a"] == 2.0
        assert state.ema["a"] == pytest.approx(0.99 * 4.0 + 0.01 * 2.0)

    def test_zero_norm_warns(self, caplog):
        state = BalancerState()
        with caplog.at_level(logging.WARNING, logger="tvfx.losses"):
            out, _, _ = balance_gradients({"a": [torch.zeros(3)], "b": [torch.ones(3)]}, {"a": 1, "b": 1}, state)
        assert any("zero gradient" in r.message for r in caplog.records)
        assert torch.isfinite(out[0]).all()

    def test_state_round_trip(self):
        s = BalancerState(0.9, {"a": 1.5})
        assert BalancerState.from_state_dict(s.state_dict()) == s

    def test_stationary_contributions_match_weights(self):
        r = np.random.default_rng(0)
        weights = {"adv": 1.0, "spectral": 0.005, "ms": 0.3}
        scales = {"adv": 0.02, "spectral": 5e4, "ms": 3.0}
        state = BalancerState()
        for _ in range(200):
            grads = {}
            for k, s in scales.items():
                v = r.standard_normal(256)
                grads[k] = [torch.as_tensor(v / np.linalg.norm(v) * s)]
            _, _, contrib = balance_gradients(grads, weights, state)
        total = sum(weights.values())
        for k in weights:
            assert contrib[k] == pytest.approx(weights[k] / total, rel=0.05)

    def test_backward_through_outputs(self):
        w = torch.tensor([1.0, -2.0], requires_grad=True)
        out = w * torch.tensor([3.0, 4.0])
        bal = Balancer({"a": 1.0, "b": 1.0})
        norms = bal.backward({"a": out.sum(), "b": (out**2).sum()}, [out])
        assert set(norms) == {"a", "b"}
        ga = torch.ones(2) / math.sqrt(2)
        gb = 2 * out.detach() / (2 * out.detach()).norm()
        torch.testing.assert_close(w.grad, 0.5 * (ga + gb) * torch.tensor([3.0, 4.0]))
