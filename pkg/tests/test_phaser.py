import logging
import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from tvfx import phaser as ph
from tvfx.dsp import AudioBuffer, ChirpSpec, gen_chirp_train
from tvfx.losses import mrstft
from tvfx.modmetric import spectrum_of
from tvfx.phaser import PRESETS, PhaserParams, lfo_value, phaser_process, static_notch_frequencies


class TestLfo:
    def test_sine_anchors(self):
        assert lfo_value(0.0, 2.0) == pytest.approx(0.0)
        assert lfo_value(1 / (4 * 2.0), 2.0) == pytest.approx(1.0)

    @given(t0=st.floats(0, 10), rate=st.floats(0.1, 20), shape=st.sampled_from(["sine", "triangle"]))
    def test_periodic(self, t0, rate, shape):
        assert lfo_value(t0 + 1 / rate, rate, shape) == pytest.approx(lfo_value(t0, rate, shape), abs=1e-9)

    @given(t=st.floats(0, 10), shape=st.sampled_from(["sine", "triangle"]))
    def test_bounded(self, t, shape):
        assert -1.0 <= lfo_value(t, 1.7, shape) <= 1.0

    def test_triangle_peak_aligned_with_sine(self):
        assert lfo_value(0.25, 1.0, "triangle") == pytest.approx(1.0)

    def test_rejects_non_positive_rate(self):
        with pytest.raises(ValueError):
            lfo_value(0.0, 0.0)


class TestParams:
    def test_preset_periods(self):
        assert PRESETS["slow-lfo"].lfo_period == pytest.approx(1.3)
        assert PRESETS["fast-lfo"].lfo_period == pytest.approx(0.3)

    @pytest.mark.parametrize(
        "kw",
        [
            {"n_stages": 3},
            {"feedback": 1.0},
            {"depth": 1.5},
            {"lfo_rate": 0.0},
            {"lfo_center": 0.9, "lfo_width": 0.5},
            {"lfo_shape": "square"},
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            PhaserParams(**kw).validate(44100)

    def test_sweep_above_nyquist_rejected(self):
        # 8 kHz top of sweep is beyond Nyquist at 12 kHz sampling
        with pytest.raises(ValueError):
            PhaserParams(lfo_center=0.75, lfo_width=0.5).validate(12000)


class TestProcess:
    def test_depth_zero_is_identity(self, rng):
        x = AudioBuffer(rng.standard_normal(5000), 16000)
        y = phaser_process(x, PhaserParams(depth=0.0, feedback=0.0), 0.3)
        np.testing.assert_array_equal(y.samples, x.samples)

    def test_length_and_determinism(self, rng):
        x = AudioBuffer(rng.standard_normal(3000), 16000)
        a = phaser_process(x, PRESETS["fast-lfo"], 1.0)
        b = phaser_process(x, PRESETS["fast-lfo"], 1.0)
        assert len(a) == len(x)
        np.testing.assert_array_equal(a.samples, b.samples)

    @given(
        seed=st.integers(0, 2**16),
        depth=st.floats(0, 1),
        width=st.floats(0, 0.5),
        rate=st.floats(0.2, 8),
    )
    def test_energy_bound(self, seed, depth, width, rate):
        x = AudioBuffer(np.random.default_rng(seed).standard_normal(4000), 16000)
        p = PhaserParams(lfo_rate=rate, lfo_width=width, depth=depth)
        assert phaser_process(x, p).rms() <= x.rms() * (1 + depth)

    def test_static_notches_match_allpass_phase(self):
        fs = 44100
        spec = ChirpSpec(20.0, fs / 2, 1 / 33, 6)
        x = gen_chirp_train(spec, fs)
        n = spec.chirp_length(fs)
        p = PhaserParams(lfo_width=0.0, lfo_center=0.5, depth=1.0)
        y = phaser_process(x, p)
        # steady-state chirp: the filter has settled after the first repetitions
        seg = slice(4 * n, 5 * n)
        H = np.abs(np.fft.rfft(y.samples[seg])) / np.maximum(np.abs(np.fft.rfft(x.samples[seg])), 1e-12)
        freqs = np.fft.rfftfreq(n, 1 / fs)
        db = 20 * np.log10(np.maximum(H, 1e-12))
        valid = freqs > 40.0
        minima = [
            i for i in range(1, len(db) - 1)
            if valid[i] and db[i] < db[i - 1] and db[i] <= db[i + 1] and db[i] < -20.0
        ]
        analytic = static_notch_frequencies(ph.break_frequency(0.5), 4, fs)
        assert len(minima) == 2
        bin_hz = fs / n
        for f_fft, f_ref in zip(freqs[minima], analytic):
            assert abs(f_fft - f_ref) <= bin_hz

    def test_modulation_peaks_at_lfo_rate(self):
        fs = 44100
        spec = ChirpSpec(20.0, fs / 2, 1 / 33, 1)
        x = gen_chirp_train(spec, fs, duration=8.0)
        y = phaser_process(x, PhaserParams(lfo_rate=3.0, lfo_width=0.5))
        m = spectrum_of(y, spec.chirp_length(fs))
        assert abs(m.peak_frequency() - 3.0) <= m.resolution

    def test_phase_opposition_changes_spectrum(self, rng):
        fs = 16000
        x = AudioBuffer(rng.standard_normal(fs * 2) * 0.3, fs)
        p = PRESETS["slow-lfo"]
        a = torch.as_tensor(phaser_process(x, p, 0.0).samples)[None]
        b = torch.as_tensor(phaser_process(x, p, math.pi).samples)[None]
        assert mrstft(a, b).item() > 0.05

    def test_unstable_coefficient_logged_and_rejected(self, monkeypatch, caplog, rng):
        monkeypatch.setattr(ph, "allpass_coefficient", lambda f, fs: np.ones_like(np.asarray(f)))
        x = AudioBuffer(rng.standard_normal(100), 16000)
        with caplog.at_level(logging.ERROR, logger="tvfx.phaser"), pytest.raises(ValueError):
            phaser_process(x, PRESETS["fast-lfo"])
        assert any("unstable" in r.message for r in caplog.records)


def test_allpass_phase_formula_matches_numeric_response():
    fs, f = 44100, 900.0
    a = float(ph.allpass_coefficient(f, fs))
    w = np.linspace(0.01, 3.1, 50)
    z = np.exp(1j * w)
    H = (a + 1 / z) / (1 + a / z)
    np.testing.assert_allclose(np.abs(H), 1.0, atol=1e-12)
    phase = -w + 2 * np.arctan2(a * np.sin(w), 1 + a * np.cos(w))
    np.testing.assert_allclose(np.angle(np.exp(1j * phase)), np.angle(H), atol=1e-9)
    # -90 degrees at the break frequency
    wc = 2 * np.pi * f / fs
    assert np.angle((a + np.exp(-1j * wc)) / (1 + a * np.exp(-1j * wc))) == pytest.approx(-np.pi / 2)
