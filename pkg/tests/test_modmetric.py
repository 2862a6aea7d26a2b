import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import wasserstein_distance

from tvfx.dsp import AudioBuffer, ChirpSpec, apply_gain_envelope, gen_chirp_train
from tvfx.modmetric import (
    ModulationSpectrum,
    chirp_aligned_spectrogram,
    frequency_frequency,
    mod_metric,
    mod_p,
    mod_w,
    modulation_spectrum,
    spectrum_of,
)
from tvfx.phaser import PRESETS, PhaserParams, phaser_process

FS = 16000
CHIRP = ChirpSpec(20.0, FS / 2, 1 / 33, 1)
CHIRP_LEN = CHIRP.chirp_length(FS)


def spectrum(mags, res=0.25):
    mags = np.asarray(mags, dtype=float)
    return ModulationSpectrum(res * np.arange(1, mags.size + 1), mags)


@pytest.fixture(scope="module")
def chirp_train():
    return gen_chirp_train(CHIRP, FS, duration=4.0)


@pytest.fixture(scope="module")
def fast_reference(chirp_train):
    return phaser_process(apply_gain_envelope(chirp_train, -20.0, 0.0), PRESETS["fast-lfo"], 0.7)


class TestSpectrogram:
    def test_full_scale_chirp_length(self):
        assert ChirpSpec(20.0, 22050.0, 1 / 33).chirp_length(44100) == 1336

    def test_identical_columns_for_dry_chirps(self, chirp_train):
        s = chirp_aligned_spectrogram(chirp_train.samples[: 8 * CHIRP_LEN], CHIRP_LEN)
        assert s.shape[1] == 8
        assert all(np.array_equal(s[:, i], s[:, 0]) for i in range(8))

    def test_phaser_columns_vary_at_lfo_period(self, chirp_train):
        p = PhaserParams(lfo_rate=2.0, lfo_width=0.5)
        y = phaser_process(chirp_train, p)
        s = chirp_aligned_spectrogram(y.samples, CHIRP_LEN)
        traj = s.sum(axis=0)[2:]
        traj = traj - traj.mean()
        ac = np.correlate(traj, traj, "full")[traj.size - 1 :]
        period_chirps = (FS / CHIRP_LEN) / 2.0
        lag = np.argmax(ac[5:]) + 5
        assert abs(lag - period_chirps) <= 1.5

    def test_too_short(self):
        with pytest.raises(ValueError):
            chirp_aligned_spectrogram(np.zeros(10), CHIRP_LEN)


class TestFrequencyFrequency:
    def test_constant_rows_vanish(self):
        _, ff = frequency_frequency(np.ones((5, 40)) * 3.0, 33.0)
        assert np.allclose(ff, 0.0, atol=1e-12)

    def test_cosine_row_peak(self):
        n, rate = 132, 33.0
        t = np.arange(n) / rate
        row = 1 + 0.5 * np.cos(2 * np.pi * 3.0 * t)
        freqs, ff = frequency_frequency(row[None], rate)
        k = np.argmax(ff[0])
        assert freqs[k] == pytest.approx(3.0)
        assert ff[0, k] == pytest.approx(n * 0.25)
        others = np.delete(ff[0], k)
        assert np.all(others < 1e-9)

    def test_one_sided(self):
        freqs, ff = frequency_frequency(np.random.default_rng(0).random((3, 20)), 10.0)
        assert ff.shape == (3, 10)
        assert freqs[-1] == pytest.approx(5.0)

    def test_needs_two_chirps(self):
        with pytest.raises(ValueError):
            frequency_frequency(np.ones((3, 1)), 33.0)


class TestModulationSpectrum:
    def test_zero_map(self):
        assert not modulation_spectrum(np.zeros((4, 6)), np.arange(1, 7.0)).mags.any()

    def test_single_cell(self):
        ff = np.zeros((4, 6))
        ff[2, 3] = 5.0
        m = modulation_spectrum(ff, np.arange(1, 7.0))
        assert m.mags[3] == 5.0 and m.mags.sum() == 5.0

    def test_audio_bin_order_irrelevant(self, rng):
        ff = rng.random((10, 8))
        a = modulation_spectrum(ff, np.arange(1, 9.0))
        b = modulation_spectrum(ff[rng.permutation(10)], np.arange(1, 9.0))
        np.testing.assert_allclose(a.mags, b.mags, rtol=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            ModulationSpectrum(np.arange(3.0), np.array([1.0, -1.0, 0.0]))


class TestModP:
    def test_anchors(self):
        m = spectrum([1, 2, 3])
        assert mod_p(m, m) == 0.0
        assert mod_p(m, spectrum([0, 0, 0])) == 1.0
        assert mod_p(m, spectrum([2, 4, 6])) == pytest.approx(1.0)

    @given(alpha=st.floats(0.0, 10.0))
    def test_scale_sensitivity(self, alpha):
        m = spectrum([0.5, 2.0, 1.0, 0.1])
        assert mod_p(m, spectrum(alpha * m.mags)) == pytest.approx(abs(1 - alpha), abs=1e-12)

    def test_zero_reference(self):
        with pytest.raises(ValueError):
            mod_p(spectrum([0, 0]), spectrum([1, 1]))


class TestModW:
    def test_identical(self):
        m = spectrum([0.1, 3, 1, 0.5])
        assert mod_w(m, m) == 0.0

    def test_point_masses(self):
        a = np.zeros(40)
        b = np.zeros(40)
        a[3], b[11] = 1.0, 1.0  # 1.0 Hz and 3.0 Hz on a 0.25 Hz grid
        ma, mb = spectrum(a), spectrum(b)
        exact = wasserstein_distance(ma.freqs, mb.freqs, a, b)
        assert exact == pytest.approx(2.0)
        assert abs(mod_w(ma, mb) - 2.0) <= ma.resolution

    @given(seed=st.integers(0, 2**16))
    def test_symmetric_and_close_to_exact_transport(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.random(30) ** 3, r.random(30) ** 3
        ma, mb = spectrum(a), spectrum(b)
        w = mod_w(ma, mb)
        assert w == pytest.approx(mod_w(mb, ma), abs=1e-12)
        exact = wasserstein_distance(ma.freqs, mb.freqs, a, b)
        span = ma.freqs[-1] - ma.freqs[0] + ma.resolution
        assert abs(w - exact) <= ma.resolution + 0.02 * span

    @given(seed=st.integers(0, 2**16), gain=st.floats(1e-3, 1e3))
    def test_gain_invariant(self, seed, gain):
        r = np.random.default_rng(seed)
        a, b = r.random(20), r.random(20)
        assert mod_w(spectrum(a), spectrum(gain * b)) == pytest.approx(mod_w(spectrum(a), spectrum(b)), abs=1e-9)

    def test_zero_mass(self):
        with pytest.raises(ValueError):
            mod_w(spectrum([1, 1]), spectrum([0, 0]))


class TestMetric:
    def test_self_distance_zero(self, fast_reference):
        r = mod_metric(fast_reference, fast_reference, CHIRP)
        assert r.loss == 0.0 and r.mod_p == 0.0 and r.mod_w == 0.0

    def test_unmodulated_test_signal(self, fast_reference, chirp_train):
        dry = apply_gain_envelope(chirp_train, -20.0, 0.0)
        assert mod_metric(fast_reference, dry, CHIRP).loss >= 0.8

    def test_static_filter_is_unmodulated(self, fast_reference, chirp_train):
        static = phaser_process(apply_gain_envelope(chirp_train, -20.0, 0.0), PhaserParams(lfo_width=0.0))
        assert mod_metric(fast_reference, static, CHIRP).loss >= 0.8

    def test_deterministic(self, fast_reference, chirp_train):
        other = phaser_process(chirp_train, PRESETS["slow-lfo"])
        a = mod_metric(fast_reference, other, CHIRP)
        b = mod_metric(fast_reference, other, CHIRP)
        assert a.loss == b.loss

    @pytest.mark.parametrize("rate", [1.0, 2.0, 3.0, 5.0])
    def test_peak_tracks_lfo_rate(self, rate):
        full = ChirpSpec(20.0, 22050.0, 1 / 33, 1)
        train = gen_chirp_train(full, 44100, duration=4.0)
        m = spectrum_of(phaser_process(train, PhaserParams(lfo_rate=rate)), full.chirp_length(44100))
        assert abs(m.peak_frequency() - rate) <= m.resolution

    @pytest.mark.parametrize("rate", [1.0, 2.0, 3.0, 5.0])
    def test_fundamental_and_second_harmonic_dominate_at_16k(self, chirp_train, rate):
        # fewer audio bins above the sweep: the notch's double pass ties the fundamental
        m = spectrum_of(phaser_process(chirp_train, PhaserParams(lfo_rate=rate)), CHIRP_LEN)
        top2 = sorted(m.freqs[np.argsort(m.mags)[-2:]])
        assert abs(top2[0] - rate) <= m.resolution and abs(top2[1] - 2 * rate) <= m.resolution

    def test_report_fields(self, fast_reference):
        d = mod_metric(fast_reference, fast_reference, CHIRP).to_dict()
        assert {"L_mod", "L_mod_p", "L_mod_w", "spectra"} <= d.keys()

    def test_rate_mismatch(self, fast_reference):
        with pytest.raises(ValueError):
            mod_metric(fast_reference, AudioBuffer(fast_reference.samples, 8000), CHIRP)
