"""Chirp-train modulation metric.

Pipeline: chirp-aligned boxcar spectrogram -> per-audio-bin DFT along the chirp
axis (frequency-frequency map) -> sum over audio bins (modulation spectrum).
Two spectra are then compared by total energy (``mod_p``) and by a quantile
approximation of the 1-Wasserstein distance in Hz (``mod_w``).

Interpretation bands used when reading reports: values below about 0.2 mean a
periodic modulation close to the reference is present; values above about 0.9
mean the modulation is essentially absent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import AudioBuffer, ChirpSpec, stft_mag

MOD_W_WEIGHT = 1.5
QUANTILES = np.round(np.arange(1, 100) / 100, 2)


@dataclass(frozen=True)
class ModulationSpectrum:
    freqs: np.ndarray
    mags: np.ndarray

    def __post_init__(self):
        if self.freqs.shape != self.mags.shape:
            raise ValueError("freqs and mags must have the same length")
        if np.any(self.mags < 0):
            raise ValueError("modulation magnitudes must be non-negative")

    @property
    def resolution(self) -> float:
        return float(self.freqs[1] - self.freqs[0]) if self.freqs.size > 1 else float(self.freqs[0])

    @property
    def total(self) -> float:
        return float(self.mags.sum())

    def peak_frequency(self) -> float:
        return float(self.freqs[np.argmax(self.mags)])

    def to_dict(self) -> dict:
        return {"freqs": self.freqs.tolist(), "mags": self.mags.tolist()}


@dataclass(frozen=True)
class ModMetricResult:
    loss: float
    mod_p: float
    mod_w: float
    reference: ModulationSpectrum
    test: ModulationSpectrum

    def to_dict(self, spectra: bool = True) -> dict:
        out = {"L_mod": self.loss, "L_mod_p": self.mod_p, "L_mod_w": self.mod_w}
        if spectra:
            out["spectra"] = {"reference": self.reference.to_dict(), "test": self.test.to_dict()}
        return out


def chirp_aligned_spectrogram(y: AudioBuffer | np.ndarray, chirp_len: int) -> np.ndarray:
    """Boxcar spectrogram with window = hop = chirp length; one column per chirp."""
    samples = y.samples if isinstance(y, AudioBuffer) else np.asarray(y, dtype=np.float64)
    if samples.shape[-1] < chirp_len:
        raise ValueError(f"signal of {samples.shape[-1]} samples is shorter than one chirp ({chirp_len})")
    return stft_mag(samples, chirp_len, chirp_len, window="boxcar")


def frequency_frequency(spec: np.ndarray, chirp_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided DFT magnitude of every spectrogram row, DC column dropped.

    Returns the modulation-frequency axis (Hz) and the (audio bins x
    modulation bins) magnitude map.
    """
    n_chirps = spec.shape[1]
    if n_chirps < 2:
        raise ValueError("need at least two chirps")
    ff = np.abs(np.fft.rfft(spec, axis=1))[:, 1:]
    freqs = np.arange(1, ff.shape[1] + 1) * chirp_rate / n_chirps
    return freqs, ff


def modulation_spectrum(ff: np.ndarray, freqs: np.ndarray) -> ModulationSpectrum:
    return ModulationSpectrum(np.asarray(freqs, dtype=np.float64), ff.sum(axis=0))


def spectrum_of(y: AudioBuffer, chirp_len: int) -> ModulationSpectrum:
    n_chirps = len(y) // chirp_len
    spec = chirp_aligned_spectrogram(y.samples[: n_chirps * chirp_len], chirp_len)
    freqs, ff = frequency_frequency(spec, y.sample_rate / chirp_len)
    return modulation_spectrum(ff, freqs)


def mod_p(m_ref: ModulationSpectrum, m_test: ModulationSpectrum) -> float:
    ref = m_ref.total
    if not ref > 0:
        raise ValueError("reference modulation spectrum has zero energy")
    return abs(ref - m_test.total) / ref


def quantile_function(m: ModulationSpectrum, r: np.ndarray) -> np.ndarray:
    """Inverse CDF of the unit-mass spectrum treated as a piecewise-uniform density.

    Bin ``i`` spreads its mass evenly over ``freqs[i] +/- resolution/2``; the
    CDF is then piecewise linear and is inverted by interpolation, taking the
    right-most point on flat stretches.
    """
    total = m.total
    if not total > 0:
        raise ValueError("cannot normalize a zero-mass modulation spectrum")
    half = m.resolution / 2
    edges = np.concatenate([[m.freqs[0] - half], m.freqs + half])
    cdf = np.concatenate([[0.0], np.cumsum(m.mags) / total])
    idx = np.searchsorted(cdf, r, side="right")
    idx = np.clip(idx, 1, len(cdf) - 1)
    lo, hi = cdf[idx - 1], cdf[idx]
    frac = np.where(hi > lo, (r - lo) / np.where(hi > lo, hi - lo, 1.0), 1.0)
    return edges[idx - 1] + frac * (edges[idx] - edges[idx - 1])


def mod_w(m_ref: ModulationSpectrum, m_test: ModulationSpectrum, quantiles: np.ndarray = QUANTILES) -> float:
    q = np.asarray(quantiles, dtype=np.float64)
    steps = np.diff(np.concatenate([[0.0], q]))
    diff = np.abs(quantile_function(m_ref, q) - quantile_function(m_test, q))
    return float(np.sum(diff * steps))


def mod_metric(y_ref: AudioBuffer, y_test: AudioBuffer, chirp: ChirpSpec) -> ModMetricResult:
    """Full metric ``L_mod = mod_p + 1.5 * mod_w`` on two chirp-train responses."""
    if y_ref.sample_rate != y_test.sample_rate:
        raise ValueError("reference and test sample rates differ")
    chirp_len = chirp.chirp_length(y_ref.sample_rate)
    n = min(len(y_ref), len(y_test))
    m_ref = spectrum_of(AudioBuffer(y_ref.samples[:n], y_ref.sample_rate), chirp_len)
    m_test = spectrum_of(AudioBuffer(y_test.samples[:n], y_test.sample_rate), chirp_len)
    p = mod_p(m_ref, m_test)
    # an unmodulated test signal has no mass to transport; fall back to the
    # largest possible shift so the metric stays finite
    if m_test.total > 0:
        w = mod_w(m_ref, m_test)
    else:
        w = float(m_ref.freqs[-1] - m_ref.freqs[0])
    return ModMetricResult(p + MOD_W_WEIGHT * w, p, w, m_ref, m_test)
