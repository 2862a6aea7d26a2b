"""Deterministic signal-processing primitives.

Everything here works in double precision on plain numpy arrays wrapped in
:class:`AudioBuffer`. Model-facing code casts to float32 at its own boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import signal


class FirDesignError(ValueError):
    """Raised when the filter requirements cannot be met with the given taps."""


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"AudioBuffer expects mono samples, got shape {samples.shape}")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioBuffer samples must be finite")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def rms(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.samples**2)))


@dataclass(frozen=True)
class ChirpSpec:
    """Logarithmic sine sweep repeated ``n_repeats`` times."""

    f0: float
    f1: float
    chirp_duration: float
    n_repeats: int = 1

    def validate(self, sample_rate: int) -> None:
        values = (self.f0, self.f1, self.chirp_duration)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite chirp parameters: {self}")
        if not 0 < self.f0 < self.f1:
            raise ValueError(f"need 0 < f0 < f1, got f0={self.f0}, f1={self.f1}")
        if self.f1 > sample_rate / 2:
            raise ValueError(f"f1={self.f1} Hz exceeds Nyquist ({sample_rate / 2} Hz)")
        if self.chirp_duration <= 0:
            raise ValueError("chirp_duration must be positive")
        if int(self.n_repeats) != self.n_repeats or self.n_repeats < 1:
            raise ValueError("n_repeats must be a positive integer")
        if self.chirp_length(sample_rate) < 2:
            raise ValueError("chirp shorter than 2 samples")

    def chirp_length(self, sample_rate: int) -> int:
        return int(round(self.chirp_duration * sample_rate))


@dataclass(frozen=True)
class FirFilter:
    taps: np.ndarray
    sample_rate: int
    cutoff: float
    stopband_attenuation: float
    passband_edge: float = 0.0
    passband_ripple_db: float = 0.0
    design: dict = field(default_factory=dict, compare=False)

    @property
    def num_taps(self) -> int:
        return self.taps.shape[0]

    @property
    def group_delay(self) -> float:
        return (self.num_taps - 1) / 2

    def response(self, n_points: int = 4096) -> tuple[np.ndarray, np.ndarray]:
        """Frequency grid in Hz and complex response on [0, fs/2]."""
        freqs, h = signal.freqz(self.taps, worN=n_points, fs=self.sample_rate)
        return freqs, h


def gen_chirp_train(spec: ChirpSpec, sample_rate: int, duration: float | None = None) -> AudioBuffer:
    """Synthesize a train of identical logarithmic chirps.

    Within one chirp of ``N`` samples the signal is
    ``sin(2*pi*f0*(k**(n/fs) - 1)/ln(k))`` with ``k = (f1/f0)**(fs/N)``, so the
    instantaneous frequency climbs geometrically from ``f0`` towards ``f1``.
    The phase restarts at zero on every repetition.

    If ``duration`` is given, the chirp is tiled and cropped to exactly
    ``round(duration * sample_rate)`` samples instead of ``n_repeats`` copies.
    """
    spec.validate(sample_rate)
    n_chirp = spec.chirp_length(sample_rate)
    # log k computed directly; k itself overflows for wide sweeps at high fs
    log_k = (sample_rate / n_chirp) * math.log(spec.f1 / spec.f0)
    t = np.arange(n_chirp, dtype=np.float64) / sample_rate
    phase = 2 * np.pi * spec.f0 * np.expm1(log_k * t) / log_k
    one = np.sin(phase)
    if duration is None:
        total = n_chirp * int(spec.n_repeats)
    else:
        if not math.isfinite(duration) or duration <= 0:
            raise ValueError(f"invalid duration {duration}")
        total = int(round(duration * sample_rate))
    reps = -(-total // n_chirp)
    return AudioBuffer(np.tile(one, reps)[:total], sample_rate)


def design_antialias_fir(
    sample_rate: int,
    cutoff: float,
    num_taps: int = 1024,
    attenuation: float = 100.0,
    check_points: int = 32768,
    max_adjust: int = 40,
) -> FirFilter:
    """Kaiser-window lowpass whose stopband starts at ``cutoff``.

    The transition band is placed entirely below ``cutoff``; its width comes
    from Kaiser's order formula and is widened in small steps until the
    stopband check on a dense grid passes.
    """
    nyq = sample_rate / 2
    if not 0 < cutoff < nyq:
        raise FirDesignError(f"cutoff {cutoff} Hz must lie in (0, {nyq})")
    if num_taps < 2:
        raise FirDesignError("num_taps must be >= 2")
    if attenuation <= 0:
        raise FirDesignError("attenuation must be positive (dB)")

    beta = signal.kaiser_beta(attenuation)
    width_rad = (attenuation - 7.95) / (2.285 * (num_taps - 1))
    width_hz = width_rad * sample_rate / (2 * np.pi)
    limit = 10 ** (-attenuation / 20)

    for step in range(max_adjust + 1):
        trans = width_hz * (1 + 0.05 * step)
        fc = cutoff - trans / 2
        if cutoff - trans <= 0:
            # no passband left
            break
        taps = signal.firwin(num_taps, fc, window=("kaiser", beta), fs=sample_rate)
        freqs, h = signal.freqz(taps, worN=check_points, fs=sample_rate)
        stop = np.abs(h[freqs >= cutoff])
        if stop.size == 0 or stop.max() <= limit:
            passband_edge = max(cutoff - trans, 0.0)
            pb = np.abs(h[freqs <= passband_edge])
            ripple = float(20 * np.log10(pb.max() / max(pb.min(), 1e-300))) if pb.size else 0.0
            return FirFilter(
                taps=taps,
                sample_rate=int(sample_rate),
                cutoff=float(cutoff),
                stopband_attenuation=float(attenuation),
                passband_edge=float(passband_edge),
                passband_ripple_db=ripple,
                design={"method": "kaiser-windowed-sinc", "beta": float(beta), "sinc_cutoff": float(fc)},
            )
    raise FirDesignError(
        f"cannot reach -{attenuation} dB above {cutoff} Hz with {num_taps} taps at {sample_rate} Hz"
    )


def apply_fir(
    x: AudioBuffer, f: FirFilter, mode: Literal["same-length", "full"] = "same-length"
) -> AudioBuffer:
    if x.sample_rate != f.sample_rate:
        raise ValueError(f"sample rate mismatch: signal {x.sample_rate} Hz, filter {f.sample_rate} Hz")
    if len(x) == 0:
        return x
    full = signal.convolve(x.samples, f.taps, mode="full")
    if mode == "full":
        return AudioBuffer(full, x.sample_rate)
    if mode == "same-length":
        delay = (f.num_taps - 1) // 2
        return AudioBuffer(full[delay : delay + len(x)], x.sample_rate)
    raise ValueError(f"unknown mode {mode!r}")


def gain_envelope(n: int, start_db: float, end_db: float) -> np.ndarray:
    if n == 1:
        return np.array([10 ** (start_db / 20)])
    return 10 ** (np.linspace(start_db, end_db, n) / 20)


def apply_gain_envelope(x: AudioBuffer, start_db: float, end_db: float) -> AudioBuffer:
    if len(x) == 0:
        raise ValueError("cannot apply an envelope to an empty buffer")
    return AudioBuffer(x.samples * gain_envelope(len(x), start_db, end_db), x.sample_rate)


def frame_signal(samples: np.ndarray, window_size: int, hop: int) -> np.ndarray:
    """Frames as rows, no padding: ``floor((len - window_size)/hop) + 1`` of them."""
    if window_size < 2 or hop < 1:
        raise ValueError("window_size must be >= 2 and hop >= 1")
    if samples.shape[-1] < window_size:
        raise ValueError(f"signal of {samples.shape[-1]} samples is shorter than one window ({window_size})")
    frames = np.lib.stride_tricks.sliding_window_view(samples, window_size, axis=-1)
    return frames[..., ::hop, :]


def stft_mag(
    x: AudioBuffer | np.ndarray,
    window_size: int,
    hop: int,
    window: Literal["hann", "boxcar"] = "hann",
) -> np.ndarray:
    """Magnitude STFT, shape (window_size // 2 + 1, frames).

    Bin ``b`` sits at ``b * fs / window_size``. Hann windows are periodic.
    """
    samples = x.samples if isinstance(x, AudioBuffer) else np.asarray(x, dtype=np.float64)
    frames = frame_signal(samples, window_size, hop)
    if window == "hann":
        frames = frames * signal.get_window("hann", window_size, fftbins=True)
    elif window != "boxcar":
        raise ValueError(f"unknown window {window!r}")
    return np.abs(np.fft.rfft(frames, axis=-1)).T
