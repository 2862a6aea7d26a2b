"""White-box LFO phaser used as the modeling target.

A cascade of first-order allpass sections whose break frequency follows an
LFO on a log-frequency scale, mixed with the dry signal. With ``depth=1`` the
dry and wet paths have equal weight and cancel wherever the cascade phase is
an odd multiple of pi, which gives ``n_stages / 2`` notches below Nyquist.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Literal

import numba
import numpy as np

from .dsp import AudioBuffer

log = logging.getLogger(__name__)

SWEEP_LOW_HZ = 100.0
SWEEP_HIGH_HZ = 8000.0


@dataclass(frozen=True)
class PhaserParams:
    n_stages: int = 4
    lfo_rate: float = 1.0
    lfo_width: float = 0.5
    lfo_center: float = 0.5
    depth: float = 1.0
    feedback: float = 0.0
    lfo_shape: Literal["sine", "triangle"] = "sine"

    def validate(self, sample_rate: int | None = None) -> None:
        if self.n_stages < 2 or self.n_stages % 2:
            raise ValueError(f"n_stages must be a positive even count, got {self.n_stages}")
        if not (self.lfo_rate > 0 and math.isfinite(self.lfo_rate)):
            raise ValueError(f"lfo_rate must be positive, got {self.lfo_rate}")
        for name in ("lfo_width", "lfo_center", "depth"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 <= self.feedback < 1.0:
            raise ValueError(f"feedback must lie in [0, 1), got {self.feedback}")
        if self.lfo_shape not in ("sine", "triangle"):
            raise ValueError(f"unknown lfo_shape {self.lfo_shape!r}")
        lo, hi = self.sweep_exponents()
        if lo < 0.0 or hi > 1.0:
            raise ValueError(
                f"sweep center {self.lfo_center} +/- width/2 ({self.lfo_width / 2}) leaves [0, 1]"
            )
        if sample_rate is not None:
            fmax = break_frequency(hi)
            if fmax >= sample_rate / 2:
                raise ValueError(f"sweep reaches {fmax:.1f} Hz, above Nyquist of {sample_rate} Hz")

    @property
    def lfo_period(self) -> float:
        return 1.0 / self.lfo_rate

    def sweep_exponents(self) -> tuple[float, float]:
        half = 0.5 * self.lfo_width
        return self.lfo_center - half, self.lfo_center + half

    def to_dict(self) -> dict:
        return asdict(self)


# LFO periods 1.3 s and 0.3 s; the other controls fixed as in the snapshot setup.
PRESETS: dict[str, PhaserParams] = {
    "slow-lfo": PhaserParams(lfo_rate=1 / 1.3, lfo_width=0.5, lfo_center=0.5, depth=1.0, feedback=0.0),
    "fast-lfo": PhaserParams(lfo_rate=1 / 0.3, lfo_width=0.5, lfo_center=0.5, depth=1.0, feedback=0.0),
}


def break_frequency(exponent):
    """Map a sweep position in [0, 1] to Hz, log-uniformly between 100 Hz and 8 kHz."""
    return SWEEP_LOW_HZ * (SWEEP_HIGH_HZ / SWEEP_LOW_HZ) ** exponent


def lfo_value(t, rate: float, shape: str = "sine", phase0: float = 0.0):
    """LFO in [-1, 1]. The triangle peaks at the same phase as the sine."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    theta = 2 * np.pi * rate * np.asarray(t, dtype=np.float64) + phase0
    if shape == "sine":
        return np.sin(theta)
    if shape == "triangle":
        frac = np.mod(theta / (2 * np.pi) + 0.25, 1.0)
        return 1.0 - 4.0 * np.abs(frac - 0.5)
    raise ValueError(f"unknown lfo shape {shape!r}")


def allpass_coefficient(freq_hz, sample_rate: int):
    """First-order allpass ``(a + z^-1)/(1 + a z^-1)`` with -90 degrees at ``freq_hz``."""
    t = np.tan(np.pi * np.asarray(freq_hz, dtype=np.float64) / sample_rate)
    return (t - 1.0) / (t + 1.0)


@numba.njit(cache=True)
def _allpass_cascade(x, coef, n_stages, dry, wet, feedback):
    n = x.shape[0]
    out = np.empty(n)
    x_prev = np.zeros(n_stages)
    y_prev = np.zeros(n_stages)
    last = 0.0
    for i in range(n):
        a = coef[i]
        s = x[i] + feedback * last
        for k in range(n_stages):
            y = a * s + x_prev[k] - a * y_prev[k]
            x_prev[k] = s
            y_prev[k] = y
            s = y
        last = s
        out[i] = dry * x[i] + wet * s
    return out


def phaser_process(x: AudioBuffer, params: PhaserParams, phase0: float = 0.0) -> AudioBuffer:
    params.validate(x.sample_rate)
    t = np.arange(len(x)) / x.sample_rate
    lfo = lfo_value(t, params.lfo_rate, params.lfo_shape, phase0)
    center = params.lfo_center
    exponent = center + 0.5 * params.lfo_width * lfo
    coef = allpass_coefficient(break_frequency(exponent), x.sample_rate)
    if coef.size and np.max(np.abs(coef)) >= 1.0:
        log.error("allpass coefficient reached %.6f; refusing to run an unstable filter", np.max(np.abs(coef)))
        raise ValueError("allpass coefficient outside the stable range (-1, 1)")
    wet = params.depth / 2
    out = _allpass_cascade(x.samples, coef, params.n_stages, 1.0 - wet, wet, params.feedback)
    return AudioBuffer(out, x.sample_rate)


def static_notch_frequencies(freq_hz: float, n_stages: int, sample_rate: int) -> np.ndarray:
    """Notch frequencies of the depth-1 mix for a frozen break frequency.

    A first-order allpass with coefficient ``a`` has phase
    ``-w + 2*atan2(a*sin w, 1 + a*cos w)``; the notches sit where
    ``n_stages`` times that phase equals ``-(2m+1)*pi``.
    """
    from scipy.optimize import brentq

    a = float(allpass_coefficient(freq_hz, sample_rate))

    def phase(w):
        return n_stages * (-w + 2 * math.atan2(a * math.sin(w), 1 + a * math.cos(w)))

    notches = []
    for m in range(n_stages // 2):
        target = -(2 * m + 1) * math.pi
        w = brentq(lambda w: phase(w) - target, 1e-9, math.pi - 1e-9)
        notches.append(w * sample_rate / (2 * math.pi))
    return np.array(notches)
