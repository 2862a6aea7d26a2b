"""Diagnostic figures: chirp-train spectrograms, frequency-frequency maps,
modulation spectra and loss curves. PNGs carry no timestamps or version
strings, so identical inputs give identical files."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dsp import AudioBuffer, ChirpSpec, stft_mag  # noqa: E402
from .modmetric import chirp_aligned_spectrogram, frequency_frequency, spectrum_of  # noqa: E402

VIEWS = ("spectrogram", "frequency-frequency", "modulation", "loss-curves")
LOG_AXIS = (40.0, 17000.0)
_PNG_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def _db(m: np.ndarray) -> np.ndarray:
    return 20 * np.log10(np.maximum(m, 1e-8))


def spectrogram_figure(ref: AudioBuffer, test: AudioBuffer, chirp: ChirpSpec, path: Path) -> Path:
    fs = ref.sample_rate
    n = chirp.chirp_length(fs)
    win = max(64, min(512, 1 << int(np.log2(max(n, 2)))))
    hi = min(LOG_AXIS[1], fs / 2)
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for ax, buf, title in zip(axes, (ref, test), ("reference", "model")):
        if len(buf) < win:
            ax.text(0.5, 0.5, "signal too short", ha="center", transform=ax.transAxes)
        else:
            s = stft_mag(buf, win, max(1, win // 4))
            t = (np.arange(s.shape[1]) * (win // 4) + win / 2) / fs
            f = np.arange(s.shape[0]) * fs / win
            ax.pcolormesh(t, f[1:], _db(s[1:]), shading="auto", vmin=-100)
        ax.set_yscale("log")
        ax.set_ylim(LOG_AXIS[0], hi)
        ax.set_ylabel("Hz")
        ax.set_title(title)
    axes[-1].set_xlabel("s")
    return _save(fig, path)


def ff_figure(ref: AudioBuffer, test: AudioBuffer, chirp: ChirpSpec, path: Path) -> Path:
    n = chirp.chirp_length(ref.sample_rate)
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), sharey=True)
    for ax, buf, title in zip(axes, (ref, test), ("reference", "model")):
        k = len(buf) // n
        if k < 2:
            ax.text(0.5, 0.5, "fewer than two chirps", ha="center", transform=ax.transAxes)
        else:
            spec = chirp_aligned_spectrogram(buf.samples[: k * n], n)
            freqs, ff = frequency_frequency(spec, ref.sample_rate / n)
            audio = np.arange(ff.shape[0]) * ref.sample_rate / n
            ax.pcolormesh(freqs, audio, _db(ff), shading="auto")
        ax.set_xlabel("modulation Hz")
        ax.set_title(title)
    axes[0].set_ylabel("audio Hz")
    return _save(fig, path)


def modulation_figure(ref: AudioBuffer, test: AudioBuffer, chirp: ChirpSpec, path: Path) -> Path:
    n = chirp.chirp_length(ref.sample_rate)
    fig, ax = plt.subplots(figsize=(7, 4))
    for buf, label in ((ref, "reference"), (test, "model")):
        if len(buf) // n >= 2:
            m = spectrum_of(AudioBuffer(buf.samples[: len(buf) // n * n], buf.sample_rate), n)
            ax.plot(m.freqs, m.mags, label=label)
    ax.set_xlabel("modulation Hz")
    ax.set_ylabel("magnitude")
    if ax.lines:
        ax.legend()
    else:
        ax.text(0.5, 0.5, "fewer than two chirps", ha="center", transform=ax.transAxes)
    return _save(fig, path)


def read_metrics(path: Path | None) -> list[dict]:
    if path is None or not Path(path).is_file():
        return []
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def loss_figure(records: list[dict], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    keys = sorted({k for r in records for k, v in r.items()
                   if isinstance(v, (int, float)) and k not in ("iteration", "epoch")})
    for k in keys:
        pts = [(r["iteration"], r[k]) for r in records if k in r and np.isfinite(r[k])]
        if pts:
            it, v = zip(*pts)
            ax.plot(it, v, label=k)
    if not keys:
        ax.text(0.5, 0.5, "no metrics", ha="center", transform=ax.transAxes)
    else:
        ax.legend(fontsize="small")
    ax.set_xlabel("iteration")
    return _save(fig, path)


def render_views(ref: AudioBuffer, test: AudioBuffer, chirp: ChirpSpec, out: Path,
                 views: list[str], metrics: Path | None = None) -> list[Path]:
    unknown = sorted(set(views) - set(VIEWS))
    if unknown:
        raise ValueError(f"unknown view(s) {unknown}; expected {VIEWS}")
    written = []
    for v in views:
        p = out / f"{v}.png"
        if v == "spectrogram":
            written.append(spectrogram_figure(ref, test, chirp, p))
        elif v == "frequency-frequency":
            written.append(ff_figure(ref, test, chirp, p))
        elif v == "modulation":
            written.append(modulation_figure(ref, test, chirp, p))
        else:
            written.append(loss_figure(read_metrics(metrics), p))
    return written
