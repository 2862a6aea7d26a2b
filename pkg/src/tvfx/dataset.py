"""Synthetic snapshot datasets rendered through the reference phaser.

Each take is a chirp train followed by synthesized program material. The dry
signal is low-passed before the effect (as an input pre-filter would be) and
the wet signal is filtered causally by the same anti-alias FIR, the filter the
generator also ends with.

On disk a split is ``manifest.json`` plus ``take_%04d_x.wav`` /
``take_%04d_y.wav``. Training code reads takes through :func:`load_split`,
which exposes only ``(x, y, phi)``; the LFO start phases stay in the manifest
and are reachable only through :func:`ground_truth`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Literal

import numpy as np

from .dsp import (
    AudioBuffer,
    ChirpSpec,
    apply_fir,
    design_antialias_fir,
    gain_envelope,
    gen_chirp_train,
)
from .phaser import PhaserParams, phaser_process
from .wav import read_wav, write_wav

MANIFEST_SCHEMA = 1
Split = Literal["train", "validation"]


class DatasetError(RuntimeError):
    """Missing, malformed or mismatched dataset on disk."""


@dataclass
class DatasetSpec:
    sample_rate: int = 16000
    train_duration: float = 120.0
    validation_duration: float = 30.0
    train_takes: int = 2
    validation_takes: int = 1
    chirp_f0: float = 20.0
    chirp_f1: float | None = None  # None: Nyquist
    chirp_duration: float = 1 / 33
    chirp_seconds: float = 4.0
    segment_seconds: float = 4.0
    envelope_db: tuple[float, float] = (-20.0, 0.0)
    fir_taps: int = 257
    fir_cutoff: float = 6458.0
    fir_attenuation: float = 100.0
    train_seed: int = 1
    validation_seed: int = 2

    def __post_init__(self):
        self.envelope_db = tuple(self.envelope_db)
        if self.train_seed == self.validation_seed:
            raise ValueError("train and validation seeds must differ")
        for name in ("train_duration", "validation_duration", "chirp_seconds", "segment_seconds"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.train_takes < 1 or self.validation_takes < 1:
            raise ValueError("each split needs at least one take")
        if self.take_duration("train") <= self.chirp_seconds or self.take_duration("validation") <= self.chirp_seconds:
            raise ValueError("takes must be longer than the chirp section")

    def chirp(self) -> ChirpSpec:
        f1 = self.sample_rate / 2 if self.chirp_f1 is None else self.chirp_f1
        n = max(1, int(self.chirp_seconds / self.chirp_duration))
        return ChirpSpec(self.chirp_f0, f1, self.chirp_duration, n)

    def chirp_samples(self) -> int:
        return int(round(self.chirp_seconds * self.sample_rate))

    def take_duration(self, split: Split) -> float:
        if split == "train":
            return self.train_duration / self.train_takes
        return self.validation_duration / self.validation_takes

    def n_takes(self, split: Split) -> int:
        return self.train_takes if split == "train" else self.validation_takes

    def seed(self, split: Split) -> int:
        if split not in ("train", "validation"):
            raise ValueError(f"unknown split {split!r}")
        return self.train_seed if split == "train" else self.validation_seed

    def to_dict(self) -> dict:
        d = asdict(self)
        d["envelope_db"] = list(self.envelope_db)
        return d


@dataclass(frozen=True)
class DatasetTake:
    x: AudioBuffer
    y: AudioBuffer
    phi: np.ndarray
    lfo_phase0: float
    seed: int

    def __post_init__(self):
        if len(self.x) != len(self.y) or self.x.sample_rate != self.y.sample_rate:
            raise ValueError("x and y must share length and sample rate")


@dataclass(frozen=True)
class TrainingTake:
    """The part of a take visible to training and evaluation code."""

    x: AudioBuffer
    y: AudioBuffer
    phi: np.ndarray


@dataclass(frozen=True)
class SplitInfo:
    split: str
    sample_rate: int
    chirp: ChirpSpec
    chirp_samples: int
    phi: np.ndarray
    takes: list[TrainingTake] = field(repr=False)


def control_vector(params: PhaserParams, n_controls: int = 5) -> np.ndarray:
    """Snapshot control values ``[rate, width, center, depth, feedback]``."""
    vals = [params.lfo_rate, params.lfo_width, params.lfo_center, params.depth, params.feedback]
    return np.asarray(vals[:n_controls] + [0.0] * max(0, n_controls - len(vals)), dtype=np.float64)


# ---------------------------------------------------------------------------
# program material


def _pink_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(spec.size, dtype=np.float64)
    f[0] = 1.0
    pink = np.fft.irfft(spec / np.sqrt(f), n)
    return pink / (np.max(np.abs(pink)) + 1e-12)


def _adsr(n: int, fs: int, attack: float = 0.01, release: float = 0.05) -> np.ndarray:
    env = np.ones(n)
    a, r = min(n, int(attack * fs)), min(n, int(release * fs))
    if a:
        env[:a] = np.linspace(0, 1, a)
    if r:
        env[n - r :] *= np.linspace(1, 0, r)
    return env


def _noise_bursts(rng, n, fs):
    out = np.zeros(n)
    pos = 0
    while pos < n:
        length = int(rng.uniform(0.05, 0.6) * fs)
        gap = int(rng.uniform(0.02, 0.3) * fs)
        seg = min(length, n - pos)
        out[pos : pos + seg] = _pink_noise(rng, seg) * _adsr(seg, fs) * rng.uniform(0.3, 1.0)
        pos += length + gap
    return out


def _saw_melody(rng, n, fs):
    out = np.zeros(n)
    pos = 0
    while pos < n:
        seg = min(int(rng.choice([0.125, 0.25, 0.5]) * fs), n - pos)
        f = 55.0 * 2 ** (rng.integers(0, 48) / 12)
        t = np.arange(seg) / fs
        saw = 2 * ((f * t + rng.uniform()) % 1.0) - 1
        out[pos : pos + seg] = saw * _adsr(seg, fs) * rng.uniform(0.4, 1.0)
        pos += seg
    return out


def _am_tones(rng, n, fs):
    t = np.arange(n) / fs
    out = np.zeros(n)
    for _ in range(3):
        f = rng.uniform(80, min(4000, fs / 4))
        am = 1 + 0.8 * np.sin(2 * np.pi * rng.uniform(0.5, 8) * t + rng.uniform(0, 2 * np.pi))
        out += np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi)) * am
    return out / 6


_GENERATORS = (_noise_bursts, _saw_melody, _am_tones)


def program_material(rng: np.random.Generator, duration: float, fs: int, segment_seconds: float = 4.0) -> np.ndarray:
    """Concatenated segments, each one kind of synthetic material, peak ~0.9."""
    n = int(round(duration * fs))
    seg = int(round(segment_seconds * fs))
    out = np.zeros(n)
    for start in range(0, n, seg):
        length = min(seg, n - start)
        kind = _GENERATORS[rng.integers(len(_GENERATORS))]
        x = kind(rng, length, fs)
        peak = np.max(np.abs(x))
        out[start : start + length] = 0.9 * x / peak if peak > 0 else x
    return out


# ---------------------------------------------------------------------------
# rendering


def render_take(spec: DatasetSpec, params: PhaserParams, split: Split, index: int) -> DatasetTake:
    seed = spec.seed(split)
    rng = np.random.default_rng([seed, index])
    fs = spec.sample_rate
    lo, hi = spec.envelope_db
    chirp = gen_chirp_train(spec.chirp(), fs, duration=spec.chirp_seconds).samples
    chirp = chirp * gain_envelope(chirp.size, lo, hi)
    music_dur = spec.take_duration(split) - spec.chirp_seconds
    music = program_material(rng, music_dur, fs, spec.segment_seconds)
    music = music * gain_envelope(music.size, lo, hi)
    fir = design_antialias_fir(fs, spec.fir_cutoff, spec.fir_taps, spec.fir_attenuation)
    x = apply_fir(AudioBuffer(np.concatenate([chirp, music]), fs), fir, "same-length")
    phase0 = float(rng.uniform(0, 2 * math.pi))
    wet = phaser_process(x, params, phase0)
    y = AudioBuffer(apply_fir(wet, fir, "full").samples[: len(wet)], fs)
    return DatasetTake(x, y, control_vector(params), phase0, seed)


def build_dataset(
    spec: DatasetSpec, params: PhaserParams, split: Split, root: str | Path | None = None
) -> list[DatasetTake]:
    """Render every take of ``split``; with ``root`` also write WAVs and the manifest."""
    params.validate(spec.sample_rate)
    takes = [render_take(spec, params, split, i) for i in range(spec.n_takes(split))]
    if root is not None:
        write_split(Path(root), spec, params, split, takes)
    return takes


def write_split(root: Path, spec: DatasetSpec, params: PhaserParams, split: Split, takes: list[DatasetTake]) -> Path:
    out = root / split
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, take in enumerate(takes):
        write_wav(out / f"take_{i:04d}_x.wav", take.x, "float32")
        write_wav(out / f"take_{i:04d}_y.wav", take.y, "float32")
        entries.append(
            {"index": i, "samples": len(take.x), "duration": take.x.duration, "lfo_phase0": take.lfo_phase0}
        )
    manifest = {
        "schema_version": MANIFEST_SCHEMA,
        "split": split,
        "seed": spec.seed(split),
        "dataset": spec.to_dict(),
        "phaser": {**params.to_dict(), "lfo_period": params.lfo_period},
        "phi": control_vector(params).tolist(),
        "chirp_samples": spec.chirp_samples(),
        "takes": entries,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def read_manifest(root: str | Path, split: Split) -> dict:
    path = Path(root) / split / "manifest.json"
    if not path.is_file():
        raise DatasetError(f"no manifest at {path}")
    manifest = json.loads(path.read_text())
    if manifest.get("schema_version") != MANIFEST_SCHEMA:
        raise DatasetError(f"unsupported manifest schema {manifest.get('schema_version')!r}")
    return manifest


def load_split(root: str | Path, split: Split) -> SplitInfo:
    """Load a split for training or evaluation: audio and controls only."""
    manifest = read_manifest(root, split)
    d = manifest["dataset"]
    fs = d["sample_rate"]
    phi = np.asarray(manifest["phi"], dtype=np.float64)
    takes = []
    for entry in manifest["takes"]:
        i = entry["index"]
        x = read_wav(Path(root) / split / f"take_{i:04d}_x.wav", fs)
        y = read_wav(Path(root) / split / f"take_{i:04d}_y.wav", fs)
        if len(x) != entry["samples"] or len(y) != entry["samples"]:
            raise DatasetError(f"take {i} of {split} does not match its manifest length")
        takes.append(TrainingTake(x, y, phi))
    spec = DatasetSpec(**{**d, "envelope_db": tuple(d["envelope_db"])})
    return SplitInfo(split, fs, spec.chirp(), manifest["chirp_samples"], phi, takes)


def as_split_info(spec: DatasetSpec, split: Split, takes: list[DatasetTake]) -> SplitInfo:
    """In-memory equivalent of :func:`load_split`, dropping the ground truth.

    Samples are rounded through float32 exactly as the WAV files are.
    """

    def stored(b: AudioBuffer) -> AudioBuffer:
        return AudioBuffer(b.samples.astype(np.float32).astype(np.float64), b.sample_rate)

    visible = [TrainingTake(stored(t.x), stored(t.y), t.phi) for t in takes]
    return SplitInfo(split, spec.sample_rate, spec.chirp(), spec.chirp_samples(), visible[0].phi, visible)


def ground_truth(root: str | Path, split: Split) -> list[float]:
    """LFO start phase of every take. Diagnostics only; never used by training."""
    return [e["lfo_phase0"] for e in read_manifest(root, split)["takes"]]


# ---------------------------------------------------------------------------
# windowing


@dataclass(frozen=True)
class WindowIndex:
    take: int
    start: int  # first target sample


def window_index(take_lengths: list[int], window_size: int, hop: int, context: int) -> list[WindowIndex]:
    """All target windows whose input context also fits inside the take."""
    if hop < 1 or window_size < 1 or hop > window_size:
        raise ValueError("need 1 <= hop <= window_size")
    out = []
    for t, n in enumerate(take_lengths):
        if n < window_size + context:
            raise ValueError(f"take {t} has {n} samples; a window needs {window_size + context}")
        out.extend(WindowIndex(t, s) for s in range(context, n - window_size + 1, hop))
    return out


def make_windows(
    info: SplitInfo, window_size: int, hop: int, context: int, seed: int | None = None, epoch: int = 0
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(x, y)`` with ``len(x) = context + window_size`` and ``len(y) = window_size``.

    The two arrays end on the same sample. With a seed the order is shuffled
    by a generator derived from ``(seed, epoch)``, so any epoch can be
    replayed on its own.
    """
    idx = window_index([len(t.x) for t in info.takes], window_size, hop, context)
    order = np.arange(len(idx))
    if seed is not None:
        order = np.random.default_rng([seed, epoch]).permutation(len(idx))
    for i in order:
        w = idx[i]
        take = info.takes[w.take]
        yield (
            take.x.samples[w.start - context : w.start + window_size],
            take.y.samples[w.start : w.start + window_size],
        )
