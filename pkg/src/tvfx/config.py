"""Experiment configuration: profiles, strict YAML round-trip and dotted overrides."""

from __future__ import annotations

import copy
import dataclasses
import os
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Any, Literal

import yaml

from .dataset import DatasetSpec
from .discriminator import DiscriminatorConfig
from .generator import GeneratorConfig
from .phaser import PRESETS, PhaserParams
from .trainer import ModeSeekingConfig, TrainConfig

OUTPUT_ROOT_ENV = "TVFX_OUTPUT_ROOT"
PROFILES = ("paper-scale", "desk-scale")
MS_GRID = {"lambda_ms": (0.01, 0.1, 1.0), "epsilon": (0.001, 0.01, 0.1)}


class ConfigError(ValueError):
    """Malformed configuration: unknown keys, bad values or unknown presets."""


@dataclass
class PhaserSection:
    preset: Literal["slow-lfo", "fast-lfo", "custom"] = "fast-lfo"
    custom: dict | None = None

    def params(self) -> PhaserParams:
        if self.preset == "custom":
            if not self.custom:
                raise ConfigError("phaser.preset 'custom' needs phaser.custom parameters")
            try:
                return PhaserParams(**self.custom)
            except TypeError as e:
                raise ConfigError(f"phaser.custom: {e}") from None
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown phaser preset {self.preset!r}")
        return PRESETS[self.preset]


@dataclass
class ExperimentConfig:
    profile: str = "desk-scale"
    output_dir: str = "runs/desk"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    phaser: PhaserSection = field(default_factory=PhaserSection)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigError(f"profile must be one of {PROFILES}, got {self.profile!r}")

    def validate(self) -> None:
        p = self.phaser.params()
        p.validate(self.dataset.sample_rate)
        if self.generator.sample_rate != self.dataset.sample_rate:
            raise ConfigError("generator.sample_rate differs from dataset.sample_rate")
        if self.generator.n_controls != self.discriminator.n_controls:
            raise ConfigError("generator and discriminator disagree on n_controls")
        lengths = self.discriminator.feature_lengths(self.train.window_size)
        if lengths[-1] < 1:
            raise ConfigError(f"discriminator shrinks a {self.train.window_size}-sample window to nothing")

    def output_path(self) -> Path:
        root = os.environ.get(OUTPUT_ROOT_ENV)
        out = Path(self.output_dir)
        return out if out.is_absolute() or not root else Path(root) / out

    def to_dict(self) -> dict:
        return {
            "profile": self.profile,
            "output_dir": self.output_dir,
            "dataset": self.dataset.to_dict(),
            "phaser": dataclasses.asdict(self.phaser),
            "generator": self.generator.to_dict(),
            "discriminator": self.discriminator.to_dict(),
            "train": self.train.to_dict(),
        }


# ---------------------------------------------------------------------------
# strict construction from plain data

_SECTIONS = {
    "dataset": DatasetSpec,
    "phaser": PhaserSection,
    "generator": GeneratorConfig,
    "discriminator": DiscriminatorConfig,
    "train": TrainConfig,
}


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kwargs = dict(data)
    if cls is TrainConfig and "mode_seeking" in kwargs:
        kwargs["mode_seeking"] = _build(ModeSeekingConfig, kwargs["mode_seeking"], f"{where}.mode_seeking")
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = sorted(set(data) - {"profile", "output_dir", *_SECTIONS})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    base = profile(data.get("profile", "desk-scale")).to_dict()
    merged = _deep_merge(base, data)
    kwargs = {k: _build(cls, merged[k], k) for k, cls in _SECTIONS.items()}
    cfg = ExperimentConfig(profile=merged["profile"], output_dir=str(merged["output_dir"]), **kwargs)
    cfg.validate()
    return cfg


def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "custom":
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def load(path: str | Path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}") from None
    return from_dict(data or {})


def dump(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def save(cfg: ExperimentConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump(cfg))
    return path


# ---------------------------------------------------------------------------
# overrides and grids


def apply_overrides(data: dict, overrides: list[tuple[str, str]]) -> dict:
    """Set ``a.b.c`` paths from string values parsed as YAML scalars."""
    out = copy.deepcopy(data)
    for key, raw in overrides:
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            if not isinstance(node.get(p, {}), dict):
                raise ConfigError(f"override {key}: {p} is not a section")
            node = node.setdefault(p, {})
        try:
            node[parts[-1]] = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise ConfigError(f"override {key}: {e}") from None
    return out


def expand_grid(cfg: ExperimentConfig, lambdas=MS_GRID["lambda_ms"], epsilons=MS_GRID["epsilon"]
                ) -> list[tuple[str, ExperimentConfig]]:
    """One mode-seeking run per ``(lambda_ms, epsilon)`` pair, each in its own directory."""
    runs = []
    for lam, eps in product(lambdas, epsilons):
        data = cfg.to_dict()
        name = f"ms{lam:g}_eps{eps:g}"
        data["train"]["mode_seeking"] = {"enabled": True, "lambda_ms": lam, "epsilon": eps}
        data["output_dir"] = str(Path(cfg.output_dir) / "grid" / name)
        runs.append((name, from_dict(data)))
    return runs


# ---------------------------------------------------------------------------
# profiles


def paper_profile() -> ExperimentConfig:
    """Full-size models and data at 44.1 kHz."""
    return ExperimentConfig(
        profile="paper-scale",
        output_dir="runs/paper",
        dataset=DatasetSpec(
            sample_rate=44100, train_duration=620.0, validation_duration=144.0, train_takes=1,
            validation_takes=1, fir_taps=1024, fir_cutoff=17800.0,
        ),
        generator=GeneratorConfig(),
        discriminator=DiscriminatorConfig(),
        train=TrainConfig(),
    )


def desk_profile() -> ExperimentConfig:
    """16 kHz, reduced widths and budgets; every algorithmic path is kept."""
    fs = 16000
    cutoff = 6458.0  # the full-scale anti-alias cutoff scaled to the lower rate
    return ExperimentConfig(
        profile="desk-scale",
        output_dir="runs/desk",
        dataset=DatasetSpec(sample_rate=fs, fir_taps=257, fir_cutoff=cutoff),
        generator=GeneratorConfig(
            audio_channels=8, audio_kernel=8, convs_per_fxblock=3, mod_channels=8, mod_kernel=8,
            lstm_hidden=16, sample_rate=fs, fir_taps=257, fir_cutoff=cutoff,
        ),
        discriminator=DiscriminatorConfig(
            n_featblocks=5, channels=16, kernel_sizes=[8, 8, 8, 12, 16], head_hidden=16,
        ),
        train=TrainConfig(
            window_size=8192, hop=1024, batch_size=8, band_limit=cutoff, eval_interval=0.5,
            phase1_max_iters=20_000, spn_pretrain_iters=2_000, finetune_max_iters=5_000,
        ),
    )


def profile(name: str) -> ExperimentConfig:
    if name == "paper-scale":
        return paper_profile()
    if name == "desk-scale":
        return desk_profile()
    raise ConfigError(f"unknown profile {name!r}; expected one of {PROFILES}")
