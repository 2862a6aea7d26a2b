"""FeatBlock discriminator and the State Prediction Network built on its features."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn

from .generator import FiLM, StateBundle


class FreezeError(RuntimeError):
    """State prediction requested while the shared feature extractor is trainable."""


@dataclass
class DiscriminatorConfig:
    n_featblocks: int = 6
    channels: int = 24
    kernel_sizes: list[int] = field(default_factory=lambda: [8, 8, 8, 12, 16, 16])
    pooling: int = 4
    head_hidden: int = 24
    head_layers: int = 2
    film_enabled: bool = False
    n_controls: int = 5

    def __post_init__(self):
        if len(self.kernel_sizes) != self.n_featblocks:
            raise ValueError(
                f"{len(self.kernel_sizes)} kernel sizes given for {self.n_featblocks} FeatBlocks"
            )

    def feature_lengths(self, window: int) -> list[int]:
        lengths = [window]
        for k in self.kernel_sizes:
            lengths.append((lengths[-1] - k + 1) // self.pooling)
        return lengths

    def to_dict(self) -> dict:
        return asdict(self)


FeatureSet = list  # list of [batch, channels, time_j] tensors, time_j decreasing


class FeatBlock(nn.Module):
    def __init__(self, in_channels: int, channels: int, kernel: int, pooling: int, n_controls: int, film: bool):
        super().__init__()
        self.conv = nn.Conv1d(in_channels, channels, kernel)
        self.act = nn.PReLU(channels, init=0.25)
        self.film = FiLM(n_controls, channels, film)
        self.pool = nn.AvgPool1d(pooling)

    def forward(self, z, phi):
        return self.pool(self.film(self.act(self.conv(z)), phi))


def _mlp(width: int, layers: int, out: int) -> nn.Sequential:
    mods: list[nn.Module] = []
    for _ in range(layers):
        mods += [nn.Linear(width, width), nn.PReLU(width, init=0.25)]
    mods.append(nn.Linear(width, out))
    return nn.Sequential(*mods)


class PooledSum(nn.Module):
    """Per-feature 1x1 convolution, global average over time, summed across features."""

    def __init__(self, channels: int, width: int, n_features: int):
        super().__init__()
        self.proj = nn.ModuleList(nn.Conv1d(channels, width, 1) for _ in range(n_features))

    def forward(self, feats: FeatureSet) -> torch.Tensor:
        return sum(p(z).mean(-1) for p, z in zip(self.proj, feats))


class Discriminator(nn.Module):
    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        blocks = []
        for j, k in enumerate(cfg.kernel_sizes):
            blocks.append(FeatBlock(2 if j == 0 else cfg.channels, cfg.channels, k, cfg.pooling,
                                    cfg.n_controls, cfg.film_enabled))
        self.featblocks = nn.ModuleList(blocks)
        self.head_pool = PooledSum(cfg.channels, cfg.head_hidden, cfg.n_featblocks)
        self.head = _mlp(cfg.head_hidden, cfg.head_layers, 1)

    def extract_features(self, x: torch.Tensor, y: torch.Tensor, phi=None) -> FeatureSet:
        if x.shape != y.shape:
            raise ValueError(f"input {tuple(x.shape)} and output {tuple(y.shape)} windows differ")
        z = torch.cat([x, y], dim=1)
        feats = []
        for block in self.featblocks:
            z = block(z, phi)
            feats.append(z)
        return feats

    def score_features(self, feats: FeatureSet) -> torch.Tensor:
        return self.head(self.head_pool(feats)).squeeze(-1)

    def forward(self, x: torch.Tensor, y: torch.Tensor, phi=None) -> torch.Tensor:
        """One unbounded realness score per batch element."""
        return self.score_features(self.extract_features(x, y, phi))

    discriminate = forward

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        return {
            "featblocks": list(self.featblocks.parameters()),
            "head": [*self.head_pool.parameters(), *self.head.parameters()],
        }

    def set_frozen(self, component: str, frozen: bool) -> None:
        groups = self.parameter_groups()
        if component == "all":
            names = list(groups)
        elif component in groups:
            names = [component]
        else:
            raise ValueError(f"unknown component {component!r}")
        for name in names:
            for p in groups[name]:
                p.requires_grad_(not frozen)

    def is_frozen(self, component: str = "featblocks") -> bool:
        return not any(p.requires_grad for p in self.parameter_groups()[component])


class StatePredictor(nn.Module):
    """Predicts every ModBlock's ``(h0, c0)`` from the discriminator's features.

    Its own 1x1 layers and global pooling summarize the features, an MLP maps
    the summary to ``2 * n_blocks * hidden`` values; ``h`` goes through tanh,
    ``c`` is left linear.
    """

    def __init__(self, dcfg: DiscriminatorConfig, n_blocks: int, hidden: int):
        super().__init__()
        self.n_blocks, self.hidden = n_blocks, hidden
        self.pool = PooledSum(dcfg.channels, dcfg.head_hidden, dcfg.n_featblocks)
        self.net = _mlp(dcfg.head_hidden, dcfg.head_layers, 2 * n_blocks * hidden)

    def predict_states(self, feats: FeatureSet) -> StateBundle:
        if any(z.requires_grad for z in feats):
            raise FreezeError("features carry gradients; the feature extractor must be frozen")
        flat = self.net(self.pool(feats))
        return StateBundle.from_flat(flat, self.n_blocks, self.hidden, squash_h=True)

    def forward(self, disc: Discriminator, x: torch.Tensor, y: torch.Tensor, phi=None) -> StateBundle:
        if not disc.is_frozen("featblocks"):
            raise FreezeError("freeze the discriminator's FeatBlocks before predicting states")
        return self.predict_states(disc.extract_features(x, y, phi))


def build_discriminator(cfg: DiscriminatorConfig, seed: int = 0) -> Discriminator:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return Discriminator(cfg)


def build_state_predictor(dcfg: DiscriminatorConfig, n_blocks: int, hidden: int, seed: int = 0) -> StatePredictor:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return StatePredictor(dcfg, n_blocks, hidden)
