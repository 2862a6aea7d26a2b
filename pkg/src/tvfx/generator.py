"""Convolutional-recurrent generator with a modulation path and an audio path.

The modulation path is a chain of ModBlocks fed with a zero signal; each block
runs an LSTM at a pooled rate from an injectable initial state and emits FiLM
tensors for the FXBlock next to it in the audio path. The audio path is a chain
of dilated-convolution FXBlocks followed by a 1x1 projection and a fixed
anti-alias FIR.

Every layer is causal and all intermediate signals are right-aligned (the last
sample of every tensor refers to the same instant). Joining two signals is then
a crop of the longer one from the left, so the same code computes one-shot
outputs and streamed blocks, and the output length is always
``len(x) - receptive_offset``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .dsp import design_antialias_fir


class LengthError(ValueError):
    pass


@dataclass
class GeneratorConfig:
    n_blocks: int = 3
    audio_channels: int = 16
    audio_kernel: int = 16
    convs_per_fxblock: int = 4
    dilation_base: int = 4
    mod_channels: int = 16
    mod_kernel: int = 16
    mod_pooling: int = 64
    lstm_hidden: int = 32
    film_enabled: bool = False
    n_controls: int = 5
    latent_dim: int = 2
    sample_rate: int = 44100
    fir_taps: int = 1024
    fir_cutoff: float = 17800.0
    fir_attenuation: float = 100.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("film_enabled", "fir_taps", "fir_cutoff", "fir_attenuation"):
                continue
            if isinstance(v, (int, float)) and v <= 0:
                raise ValueError(f"GeneratorConfig.{f.name} must be positive, got {v}")
        if self.fir_taps < 0:
            raise ValueError("fir_taps must be >= 0 (0 disables the output FIR)")

    def dilations(self) -> list[int]:
        return [self.dilation_base**k for k in range(self.convs_per_fxblock)]

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# states


@dataclass
class StateBundle:
    """Initial LSTM states, one ``(h, c)`` pair of shape [batch, hidden] per ModBlock."""

    h: list[torch.Tensor]
    c: list[torch.Tensor]

    def __post_init__(self):
        if len(self.h) != len(self.c):
            raise ValueError("StateBundle needs as many h as c tensors")

    @property
    def batch_size(self) -> int:
        return self.h[0].shape[0]

    def __len__(self) -> int:
        return len(self.h)

    def permute(self, index: torch.Tensor) -> "StateBundle":
        return StateBundle([h[index] for h in self.h], [c[index] for c in self.c])

    def roll(self, shift: int = 1) -> "StateBundle":
        """Batch derangement used for the second sample of a mode-seeking pair."""
        return StateBundle([h.roll(shift, 0) for h in self.h], [c.roll(shift, 0) for c in self.c])

    def slice(self, n: int) -> "StateBundle":
        return StateBundle([h[:n] for h in self.h], [c[:n] for c in self.c])

    def detach(self) -> "StateBundle":
        return StateBundle([h.detach() for h in self.h], [c.detach() for c in self.c])

    def validate(self, n_blocks: int, hidden: int, batch: int | None = None) -> None:
        if len(self) != n_blocks:
            raise ValueError(f"StateBundle has {len(self)} blocks, generator has {n_blocks}")
        for t in (*self.h, *self.c):
            if t.ndim != 2 or t.shape[1] != hidden:
                raise ValueError(f"state tensor of shape {tuple(t.shape)}, expected [batch, {hidden}]")
            if batch is not None and t.shape[0] != batch:
                raise ValueError(f"state batch {t.shape[0]} != input batch {batch}")
            if not torch.isfinite(t).all():
                raise ValueError("non-finite initial state")

    @classmethod
    def from_flat(cls, flat: torch.Tensor, n_blocks: int, hidden: int, squash_h: bool = False) -> "StateBundle":
        parts = flat.reshape(flat.shape[0], n_blocks, 2, hidden)
        h = [parts[:, j, 0] for j in range(n_blocks)]
        c = [parts[:, j, 1] for j in range(n_blocks)]
        if squash_h:
            h = [torch.tanh(t) for t in h]
        return cls(h, c)


def _as_generator(seed: int | torch.Generator | None) -> torch.Generator | None:
    if seed is None or isinstance(seed, torch.Generator):
        return seed
    return torch.Generator().manual_seed(int(seed))


def sample_latent(batch: int, method: str, dim: int, seed=None, dtype=torch.float32) -> torch.Tensor:
    """Latent vectors for stochastic state initialization.

    ``normal``: i.i.d. standard normal of size ``dim``.
    ``angle``: ``[cos t, sin t]`` with ``t ~ U[0, 2 pi]``.
    """
    if batch < 1:
        raise ValueError("batch must be >= 1")
    gen = _as_generator(seed)
    if method == "normal":
        return torch.randn(batch, dim, generator=gen, dtype=dtype)
    if method == "angle":
        theta = torch.rand(batch, generator=gen, dtype=dtype) * (2 * math.pi)
        return torch.stack([torch.cos(theta), torch.sin(theta)], dim=1)
    raise ValueError(f"unknown state initialization {method!r}")


class StateInitializer(nn.Module):
    """Trainable linear map from a latent vector to every ``h0_j`` and ``c0_j``."""

    def __init__(self, n_blocks: int, hidden: int, latent_dim: int = 2):
        super().__init__()
        self.n_blocks, self.hidden, self.latent_dim = n_blocks, hidden, latent_dim
        self.linear = nn.Linear(latent_dim, 2 * n_blocks * hidden)

    def forward(self, u: torch.Tensor) -> StateBundle:
        return StateBundle.from_flat(self.linear(u), self.n_blocks, self.hidden)

    def sample(self, batch: int, method: str = "angle", seed=None) -> StateBundle:
        dim = 2 if method == "angle" else self.latent_dim
        if method == "angle" and self.latent_dim != 2:
            raise ValueError("angle initialization needs latent_dim == 2")
        dtype = self.linear.weight.dtype
        return self(sample_latent(batch, method, dim, seed, dtype=dtype))


# ---------------------------------------------------------------------------
# streaming building blocks


def crop_right(*tensors: torch.Tensor) -> list[torch.Tensor]:
    """Keep the trailing common length of right-aligned signals."""
    n = min(t.shape[-1] for t in tensors)
    return [t[..., t.shape[-1] - n :] for t in tensors]


class CachedConv1d(nn.Conv1d):
    """Valid 1-D convolution whose left context is cached between calls.

    The first call behaves like an unpadded convolution; later calls prepend
    the cached tail so that concatenated outputs equal one long convolution.
    """

    def __init__(self, *args, **kwargs):
        kwargs.setdefault("padding", 0)
        super().__init__(*args, **kwargs)

    @property
    def context(self) -> int:
        return (self.kernel_size[0] - 1) * self.dilation[0]

    def step(self, x: torch.Tensor, cache: dict) -> torch.Tensor:
        key = id(self)
        prev = cache.get(key)
        buf = x if prev is None else torch.cat([prev, x], dim=-1)
        ctx = self.context
        if ctx:
            cache[key] = buf[..., max(buf.shape[-1] - ctx, 0) :]
        if buf.shape[-1] <= ctx:
            return buf.new_zeros(buf.shape[0], self.out_channels, 0)
        return super().forward(buf)


class FixedFIR(nn.Module):
    """Non-trainable FIR applied by FFT convolution, valid part only, with cached context."""

    def __init__(self, taps: np.ndarray):
        super().__init__()
        self.register_buffer("taps", torch.tensor(np.asarray(taps), dtype=torch.float32))

    @property
    def context(self) -> int:
        return self.taps.shape[0] - 1

    def step(self, x: torch.Tensor, cache: dict) -> torch.Tensor:
        key = id(self)
        prev = cache.get(key)
        buf = x if prev is None else torch.cat([prev, x], dim=-1)
        ctx = self.context
        cache[key] = buf[..., max(buf.shape[-1] - ctx, 0) :]
        n = buf.shape[-1]
        if n <= ctx:
            return buf[..., :0]
        size = n + ctx
        taps = self.taps.to(buf.dtype)
        y = torch.fft.irfft(torch.fft.rfft(buf, n=size) * torch.fft.rfft(taps, n=size), n=size)
        return y[..., ctx:n]


class Pointwise(nn.Conv1d):
    """1x1 convolution that passes empty (zero-length) signals through."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__(in_channels, out_channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] == 0:
            return x.new_zeros(x.shape[0], self.out_channels, 0)
        return super().forward(x)


class FiLM(nn.Module):
    """Control-vector FiLM; skipped entirely when disabled (snapshot mode)."""

    def __init__(self, n_controls: int, channels: int, enabled: bool):
        super().__init__()
        self.enabled = enabled
        self.net = nn.Linear(n_controls, 2 * channels)

    def forward(self, x: torch.Tensor, phi: torch.Tensor | None) -> torch.Tensor:
        if not self.enabled:
            return x
        gamma, beta = self.net(phi).unsqueeze(-1).chunk(2, dim=1)
        return x * (1 + gamma) + beta


class PooledLSTM(nn.Module):
    """Average pool -> LSTM -> affine projection -> causal linear-interpolation upsampling.

    Frames of ``pooling`` samples are anchored at the first sample of the
    stream. Sample ``r`` of frame ``i`` interpolates between the values of
    frames ``i-2`` and ``i-1``, reaching value ``i-1`` on the last sample of
    frame ``i``; the LSTM's initial hidden state stands in for outputs before
    the first frame. The result has one value per input sample and uses no
    future samples. A constant frame sequence upsamples to the same constant.

    The projection (the block's pair of 1x1 layers) is applied at frame rate:
    interpolation weights sum to one, so projecting before or after
    upsampling gives the same signal.
    """

    def __init__(self, channels: int, hidden: int, pooling: int, out_features: int):
        super().__init__()
        self.pooling = pooling
        self.hidden = hidden
        self.lstm = nn.LSTM(channels, hidden, batch_first=True)
        self.proj = nn.Linear(hidden, out_features)

    def step(self, x: torch.Tensor, h0: torch.Tensor, c0: torch.Tensor, cache: dict) -> torch.Tensor:
        key = id(self)
        st = cache.get(key)
        if st is None:
            prev = self.proj(h0).unsqueeze(1)
            st = {"pending": x[..., :0], "h": h0.unsqueeze(0).contiguous(), "c": c0.unsqueeze(0).contiguous(),
                  "tail": torch.cat([prev, prev], dim=1), "pos": 0}
        p = self.pooling
        n0, length = st["pos"], x.shape[-1]
        buf = torch.cat([st["pending"], x], dim=-1)
        n_frames = buf.shape[-1] // p
        h, c = st["h"], st["c"]
        if n_frames:
            frames = buf[..., : n_frames * p].reshape(buf.shape[0], buf.shape[1], n_frames, p).mean(-1)
            out, (h, c) = self.lstm(frames.transpose(1, 2), (h, c))
            vals = torch.cat([st["tail"], self.proj(out)], dim=1)
        else:
            vals = st["tail"]
        # vals[k] is reached at the end of frame (n0 // p) + k; upsample every
        # frame spanned by this chunk, then trim to the chunk's samples
        first = n0 // p
        span = (n0 + length - 1) // p - first + 1 if length else 0
        vals_t = vals.transpose(1, 2)
        lo = vals_t[:, :, :span, None]
        hi = vals_t[:, :, 1 : span + 1, None]
        frac = torch.arange(1, p + 1, dtype=x.dtype, device=x.device) / p
        up = (lo + frac * (hi - lo)).flatten(2)
        off = n0 - first * p
        y = up[..., off : off + length]
        cache[key] = {"pending": buf[..., n_frames * p :], "h": h, "c": c, "tail": vals[:, -2:], "pos": n0 + length}
        return y


class ModBlock(nn.Module):
    def __init__(self, in_channels: int, cfg: GeneratorConfig):
        super().__init__()
        ch = cfg.mod_channels
        self.n_mod = 2 * cfg.audio_channels
        self.conv = CachedConv1d(in_channels, ch, cfg.mod_kernel)
        self.act = nn.PReLU(ch, init=0.25)
        self.film = FiLM(cfg.n_controls, ch, cfg.film_enabled)
        # the two parallel 1x1 layers (modulation tensor, residual) share one affine map
        self.rnn = PooledLSTM(ch, cfg.lstm_hidden, cfg.mod_pooling, self.n_mod + ch)

    def step(self, s, phi, h0, c0, cache):
        main = self.act(self.conv.step(s, cache))
        branch = self.rnn.step(self.film(main, phi), h0, c0, cache)
        mod, res = branch[:, : self.n_mod], branch[:, self.n_mod :]
        main, res = crop_right(main, res)
        return main + res, mod


class FXBlock(nn.Module):
    def __init__(self, in_channels: int, cfg: GeneratorConfig):
        super().__init__()
        ch = cfg.audio_channels
        convs = []
        for k, d in enumerate(cfg.dilations()):
            if k == 0:
                convs.append(CachedConv1d(in_channels, ch, cfg.audio_kernel, dilation=d))
            else:
                convs.append(CachedConv1d(ch, ch, cfg.audio_kernel, dilation=d, groups=ch))
        self.convs = nn.ModuleList(convs)
        self.skip = Pointwise(in_channels, ch) if in_channels != ch else None
        self.act = nn.PReLU(ch, init=0.25)

    def step(self, x, mod, cache):
        z = x
        for conv in self.convs:
            z = conv.step(z, cache)
        res = x if self.skip is None else self.skip(x)
        z, res, mod = crop_right(z, res, mod)
        gamma, beta = mod.chunk(2, dim=1)
        return self.act((z + res) * (1 + gamma) + beta)


class Generator(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        self.mod_blocks = nn.ModuleList(
            ModBlock(1 if j == 0 else cfg.mod_channels, cfg) for j in range(cfg.n_blocks)
        )
        self.fx_blocks = nn.ModuleList(
            FXBlock(1 if j == 0 else cfg.audio_channels, cfg) for j in range(cfg.n_blocks)
        )
        self.out_proj = Pointwise(cfg.audio_channels, 1)
        self.state_init = StateInitializer(cfg.n_blocks, cfg.lstm_hidden, cfg.latent_dim)
        if cfg.fir_taps:
            fir = design_antialias_fir(cfg.sample_rate, cfg.fir_cutoff, cfg.fir_taps, cfg.fir_attenuation)
            self.fir = FixedFIR(fir.taps)
        else:
            self.fir = None

    # -- lengths -------------------------------------------------------------

    def receptive_offset(self) -> int:
        """Input samples consumed before the first output sample."""
        return receptive_offset(self.cfg)

    def required_input_length(self, output_len: int) -> int:
        return required_input_length(self.cfg, output_len)

    # -- processing ------------------------------------------------------------

    def _step(self, x: torch.Tensor, phi, h0: StateBundle, cache: dict) -> torch.Tensor:
        s = torch.zeros_like(x)
        a = x
        for j, (mb, fb) in enumerate(zip(self.mod_blocks, self.fx_blocks)):
            s, mod = mb.step(s, phi, h0.h[j], h0.c[j], cache)
            a = fb.step(a, mod, cache)
        y = self.out_proj(a)
        if self.fir is not None:
            y = self.fir.step(y, cache)
        return y

    def _check(self, x: torch.Tensor, h0: StateBundle) -> None:
        if x.ndim != 3 or x.shape[1] != 1:
            raise ValueError(f"expected audio of shape [batch, 1, time], got {tuple(x.shape)}")
        if x.shape[0] == 0:
            raise ValueError("empty batch")
        h0.validate(self.cfg.n_blocks, self.cfg.lstm_hidden, x.shape[0])

    def forward(self, x: torch.Tensor, phi: torch.Tensor | None, h0: StateBundle,
                target_len: int | None = None) -> torch.Tensor:
        self._check(x, h0)
        offset = self.receptive_offset()
        if target_len is not None and x.shape[-1] != offset + target_len:
            raise LengthError(
                f"input has {x.shape[-1]} samples; {offset + target_len} are required for {target_len} outputs"
            )
        if x.shape[-1] <= offset:
            raise LengthError(f"input of {x.shape[-1]} samples is within the receptive offset ({offset})")
        y = self._step(x, phi, h0, {})
        assert y.shape[-1] == x.shape[-1] - offset
        return y

    def stream(self, phi: torch.Tensor | None, h0: StateBundle) -> "GeneratorStream":
        return GeneratorStream(self, phi, h0)

    @torch.no_grad()
    def streaming_forward(self, x_blocks: Iterable[torch.Tensor], phi, h0: StateBundle) -> list[torch.Tensor]:
        stream = self.stream(phi, h0)
        return [stream.process(b) for b in x_blocks]


class GeneratorStream:
    """Block-wise processing with convolution and recurrent caches kept between calls."""

    def __init__(self, gen: Generator, phi, h0: StateBundle):
        self.gen, self.phi, self.h0 = gen, phi, h0
        self.reset()

    def reset(self) -> None:
        self.cache: dict = {}

    def process(self, block: torch.Tensor) -> torch.Tensor:
        if block.shape[-1] < 1:
            raise ValueError("stream blocks must hold at least one sample")
        self.gen._check(block, self.h0)
        return self.gen._step(block, self.phi, self.h0, self.cache)


def receptive_offset(cfg: GeneratorConfig) -> int:
    mod_start = 0
    fx_start = 0
    fx_shrink = sum((cfg.audio_kernel - 1) * d for d in cfg.dilations())
    for _ in range(cfg.n_blocks):
        mod_start += cfg.mod_kernel - 1
        fx_start = max(fx_start + fx_shrink, mod_start)
    if cfg.fir_taps:
        fx_start += cfg.fir_taps - 1
    return fx_start


def required_input_length(cfg: GeneratorConfig, output_len: int) -> int:
    if output_len < 1:
        raise ValueError("output_len must be >= 1")
    return output_len + receptive_offset(cfg)


def build_generator(cfg: GeneratorConfig, seed: int = 0) -> Generator:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return Generator(cfg)


def blocks_of(x: torch.Tensor, sizes: Sequence[int] | int) -> list[torch.Tensor]:
    n = x.shape[-1]
    if isinstance(sizes, int):
        sizes = [sizes] * math.ceil(n / sizes)
    bounds = np.cumsum([0, *sizes])
    return [x[..., a:b] for a, b in zip(bounds[:-1], bounds[1:]) if a < n]
