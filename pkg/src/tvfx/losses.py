"""Generator and discriminator objectives plus adaptive gradient balancing."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import torch
import torch.nn.functional as F

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-8
MRSTFT_WINDOWS = (512, 1024, 2048)


@dataclass
class LossWeights:
    lambda_adv: float = 1.0
    lambda_spectral: float = 0.005
    lambda_ms: float = 0.0

    def __post_init__(self):
        vals = (self.lambda_adv, self.lambda_spectral, self.lambda_ms)
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be non-negative")
        if not any(v > 0 for v in vals):
            raise ValueError("at least one loss weight must be positive")

    def as_dict(self) -> dict[str, float]:
        return {"adv": self.lambda_adv, "spectral": self.lambda_spectral, "ms": self.lambda_ms}


def hinge_generator(fake_score: torch.Tensor) -> torch.Tensor:
    return F.relu(1 - fake_score).mean()


def hinge_discriminator(real_score: torch.Tensor, fake_score: torch.Tensor) -> torch.Tensor:
    return (F.relu(1 - real_score) + F.relu(1 + fake_score)).mean()


def _stft_mag(x: torch.Tensor, window_size: int, hop: int) -> torch.Tensor:
    x = x.reshape(-1, x.shape[-1])
    window = torch.hann_window(window_size, periodic=True, dtype=x.dtype, device=x.device)
    spec = torch.stft(x, window_size, hop, window=window, center=False, return_complex=True)
    return spec.abs()


def stft_loss(
    y: torch.Tensor,
    y_hat: torch.Tensor,
    window_size: int,
    hop: int | None = None,
    sample_rate: int | None = None,
    band_limit: float | None = None,
) -> torch.Tensor:
    """Spectral convergence plus ``(1/L)``-scaled L1 log-magnitude distance.

    The relative Frobenius term uses norms over the whole batch; the log term
    sums over bins and frames of each example and is averaged over the batch,
    so a batch of one reproduces the single-signal formula exactly. Bins above
    ``band_limit`` Hz are left out.
    """
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch {tuple(y.shape)} vs {tuple(y_hat.shape)}")
    if y.shape[-1] < window_size:
        raise ValueError(f"signals of {y.shape[-1]} samples are shorter than the {window_size}-sample window")
    hop = hop or window_size // 4
    mag = _stft_mag(y, window_size, hop)
    mag_hat = _stft_mag(y_hat, window_size, hop)
    if band_limit is not None:
        if sample_rate is None:
            raise ValueError("band_limit needs sample_rate")
        n_bins = int(band_limit * window_size / sample_rate) + 1
        mag, mag_hat = mag[:, :n_bins], mag_hat[:, :n_bins]
    ref_norm = torch.linalg.vector_norm(mag)
    if ref_norm == 0:
        raise ValueError("reference spectrum is all zeros; relative spectral error is undefined")
    sc = torch.linalg.vector_norm(mag - mag_hat) / ref_norm
    log_term = (torch.log(mag.clamp_min(LOG_FLOOR)) - torch.log(mag_hat.clamp_min(LOG_FLOOR))).abs()
    log_term = log_term.sum() / (window_size * mag.shape[0])
    return sc + log_term


def mrstft(
    y: torch.Tensor,
    y_hat: torch.Tensor,
    windows: Sequence[int] = MRSTFT_WINDOWS,
    sample_rate: int | None = None,
    band_limit: float | None = None,
) -> torch.Tensor:
    """Mean of :func:`stft_loss` over several window sizes, hop = window / 4."""
    losses = [stft_loss(y, y_hat, w, w // 4, sample_rate, band_limit) for w in windows]
    return torch.stack(losses).mean()


def mode_seeking(distance: torch.Tensor | float, epsilon: float) -> torch.Tensor:
    """``eps / (eps + d)``: 1 for identical outputs, falling to 0 as they diverge."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    distance = torch.as_tensor(distance)
    if (distance < 0).any():
        raise ValueError("distance must be non-negative")
    return epsilon / (epsilon + distance)


# ---------------------------------------------------------------------------
# gradient balancing


@dataclass
class BalancerState:
    """Exponential moving average of every loss's output-gradient norm."""

    decay: float = 0.99
    ema: dict[str, float] = field(default_factory=dict)

    def state_dict(self) -> dict:
        return {"decay": self.decay, "ema": dict(self.ema)}

    @classmethod
    def from_state_dict(cls, d: dict) -> "BalancerState":
        return cls(decay=d["decay"], ema=dict(d["ema"]))


def _norm(grads: Sequence[torch.Tensor]) -> float:
    return float(torch.sqrt(sum((g.detach().double() ** 2).sum() for g in grads)))


def balance_gradients(
    per_loss_gradients: dict[str, Sequence[torch.Tensor]],
    weights: dict[str, float],
    state: BalancerState,
) -> tuple[list[torch.Tensor], dict[str, float], dict[str, float]]:
    """Combine per-loss gradients taken at the generator output(s).

    Each loss gradient ``g_i`` is rescaled to ``(w_i / sum w) * g_i / <|g_i|>``
    where ``<.>`` is the moving average held in ``state``. The average is
    seeded with the first observed norm and updated after it has been used.
    Returns the combined gradient per output tensor, the observed norms and
    the norm of every rescaled term.
    """
    active = {k: g for k, g in per_loss_gradients.items() if weights.get(k, 0.0) > 0}
    if not active:
        raise ValueError("no loss with a positive weight")
    total_w = sum(weights[k] for k in active)
    combined: list[torch.Tensor] | None = None
    norms: dict[str, float] = {}
    contributions: dict[str, float] = {}
    for name, grads in active.items():
        norm = _norm(grads)
        norms[name] = norm
        if name not in state.ema:
            state.ema[name] = norm
        avg = state.ema[name]
        if norm == 0.0 or avg == 0.0:
            log.warning("zero gradient norm for loss %r; leaving it unscaled", name)
            scale = 0.0 if avg == 0.0 else weights[name] / total_w
        else:
            scale = weights[name] / total_w / avg
        scaled = [g * scale for g in grads]
        contributions[name] = norm * scale
        combined = scaled if combined is None else [a + b for a, b in zip(combined, scaled)]
        if norm > 0.0:
            state.ema[name] = state.decay * avg + (1 - state.decay) * norm if avg > 0 else norm
    assert combined is not None
    return combined, norms, contributions


class Balancer:
    """Backpropagates a weighted set of generator losses through ``balance_gradients``."""

    def __init__(self, weights: dict[str, float], decay: float = 0.99):
        self.weights = dict(weights)
        self.state = BalancerState(decay=decay)

    def backward(self, losses: dict[str, torch.Tensor], outputs: Sequence[torch.Tensor]) -> dict[str, float]:
        per_loss = {}
        names = [k for k in losses if self.weights.get(k, 0.0) > 0]
        for name in names:
            grads = torch.autograd.grad(
                losses[name], list(outputs), retain_graph=True, allow_unused=True
            )
            per_loss[name] = [torch.zeros_like(o) if g is None else g for g, o in zip(grads, outputs)]
        combined, norms, _ = balance_gradients(per_loss, self.weights, self.state)
        pairs = [(o, g) for o, g in zip(outputs, combined) if o.requires_grad]
        torch.autograd.backward([o for o, _ in pairs], [g for _, g in pairs])
        return norms
