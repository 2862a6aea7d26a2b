"""Two-phase training: adversarial Phase I, then state prediction and fine-tuning.

Phase I trains the generator against the discriminator with random initial
states and keeps the checkpoint with the lowest validation modulation loss.
Phase II adds a State Prediction Network on the frozen discriminator
features, first training it alone, then fine-tuning it together with the
generator on the spectral objective.

Every run is reproducible from its configs and seed: windows are shuffled by
a generator derived from ``(seed, epoch)``, all other randomness comes from
the global torch generator whose state is stored in each checkpoint, and
deterministic kernels are requested.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Literal

import numpy as np
import torch

from .dataset import SplitInfo, make_windows, window_index
from .discriminator import (
    Discriminator,
    DiscriminatorConfig,
    StatePredictor,
    build_discriminator,
    build_state_predictor,
)
from .dsp import AudioBuffer
from .generator import Generator, GeneratorConfig, StateBundle, build_generator
from .losses import Balancer, BalancerState, hinge_discriminator, hinge_generator, mode_seeking, mrstft
from .modmetric import ModMetricResult, mod_metric

log = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = 1
Phase = Literal["adversarial", "spn-pretrain", "finetune"]
PHASES: tuple[str, ...] = ("adversarial", "spn-pretrain", "finetune")
MOD_LIMIT = 0.9  # fine-tuning selection: modulation loss must stay below this


class DivergenceError(RuntimeError):
    """A loss became non-finite; the last saved checkpoint is left untouched."""


class MissingArtifactError(FileNotFoundError):
    """A phase was started without the checkpoint it builds on."""


@dataclass
class ModeSeekingConfig:
    enabled: bool = False
    lambda_ms: float = 0.01
    epsilon: float = 0.01


@dataclass
class TrainConfig:
    window_size: int = 32768
    hop: int = 4096
    batch_size: int = 16
    g_learning_rate: float = 5e-4
    d_learning_rate: float = 1e-3
    adam_betas: tuple[float, float] = (0.8, 0.99)
    adam_eps: float = 1e-8
    lambda_adv: float = 1.0
    phase1_spectral_weight: float = 0.005
    finetune_spectral_weight: float = 1.0
    mode_seeking: ModeSeekingConfig = field(default_factory=ModeSeekingConfig)
    state_init: Literal["angle", "normal"] = "angle"
    mrstft_windows: tuple[int, ...] = (512, 1024, 2048)
    band_limit: float | None = 17800.0
    balancer_decay: float = 0.99
    eval_interval: float = 5.0  # epochs
    eval_interval_iters: int | None = None  # overrides eval_interval when set
    phase1_max_iters: int = 400_000
    spn_pretrain_iters: int = 50_000
    finetune_max_iters: int = 50_000
    spn_pretrain: bool = True
    early_stop_lmod: float | None = None
    max_seconds: float | None = None
    eval_batch_size: int = 16
    eval_seed: int = 1234
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.mode_seeking, dict):
            self.mode_seeking = ModeSeekingConfig(**self.mode_seeking)
        self.adam_betas = tuple(self.adam_betas)
        self.mrstft_windows = tuple(self.mrstft_windows)
        if not 1 <= self.hop <= self.window_size:
            raise ValueError("need 1 <= hop <= window_size")
        for name in ("g_learning_rate", "d_learning_rate", "batch_size", "eval_interval", "balancer_decay"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.mode_seeking.epsilon <= 0:
            raise ValueError("mode-seeking epsilon must be positive")
        if max(self.mrstft_windows) > self.window_size:
            raise ValueError("MR-STFT windows must fit in the training window")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        d["mrstft_windows"] = list(self.mrstft_windows)
        return d


# ---------------------------------------------------------------------------
# helpers


def parameter_hash(module: torch.nn.Module | list[torch.nn.Parameter]) -> str:
    h = hashlib.sha256()
    tensors = module.state_dict().values() if isinstance(module, torch.nn.Module) else module
    for t in tensors:
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def set_determinism(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)


def _tensor(a: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(np.ascontiguousarray(a), dtype=torch.float32)


def batches(
    info: SplitInfo, cfg: TrainConfig, context: int, epoch: int, skip: int = 0
) -> Iterator[tuple[torch.Tensor, torch.Tensor]]:
    """Shuffled ``[B, 1, T]`` batches for one epoch; the incomplete tail is dropped."""
    it = make_windows(info, cfg.window_size, cfg.hop, context, seed=cfg.seed, epoch=epoch)
    xs, ys, k = [], [], 0
    for x, y in it:
        xs.append(x)
        ys.append(y)
        if len(xs) == cfg.batch_size:
            if k >= skip:
                yield _tensor(np.stack(xs))[:, None], _tensor(np.stack(ys))[:, None]
            xs, ys, k = [], [], k + 1


def batches_per_epoch(info: SplitInfo, cfg: TrainConfig, context: int) -> int:
    n = len(window_index([len(t.x) for t in info.takes], cfg.window_size, cfg.hop, context))
    return n // cfg.batch_size


def render(gen: Generator, x: np.ndarray, phi, h0: StateBundle) -> np.ndarray:
    """Run the generator over a whole signal, preceded by silence as context."""
    pad = np.concatenate([np.zeros(gen.receptive_offset()), x])
    with torch.no_grad():
        y = gen(_tensor(pad)[None, None], phi, h0)
    return y[0, 0].double().numpy()


# ---------------------------------------------------------------------------
# training state


@dataclass
class History:
    evaluations: list[dict] = field(default_factory=list)
    best_iteration: int | None = None
    best_value: float | None = None


class Trainer:
    """Owns models, optimizers and counters of one run, and checkpoints them."""

    def __init__(
        self,
        gcfg: GeneratorConfig,
        dcfg: DiscriminatorConfig,
        tcfg: TrainConfig,
        out_dir: str | Path,
        extra_config: dict | None = None,
    ):
        self.gcfg, self.dcfg, self.tcfg = gcfg, dcfg, tcfg
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.extra_config = extra_config or {}
        set_determinism(tcfg.seed)
        self.gen = build_generator(gcfg, tcfg.seed)
        self.disc = build_discriminator(dcfg, tcfg.seed + 1)
        self.spn: StatePredictor | None = None
        self.phase: str = "adversarial"
        self.opt_g = self._adam(self.gen.parameters(), tcfg.g_learning_rate)
        self.opt_d = self._adam(self.disc.parameters(), tcfg.d_learning_rate)
        self.balancer = Balancer({}, tcfg.balancer_decay)
        self.iteration = 0
        self.epoch = 0
        self.batch_in_epoch = 0
        self.history = History()
        self.context = self.gen.receptive_offset()

    def _adam(self, params, lr) -> torch.optim.Adam:
        return torch.optim.Adam(params, lr=lr, betas=self.tcfg.adam_betas, eps=self.tcfg.adam_eps)

    @property
    def phi(self) -> torch.Tensor | None:
        return None if not self.gcfg.film_enabled else torch.zeros(1, self.gcfg.n_controls)

    def mrstft(self, y, y_hat) -> torch.Tensor:
        limit = self.tcfg.band_limit
        if limit is not None and limit >= self.gcfg.sample_rate / 2:
            limit = None
        return mrstft(y, y_hat, self.tcfg.mrstft_windows, self.gcfg.sample_rate, limit)

    # -- phase transitions -------------------------------------------------------

    def start_phase(self, phase: str) -> None:
        if phase not in PHASES:
            raise ValueError(f"unknown phase {phase!r}")
        if phase == "adversarial":
            return
        if self.spn is None:
            self.spn = build_state_predictor(self.dcfg, self.gcfg.n_blocks, self.gcfg.lstm_hidden, self.tcfg.seed + 2)
        self.disc.set_frozen("all", True)
        if phase == "spn-pretrain":
            for p in self.gen.parameters():
                p.requires_grad_(False)
            self.opt_g = self._adam(self.spn.parameters(), self.tcfg.g_learning_rate)
        else:
            for p in self.gen.parameters():
                p.requires_grad_(True)
            self.opt_g = self._adam([*self.gen.parameters(), *self.spn.parameters()], self.tcfg.g_learning_rate)
        self.opt_d = None
        self.balancer = Balancer({}, self.tcfg.balancer_decay)
        self.phase = phase
        self.iteration = self.epoch = self.batch_in_epoch = 0
        self.history = History()

    # -- checkpoints -------------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "schema_version": CHECKPOINT_SCHEMA,
            "phase": self.phase,
            "config": {
                "generator": self.gcfg.to_dict(),
                "discriminator": self.dcfg.to_dict(),
                "train": self.tcfg.to_dict(),
                **self.extra_config,
            },
            "generator": self.gen.state_dict(),
            "discriminator": self.disc.state_dict(),
            "spn": None if self.spn is None else self.spn.state_dict(),
            "opt_g": self.opt_g.state_dict(),
            "opt_d": None if self.opt_d is None else self.opt_d.state_dict(),
            "balancer": self.balancer.state.state_dict(),
            "balancer_weights": dict(self.balancer.weights),
            "counters": {"iteration": self.iteration, "epoch": self.epoch, "batch_in_epoch": self.batch_in_epoch},
            "rng": torch.get_rng_state(),
            "history": asdict(self.history),
        }

    def save(self, name: str) -> Path:
        path = self.out / name
        tmp = path.with_suffix(".tmp")
        torch.save(self.state_dict(), tmp)
        tmp.replace(path)
        return path

    def load_state(self, ckpt: dict, restore_progress: bool = True) -> None:
        if ckpt.get("schema_version") != CHECKPOINT_SCHEMA:
            raise ValueError(f"unsupported checkpoint schema {ckpt.get('schema_version')!r}")
        self.gen.load_state_dict(ckpt["generator"])
        self.disc.load_state_dict(ckpt["discriminator"])
        if not restore_progress:
            return
        self.start_phase(ckpt["phase"])
        if ckpt["spn"] is not None:
            assert self.spn is not None
            self.spn.load_state_dict(ckpt["spn"])
        self.opt_g.load_state_dict(ckpt["opt_g"])
        if ckpt["opt_d"] is not None and self.opt_d is not None:
            self.opt_d.load_state_dict(ckpt["opt_d"])
        self.balancer.weights = dict(ckpt["balancer_weights"])
        self.balancer.state = BalancerState.from_state_dict(ckpt["balancer"])
        c = ckpt["counters"]
        self.iteration, self.epoch, self.batch_in_epoch = c["iteration"], c["epoch"], c["batch_in_epoch"]
        torch.set_rng_state(ckpt["rng"])
        self.history = History(**ckpt["history"])

    @classmethod
    def from_checkpoint(cls, path: str | Path, out_dir: str | Path | None = None) -> "Trainer":
        path = Path(path)
        if not path.is_file():
            raise MissingArtifactError(f"checkpoint {path} not found")
        ckpt = torch.load(path, weights_only=False)
        cfg = ckpt["config"]
        extra = {k: v for k, v in cfg.items() if k not in ("generator", "discriminator", "train")}
        t = cls(
            GeneratorConfig(**cfg["generator"]),
            DiscriminatorConfig(**cfg["discriminator"]),
            TrainConfig(**cfg["train"]),
            out_dir or path.parent,
            extra,
        )
        t.load_state(ckpt)
        return t

    # -- logging -------------------------------------------------------------------

    def log_step(self, record: dict) -> None:
        record = {"phase": self.phase, "iteration": self.iteration, "epoch": self.epoch, **record}
        with open(self.out / "metrics.jsonl", "a") as f:
            f.write(json.dumps(record) + "\n")

    # -- states --------------------------------------------------------------------

    def random_states(self, batch: int, seed=None) -> StateBundle:
        return self.gen.state_init.sample(batch, self.tcfg.state_init, seed)

    def predicted_states(self, x_win: torch.Tensor, y: torch.Tensor) -> StateBundle:
        assert self.spn is not None
        with torch.no_grad():
            feats = self.disc.extract_features(x_win, y, self.phi)
        return self.spn.predict_states(feats)

    # -- steps ---------------------------------------------------------------------

    @staticmethod
    def _check_finite(losses: dict[str, torch.Tensor]) -> None:
        bad = [k for k, v in losses.items() if not torch.isfinite(v).all()]
        if bad:
            raise DivergenceError(f"non-finite loss: {', '.join(bad)}")

    def adversarial_step(self, x: torch.Tensor, y: torch.Tensor) -> dict:
        tc, ms = self.tcfg, self.tcfg.mode_seeking
        W = tc.window_size
        x_win = x[..., -W:]
        h0 = self.random_states(x.shape[0])
        y_hat = self.gen(x, self.phi, h0)

        self.disc.set_frozen("all", False)
        self.opt_d.zero_grad(set_to_none=True)
        loss_d = hinge_discriminator(self.disc(x_win, y, self.phi), self.disc(x_win, y_hat.detach(), self.phi))
        self._check_finite({"disc": loss_d})
        loss_d.backward()
        self.opt_d.step()

        self.disc.set_frozen("all", True)
        self.opt_g.zero_grad(set_to_none=True)
        losses = {
            "adv": hinge_generator(self.disc(x_win, y_hat, self.phi)),
            "spectral": self.mrstft(y, y_hat),
        }
        outputs = [y_hat]
        weights = {"adv": tc.lambda_adv, "spectral": tc.phase1_spectral_weight}
        if ms.enabled:
            y_hat2 = self.gen(x, self.phi, self.random_states(x.shape[0]))
            losses["ms"] = mode_seeking(self.mrstft(y_hat, y_hat2), ms.epsilon)
            outputs.append(y_hat2)
            weights["ms"] = ms.lambda_ms
        self._check_finite(losses)
        self.balancer.weights = weights
        norms = self.balancer.backward(losses, outputs)
        self.opt_g.step()
        return {"disc": loss_d.item(), **{k: v.item() for k, v in losses.items()},
                "grad_norm": norms, "ema": dict(self.balancer.state.ema)}

    def spn_step(self, x: torch.Tensor, y: torch.Tensor) -> dict:
        W = self.tcfg.window_size
        self.opt_g.zero_grad(set_to_none=True)
        h0 = self.predicted_states(x[..., -W:], y)
        loss = self.mrstft(y, self.gen(x, self.phi, h0))
        self._check_finite({"spectral": loss})
        loss.backward()
        self.opt_g.step()
        return {"spectral": loss.item()}

    def finetune_step(self, x: torch.Tensor, y: torch.Tensor) -> dict:
        tc, ms = self.tcfg, self.tcfg.mode_seeking
        W = tc.window_size
        self.opt_g.zero_grad(set_to_none=True)
        h0 = self.predicted_states(x[..., -W:], y)
        y_hat = self.gen(x, self.phi, h0)
        losses = {"spectral": self.mrstft(y, y_hat)}
        outputs = [y_hat]
        weights = {"spectral": tc.finetune_spectral_weight}
        if ms.enabled and x.shape[0] > 1:
            y_hat2 = self.gen(x, self.phi, h0.roll(1))
            losses["ms"] = mode_seeking(self.mrstft(y_hat, y_hat2), ms.epsilon)
            outputs.append(y_hat2)
            weights["ms"] = ms.lambda_ms
        self._check_finite(losses)
        self.balancer.weights = weights
        norms = self.balancer.backward(losses, outputs)
        self.opt_g.step()
        return {**{k: v.item() for k, v in losses.items()}, "grad_norm": norms}

    # -- evaluation ------------------------------------------------------------------

    def chirp_response(self, info: SplitInfo, take: int = 0) -> tuple[AudioBuffer, AudioBuffer]:
        """Reference and generated output on the chirp-train section of a take."""
        t = info.takes[take]
        n = info.chirp_samples
        x, y = t.x.samples[:n], t.y.samples[:n]
        if self.spn is not None:
            h0 = self.predicted_states(_tensor(x)[None, None], _tensor(y)[None, None])
        else:
            h0 = self.random_states(1, seed=self.tcfg.eval_seed)
        y_hat = render(self.gen, x, self.phi, h0.detach())
        fs = info.sample_rate
        return AudioBuffer(y, fs), AudioBuffer(y_hat, fs)

    def evaluate_mod(self, info: SplitInfo, take: int = 0) -> ModMetricResult:
        """Modulation loss on the chirp-train section of a validation take."""
        ref, test = self.chirp_response(info, take)
        return mod_metric(ref, test, info.chirp)

    def evaluate_wt(self, info: SplitInfo) -> dict:
        """Windowed-target MR-STFT: one state per non-overlapping window, errors averaged."""
        W = self.tcfg.window_size
        windows = list(make_windows(info, W, W, self.context))
        gen_seed = torch.Generator().manual_seed(self.tcfg.eval_seed)
        values = []
        with torch.no_grad():
            for i in range(0, len(windows), self.tcfg.eval_batch_size):
                chunk = windows[i : i + self.tcfg.eval_batch_size]
                x = _tensor(np.stack([c[0] for c in chunk]))[:, None]
                y = _tensor(np.stack([c[1] for c in chunk]))[:, None]
                if self.spn is not None:
                    h0 = self.predicted_states(x[..., -W:], y)
                else:
                    h0 = self.random_states(len(chunk), seed=gen_seed)
                y_hat = self.gen(x, self.phi, h0)
                values += [self.mrstft(y[b : b + 1], y_hat[b : b + 1]).item() for b in range(len(chunk))]
        return {"mrstft": float(np.mean(values)), "windows": len(values), "states": "spn" if self.spn else "random"}

    # -- loop --------------------------------------------------------------------------

    def _eval_due(self, per_epoch: int) -> bool:
        every = self.tcfg.eval_interval_iters or max(1, int(round(self.tcfg.eval_interval * per_epoch)))
        return self.iteration % every == 0

    def _evaluate(self, val: SplitInfo) -> dict:
        mod = self.evaluate_mod(val)
        rec = {"iteration": self.iteration, "epoch": self.epoch, "L_mod": mod.loss,
               "L_mod_p": mod.mod_p, "L_mod_w": mod.mod_w}
        if self.phase != "adversarial":
            rec["wt_mrstft"] = self.evaluate_wt(val)["mrstft"]
        return rec

    def _score(self, rec: dict) -> float:
        if self.phase == "adversarial":
            return rec["L_mod"]
        if self.phase == "finetune" and not rec["L_mod"] < MOD_LIMIT:
            return math.inf
        return rec["wt_mrstft"]

    def run(self, train: SplitInfo, val: SplitInfo, max_iters: int,
            on_eval: Callable[[dict], None] | None = None) -> Path:
        """Train the current phase to ``max_iters``; returns the best checkpoint path."""
        step = {"adversarial": self.adversarial_step, "spn-pretrain": self.spn_step,
                "finetune": self.finetune_step}[self.phase]
        per_epoch = batches_per_epoch(train, self.tcfg, self.context)
        if per_epoch < 1:
            raise ValueError("training split yields no complete batch")
        best_path = self.out / f"best_{self.phase}.pt"
        if self.iteration == 0:
            rec = self._evaluate(val)
            self._record(rec, best_path, on_eval)
        t0 = time.monotonic()
        stop = False
        while self.iteration < max_iters and not stop:
            for x, y in batches(train, self.tcfg, self.context, self.epoch, skip=self.batch_in_epoch):
                stats = step(x, y)
                self.iteration += 1
                self.batch_in_epoch += 1
                if self.batch_in_epoch == per_epoch:
                    self.epoch += 1
                    self.batch_in_epoch = 0
                self.log_step(stats)
                if self._eval_due(per_epoch) or self.iteration == max_iters:
                    rec = self._evaluate(val)
                    self._record(rec, best_path, on_eval)
                    self.save(f"last_{self.phase}.pt")
                    target = self.tcfg.early_stop_lmod
                    if self.phase == "adversarial" and target is not None and rec["L_mod"] < target:
                        stop = True
                if self.tcfg.max_seconds is not None and time.monotonic() - t0 > self.tcfg.max_seconds:
                    stop = True
                if stop or self.iteration >= max_iters:
                    break
            if self.batch_in_epoch and not stop and self.iteration < max_iters:
                # incomplete tail dropped
                self.epoch += 1
                self.batch_in_epoch = 0
        return best_path

    def _record(self, rec: dict, best_path: Path, on_eval) -> None:
        score = self._score(rec)
        rec["score"] = score
        best = self.history.best_value
        if best is None or score < best:
            self.history.best_value, self.history.best_iteration = score, self.iteration
            rec["best"] = True
        self.history.evaluations.append(rec)
        if rec.get("best"):
            self.save(best_path.name)
        log.info("%s it %d: %s", self.phase, self.iteration, {k: rec[k] for k in rec if k != "best"})
        if on_eval:
            on_eval(rec)


# ---------------------------------------------------------------------------
# phase entry points


def train_phase1(
    gcfg: GeneratorConfig, dcfg: DiscriminatorConfig, tcfg: TrainConfig,
    train: SplitInfo, val: SplitInfo, out_dir: str | Path, extra_config: dict | None = None,
) -> Path:
    trainer = Trainer(gcfg, dcfg, tcfg, out_dir, extra_config)
    return trainer.run(train, val, tcfg.phase1_max_iters)


def _phase2_trainer(checkpoint: str | Path, out_dir: str | Path | None,
                    train_overrides: dict | None = None) -> Trainer:
    path = Path(checkpoint)
    if not path.is_file():
        raise MissingArtifactError(f"checkpoint {path} not found")
    ckpt = torch.load(path, weights_only=False)
    cfg = ckpt["config"]
    extra = {k: v for k, v in cfg.items() if k not in ("generator", "discriminator", "train")}
    tcfg = TrainConfig(**{**cfg["train"], **(train_overrides or {})})
    t = Trainer(GeneratorConfig(**cfg["generator"]), DiscriminatorConfig(**cfg["discriminator"]),
                tcfg, out_dir or path.parent, extra)
    t.load_state(ckpt, restore_progress=False)
    if ckpt["spn"] is not None:
        t.spn = build_state_predictor(t.dcfg, t.gcfg.n_blocks, t.gcfg.lstm_hidden)
        t.spn.load_state_dict(ckpt["spn"])
    return t


def pretrain_spn(checkpoint: str | Path, train: SplitInfo, val: SplitInfo,
                 out_dir: str | Path | None = None, iters: int | None = None,
                 train_overrides: dict | None = None) -> Path:
    """Train only the SPN; generator and discriminator stay bit-identical.

    ``train_overrides`` replaces fields of the checkpoint's training config
    (seed, time budget, mode seeking and so on).
    """
    t = _phase2_trainer(checkpoint, out_dir, train_overrides)
    t.start_phase("spn-pretrain")
    frozen = parameter_hash(t.gen), parameter_hash(t.disc)
    best = t.run(train, val, iters if iters is not None else t.tcfg.spn_pretrain_iters)
    if (parameter_hash(t.gen), parameter_hash(t.disc)) != frozen:
        raise RuntimeError("frozen parameters changed during SPN pre-training")
    return best


def finetune(checkpoint: str | Path, train: SplitInfo, val: SplitInfo,
             out_dir: str | Path | None = None, iters: int | None = None,
             train_overrides: dict | None = None) -> Path:
    """Fine-tune generator and SPN on the spectral objective, FeatBlocks frozen."""
    t = _phase2_trainer(checkpoint, out_dir, train_overrides)
    t.start_phase("finetune")
    frozen = parameter_hash(t.disc.featblocks)
    best = t.run(train, val, iters if iters is not None else t.tcfg.finetune_max_iters)
    if parameter_hash(t.disc.featblocks) != frozen:
        raise RuntimeError("FeatBlocks changed during fine-tuning")
    return best


def load_for_eval(checkpoint: str | Path) -> Trainer:
    path = Path(checkpoint)
    if not path.is_file():
        raise MissingArtifactError(f"checkpoint {path} not found")
    return _phase2_trainer(path, path.parent)


def spn_win_rate(t: Trainer, info: SplitInfo, max_windows: int = 64) -> float:
    """Fraction of windows where SPN states beat seeded random states on MR-STFT."""
    if t.spn is None:
        raise ValueError("no SPN in this checkpoint")
    W = t.tcfg.window_size
    wins = 0
    windows = list(make_windows(info, W, W, t.context))[:max_windows]
    gen_seed = torch.Generator().manual_seed(t.tcfg.eval_seed)
    with torch.no_grad():
        for xw, yw in windows:
            x, y = _tensor(xw)[None, None], _tensor(yw)[None, None]
            pred = t.mrstft(y, t.gen(x, t.phi, t.predicted_states(x[..., -W:], y)))
            rand = t.mrstft(y, t.gen(x, t.phi, t.random_states(1, seed=gen_seed)))
            wins += int(pred < rand)
    return wins / len(windows)
