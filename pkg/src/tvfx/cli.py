"""Command-line entry point: ``tvfx {config,dataset,train,eval,render}``.

Any config key can be overridden with ``--section.key value``. Exit codes:
0 success, 2 configuration error, 3 numerical divergence, 4 missing
prerequisite artifact.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .dataset import DatasetError, build_dataset, load_split
from .trainer import (
    PHASES,
    DivergenceError,
    MissingArtifactError,
    Trainer,
    finetune,
    load_for_eval,
    pretrain_spn,
)

log = logging.getLogger("tvfx")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_MISSING = 0, 2, 3, 4
REPORT_SCHEMA_VERSION = 1

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "source", "wt", "modulation"],
    "properties": {
        "schema_version": {"const": REPORT_SCHEMA_VERSION},
        "source": {"type": "string"},
        "wt": {
            "type": "object",
            "required": ["mrstft", "windows", "states"],
            "properties": {
                "mrstft": {"type": "number", "minimum": 0},
                "windows": {"type": "integer", "minimum": 0},
                "states": {"enum": ["spn", "random", "reference"]},
            },
        },
        "modulation": {
            "type": "object",
            "required": ["L_mod", "L_mod_p", "L_mod_w"],
            "properties": {
                "L_mod": {"type": "number", "minimum": 0},
                "L_mod_p": {"type": "number", "minimum": 0},
                "L_mod_w": {"type": "number", "minimum": 0},
                "spectra": {"type": "object"},
            },
        },
    },
}


def validate_report(report: dict) -> None:
    import jsonschema

    jsonschema.validate(report, REPORT_SCHEMA)


# ---------------------------------------------------------------------------
# argument handling


def split_overrides(argv: list[str]) -> tuple[list[str], list[tuple[str, str]]]:
    """Separate ``--section.key value`` (or ``--section.key=value``) pairs from other arguments."""
    rest, pairs = [], []
    it = iter(argv)
    for tok in it:
        key = tok[2:].split("=", 1)[0]
        if not (tok.startswith("--") and "." in key):
            rest.append(tok)
            continue
        if "=" in tok:
            value = tok.split("=", 1)[1]
        else:
            value = next(it, None)
            if value is None:
                raise cfgmod.ConfigError(f"override {tok} needs a value")
        pairs.append((key, value))
    return rest, pairs


def _load_config(args, overrides: list[tuple[str, str]]) -> cfgmod.ExperimentConfig:
    if args.config:
        import yaml

        try:
            data = yaml.safe_load(Path(args.config).read_text()) or {}
        except FileNotFoundError:
            raise cfgmod.ConfigError(f"config file {args.config} not found") from None
    else:
        data = {"profile": args.profile}
    data = cfgmod.apply_overrides(data, overrides)
    return cfgmod.from_dict(data)


def _data_dir(cfg: cfgmod.ExperimentConfig) -> Path:
    return cfg.output_path() / "data"


# ---------------------------------------------------------------------------
# commands


def cmd_config(cfg: cfgmod.ExperimentConfig, args) -> int:
    text = cfgmod.dump(cfg)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_dataset(cfg: cfgmod.ExperimentConfig, args) -> int:
    root = _data_dir(cfg)
    params = cfg.phaser.params()
    for split in ("train", "validation"):
        build_dataset(cfg.dataset, params, split, root)
    cfgmod.save(cfg, root / "config.yaml")
    print(root)
    return EXIT_OK


def _phase_dir(cfg: cfgmod.ExperimentConfig, phase: str) -> Path:
    return cfg.output_path() / phase


def _run_phase(cfg: cfgmod.ExperimentConfig, phase: str, resume: bool) -> Path:
    root = _data_dir(cfg)
    train, val = load_split(root, "train"), load_split(root, "validation")
    out = _phase_dir(cfg, phase)
    extra = {"experiment": cfg.to_dict()}
    last = out / f"last_{phase}.pt"
    if resume:
        if not last.is_file():
            raise MissingArtifactError(f"nothing to resume: {last} not found")
        t = Trainer.from_checkpoint(last, out)
        budget = {"adversarial": cfg.train.phase1_max_iters, "spn-pretrain": cfg.train.spn_pretrain_iters,
                  "finetune": cfg.train.finetune_max_iters}[phase]
        return t.run(train, val, budget)
    cfgmod.save(cfg, out / "config.yaml")
    if phase == "adversarial":
        t = Trainer(cfg.generator, cfg.discriminator, cfg.train, out, extra)
        return t.run(train, val, cfg.train.phase1_max_iters)
    phase1 = _phase_dir(cfg, "adversarial") / "best_adversarial.pt"
    if phase == "spn-pretrain":
        return pretrain_spn(phase1, train, val, out, cfg.train.spn_pretrain_iters)
    start = _phase_dir(cfg, "spn-pretrain") / "best_spn-pretrain.pt" if cfg.train.spn_pretrain else phase1
    if not start.is_file():
        raise MissingArtifactError(f"fine-tuning needs {start}; run the earlier phase first")
    return finetune(start, train, val, out, cfg.train.finetune_max_iters)


def cmd_train(cfg: cfgmod.ExperimentConfig, args) -> int:
    if args.grid:
        runs = cfgmod.expand_grid(cfg)
        manifest = cfg.output_path() / "grid" / "grid.json"
        manifest.parent.mkdir(parents=True, exist_ok=True)
        entries = []
        for name, run_cfg in runs:
            path = cfgmod.save(run_cfg, run_cfg.output_path() / "config.yaml")
            entries.append({"name": name, "config": str(path)})
        manifest.write_text(json.dumps(entries, indent=2))
        if args.plan_only:
            print(manifest)
            return EXIT_OK
        for name, run_cfg in runs:
            # every grid run reads the shared dataset
            run_cfg.output_dir = str(run_cfg.output_path())
            data = _data_dir(run_cfg)
            if not data.exists():
                data.symlink_to(_data_dir(cfg).resolve(), target_is_directory=True)
            print(name, _run_phase(run_cfg, args.phase, args.resume))
        return EXIT_OK
    print(_run_phase(cfg, args.phase, args.resume))
    return EXIT_OK


def evaluate_checkpoint(checkpoint: str | Path, data_dir: str | Path) -> dict:
    t = load_for_eval(checkpoint)
    val = load_split(data_dir, "validation")
    mod = t.evaluate_mod(val)
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "source": str(checkpoint),
        "wt": t.evaluate_wt(val),
        "modulation": mod.to_dict(),
    }
    validate_report(report)
    return report


def evaluate_reference(data_dir: str | Path) -> dict:
    """Report for the reference compared with itself; every loss is zero."""
    from .dsp import AudioBuffer
    from .losses import mrstft
    from .modmetric import mod_metric
    import torch

    val = load_split(data_dir, "validation")
    take = val.takes[0]
    n = val.chirp_samples
    ref = AudioBuffer(take.y.samples[:n], val.sample_rate)
    y = torch.as_tensor(take.y.samples)[None]
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "source": "reference",
        "wt": {"mrstft": float(mrstft(y, y)), "windows": 1, "states": "reference"},
        "modulation": mod_metric(ref, ref, val.chirp).to_dict(),
    }
    validate_report(report)
    return report


def cmd_eval(args) -> int:
    if args.checkpoint:
        report = evaluate_checkpoint(args.checkpoint, args.data)
    else:
        report = evaluate_reference(args.data)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(json.dumps({k: v for k, v in report.items() if k != "modulation"} |
                         {"modulation": {k: v for k, v in report["modulation"].items() if k != "spectra"}}))
    return EXIT_OK


def cmd_render(args) -> int:
    from . import plots
    from .dsp import AudioBuffer, ChirpSpec
    from .wav import read_wav

    views = args.views.split(",")
    unknown = sorted(set(views) - set(plots.VIEWS))
    if unknown:
        raise cfgmod.ConfigError(f"unknown view(s) {unknown}; expected {plots.VIEWS}")
    if args.checkpoint:
        t = load_for_eval(args.checkpoint)
        val = load_split(args.data, "validation")
        ref, test = t.chirp_response(val)
        chirp = val.chirp
        metrics = t.out / "metrics.jsonl"
    else:
        ref, test = read_wav(args.reference), read_wav(args.test)
        chirp = ChirpSpec(args.f0, ref.sample_rate / 2, args.chirp_duration)
        metrics = Path(args.metrics) if args.metrics else None
    written = plots.render_views(ref, test, chirp, Path(args.out), views, metrics)
    for p in written:
        print(p)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tvfx", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("config", nargs="?", help="YAML experiment config")
        sp.add_argument("--profile", default="desk-scale", choices=cfgmod.PROFILES)

    sp = sub.add_parser("config", help="print or write a resolved configuration")
    with_config(sp)
    sp.add_argument("--out")

    sp = sub.add_parser("dataset", help="render train and validation takes")
    with_config(sp)

    sp = sub.add_parser("train", help="run one training phase")
    with_config(sp)
    sp.add_argument("--phase", choices=PHASES, default="adversarial")
    sp.add_argument("--resume", action="store_true")
    sp.add_argument("--grid", action="store_true", help="expand the mode-seeking grid into runs")
    sp.add_argument("--plan-only", action="store_true", help="with --grid: write run configs only")

    sp = sub.add_parser("eval", help="windowed-target MR-STFT and modulation report")
    sp.add_argument("--checkpoint", help="omit to score the reference against itself")
    sp.add_argument("--data", required=True, help="dataset directory")
    sp.add_argument("--out")

    sp = sub.add_parser("render", help="plot spectrograms, modulation maps and loss curves")
    sp.add_argument("--checkpoint")
    sp.add_argument("--data")
    sp.add_argument("--reference", help="reference WAV (with --test)")
    sp.add_argument("--test", help="test WAV (with --reference)")
    sp.add_argument("--metrics", help="metrics.jsonl for the loss-curve view")
    sp.add_argument("--f0", type=float, default=20.0)
    sp.add_argument("--chirp-duration", type=float, default=1 / 33)
    sp.add_argument("--views", default="spectrogram,frequency-frequency,modulation,loss-curves")
    sp.add_argument("--out", required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        rest, overrides = split_overrides(argv)
    except cfgmod.ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    args = parser.parse_args(rest)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        if args.command in ("eval", "render"):
            if overrides:
                raise cfgmod.ConfigError(f"{args.command} takes no config overrides")
            if args.command == "render" and not args.checkpoint and not (args.reference and args.test):
                raise cfgmod.ConfigError("render needs --checkpoint/--data or --reference/--test")
            if args.command == "render" and args.checkpoint and not args.data:
                raise cfgmod.ConfigError("render --checkpoint needs --data")
            return cmd_eval(args) if args.command == "eval" else cmd_render(args)
        cfg = _load_config(args, overrides)
        return {"config": cmd_config, "dataset": cmd_dataset, "train": cmd_train}[args.command](cfg, args)
    except cfgmod.ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (MissingArtifactError, DatasetError) as e:
        print(f"missing artifact: {e}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
