"""Command-line entry point: ``disploss {train,sample,eval,oracle,sweep,data}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..data import DATASETS
from ..model import CheckpointError, load_checkpoint, velocity_field
from ..sampler import SamplerConfig, SamplerError, sample
from .config import ConfigError, load_config
from .oracle import format_report, run_oracle
from .sweep import load_sweep, run_sweep
from .train import (
    OUTPUT_ENV,
    TrainingDiverged,
    evaluate_checkpoint,
    output_root,
    read_samples_csv,
    reference_draw,
    train,
    write_samples_csv,
)

SAMPLER_ALIASES = {"heun": "heun_ode", "sde": "euler_sde"}

EXIT_USAGE = 2
EXIT_DIVERGED = 3


def _sampler_config(args, base: SamplerConfig = SamplerConfig()) -> SamplerConfig:
    kind = SAMPLER_ALIASES[args.sampler] if args.sampler else base.kind
    steps = args.steps if args.steps is not None else base.steps
    return replace(base, kind=kind, steps=steps)


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    run_dir = Path(args.out) if args.out else output_root() / cfg.name
    log = train(cfg, run_dir)
    last = log.rows[-1]
    print(f"trained {cfg.steps} steps -> {run_dir}")
    print(f"final loss_total {last['loss_total']:.6f}  loss_diff {last['loss_diff']:.6f}  loss_disp {last['loss_disp']:.6f}")
    return 0


def cmd_sample(args) -> int:
    state, manifest = load_checkpoint(args.ckpt)
    base = SamplerConfig()
    run_sampler = manifest.get("run", {}).get("config", {}).get("sampler")
    if run_sampler:
        base = SamplerConfig(**run_sampler)
    cfg = _sampler_config(args, base)
    xs = sample(velocity_field(state), args.n, cfg, seed=args.seed)
    out = Path(args.out) if args.out else output_root() / f"samples_{cfg.kind}_seed{args.seed}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_samples_csv(out, xs)
    print(f"wrote {args.n} samples -> {out}")
    return 0


def cmd_eval(args) -> int:
    ref = read_samples_csv(args.ref)
    cfg = _sampler_config(args)
    report = evaluate_checkpoint(args.ckpt, ref, cfg, n=args.n, seed=args.seed, n_permutations=args.permutations)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    out = Path(args.out) if args.out else Path(args.ckpt).with_suffix(".eval.json")
    out.write_text(text)
    print(f"mmd2 {report['mmd2']:.6g} (threshold {report['mmd2_threshold']:.6g}) -> {out}")
    return 0


def cmd_oracle(args) -> int:
    results = run_oracle(quick=args.quick)
    print(format_report(results))
    return 0 if all(r.passed for r in results) else 1


def cmd_sweep(args) -> int:
    sweep = load_sweep(args.config)
    out = Path(args.out) if args.out else output_root() / sweep.name
    rows = run_sweep(sweep, out, workers=args.workers)
    bad = [r["run"] for r in rows if not r["finite"]]
    print(f"{len(rows)} runs, {len(rows) - len(bad)} finite -> {out / 'summary.csv'}")
    for name in bad:
        print(f"  non-finite: {name}")
    return 0 if not bad else 1


def cmd_data(args) -> int:
    xs = reference_draw(args.dataset, args.n, args.seed)
    write_samples_csv(args.out, xs)
    print(f"wrote {args.n} {args.dataset} points -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="disploss",
        description=f"Toy flow-matching trainer with dispersive regularization. Output root: ${OUTPUT_ENV} (default ./runs).",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="run directory (default: $OUTPUT_ROOT/<name>)")
    p.set_defaults(func=cmd_train)

    def sampler_args(p, default_sampler=None):
        p.add_argument("--sampler", choices=sorted(SAMPLER_ALIASES), default=default_sampler)
        p.add_argument("--steps", type=int, help="integration steps (default from config)")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sample", help="draw samples from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=int, required=True)
    sampler_args(p)
    p.add_argument("--out", help="CSV path")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="MMD^2 and representation probes against a reference CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--ref", required=True, help="CSV of reference points (see `data`)")
    p.add_argument("--n", type=int, help="number of samples (default: size of the reference)")
    p.add_argument("--permutations", type=int, default=200)
    sampler_args(p)
    p.add_argument("--out", help="JSON report path (default: next to the checkpoint)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="run the brute-force property suite")
    p.add_argument("--quick", action="store_true", help="3 gradient seeds instead of 10")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="train every point of a config grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--workers", type=int, help="parallel processes (default from sweep file)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("data", help="write a seeded draw of a toy dataset as CSV")
    p.add_argument("--dataset", choices=DATASETS, default="checkerboard")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except (SamplerError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
