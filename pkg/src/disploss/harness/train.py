"""Training loop, evaluation, and run-directory persistence."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from ..data import sample_dataset
from ..diffusion import combined_loss, noise_batch, two_view_training_step
from ..metrics import MmdConfig, block_norms, dispersion_stat, mmd2, mmd_permutation_test
from ..model import (
    TAP_POINT,
    DenoiserState,
    forward_with_taps,
    init_model,
    load_checkpoint,
    save_checkpoint,
    velocity_field,
)
from ..numerics import DomainError, grad
from ..optim import Adam
from ..sampler import SamplerConfig, sample
from .config import RunConfig, dump_config

log = logging.getLogger(__name__)

OUTPUT_ENV = "DISPLOSS_OUT"
MANIFEST = "manifest.json"
METRICS = "metrics.csv"
FINAL_CKPT = "model.ckpt"


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, run_dir: Optional[Path], last_checkpoint: Optional[Path], reason: str = "non-finite loss"):
        self.step = step
        self.run_dir = run_dir
        self.last_checkpoint = last_checkpoint
        where = f"; last checkpoint kept at {last_checkpoint}" if last_checkpoint else ""
        super().__init__(f"{reason} at step {step}{where}")


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def metrics_header(num_blocks: int) -> list[str]:
    return (["step", "loss_total", "loss_diff", "loss_disp"]
            + [f"norm_block_{b}" for b in range(1, num_blocks + 1)]
            + ["dispersion", "mmd2"])


def build_manifest(cfg: RunConfig) -> dict:
    return {
        "config": cfg.to_dict(),
        "code_version": __version__,
        "time_sampling": "uniform",
        "interpolant": "x_t = (1 - t) * x0 + t * eps, target = eps - x0",
        "tap_point": TAP_POINT,
        "objective": "contrastive" if cfg.policy.two_view else "dispersive",
        "multi_tap_reduction": "sum",
    }


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for init, data, noise and evaluation."""
    children = np.random.SeedSequence(seed).spawn(4)
    return dict(zip(("init", "data", "noise", "eval"), (np.random.default_rng(c) for c in children)))


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


@dataclass
class RunLog:
    manifest: dict
    rows: list[dict]
    state: DenoiserState
    run_dir: Optional[Path] = None
    checkpoints: list[Path] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=np.float64)


def _step_loss(state: DenoiserState, params: dict, views, cfg: RunConfig):
    taps = cfg.model.tap_blocks
    if cfg.policy.two_view:
        outputs = []

        def model(x_t, t):
            fr = forward_with_taps(state, x_t, t, params)
            outputs.append(fr)
            return fr.pred, [fr.taps[b] for b in taps]

        loss = two_view_training_step(views, model, cfg.loss)
        return outputs[0], loss
    fr = forward_with_taps(state, views.x_t, views.t, params)
    return fr, combined_loss(fr.pred, [fr.taps[b] for b in taps], views.target, cfg.loss)


def train(cfg: RunConfig, run_dir=None) -> RunLog:
    """Train from scratch. With ``run_dir`` the manifest, metrics CSV and checkpoints are written there."""
    run_dir = Path(run_dir) if run_dir is not None else None
    streams = seed_streams(cfg.seed)
    init_seed = int(streams["init"].integers(2**63 - 1))
    state = init_model(cfg.model, init_seed)
    opt = Adam(cfg.optimizer)
    taps = cfg.model.tap_blocks
    header = metrics_header(cfg.model.num_blocks)
    manifest = build_manifest(cfg)
    rows: list[dict] = []
    checkpoints: list[Path] = []

    writer = fh = None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        fh = open(run_dir / METRICS, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)

    def write_row(row: dict):
        writer.writerow([row["step"]] + [_fmt(row[k]) for k in header[1:]])
        fh.flush()

    def checkpoint(path: Path):
        save_checkpoint(path, state, {"run": manifest})
        checkpoints.append(path)

    try:
        for step in range(cfg.steps):
            x0 = sample_dataset(cfg.dataset, cfg.batch_size, streams["data"])
            views = noise_batch(x0, streams["noise"], cfg.policy)
            params = state.parameters()
            try:
                fr, loss = _step_loss(state, params, views, cfg)
                total = loss.total.item()
            except DomainError:
                total = math.nan
            if not math.isfinite(total):
                last = checkpoints[-1] if checkpoints else None
                raise TrainingDiverged(step, run_dir, last)

            if step % cfg.eval_every == 0 or step == cfg.steps - 1:
                norms = block_norms(fr.blocks)
                row = {"step": step, "loss_total": total, "loss_diff": loss.diff.item(),
                       "loss_disp": loss.disp.item(), "dispersion": dispersion_stat(fr.blocks[taps[0] - 1]) if taps else None,
                       "mmd2": None}
                row.update({f"norm_block_{b}": v for b, v in norms.items()})
                rows.append(row)
                if writer is not None and step != cfg.steps - 1:
                    write_row(row)
                log.info("step %d total %.5f diff %.5f disp %.5f", step, total, row["loss_diff"], row["loss_disp"])

            grads = grad(loss.total, params.values())
            state = state.replace(opt.step(state.weights, dict(zip(params, grads))), step=step + 1)
            if not all(np.all(np.isfinite(w)) for w in state.weights.values()):
                last = checkpoints[-1] if checkpoints else None
                raise TrainingDiverged(step, run_dir, last, "non-finite weights after the update")
            if run_dir is not None and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
                checkpoint(run_dir / "checkpoints" / f"step_{step + 1:07d}.ckpt")
        # the final row carries MMD^2 of the trained weights
        if cfg.mmd_samples:
            rows[-1]["mmd2"] = final_mmd2(state, cfg, streams["eval"])
        if writer is not None:
            write_row(rows[-1])
    finally:
        if fh is not None:
            fh.close()

    if run_dir is not None:
        checkpoint(run_dir / FINAL_CKPT)
    return RunLog(manifest=manifest, rows=rows, state=state, run_dir=run_dir, checkpoints=checkpoints)


def final_mmd2(state: DenoiserState, cfg: RunConfig, rng: np.random.Generator) -> float:
    reference = sample_dataset(cfg.dataset, cfg.mmd_samples, rng)
    seed = int(rng.integers(2**63 - 1))
    return mmd2(sample(velocity_field(state), cfg.mmd_samples, cfg.sampler, seed=seed), reference)


def train_from_config(path, out_dir=None) -> RunLog:
    from .config import load_config

    cfg = load_config(path)
    run_dir = Path(out_dir) if out_dir else output_root() / cfg.name
    return train(cfg, run_dir)


# ---------------------------------------------------------------------------
# evaluation

def heldout_probe(state: DenoiserState, x0: np.ndarray, seed: int) -> dict:
    """Per-block norms and tap dispersion on a noised held-out batch."""
    views = noise_batch(x0, np.random.default_rng(seed))
    fr = forward_with_taps(state, views.x_t, views.t)
    taps = state.config.tap_blocks
    out = {"per_block_norms": {str(b): v for b, v in block_norms(fr.blocks).items()}}
    if taps:
        Z = fr.blocks[taps[0] - 1]
        out["dispersion"] = dispersion_stat(Z)
    return out


def evaluate(state: DenoiserState, reference: np.ndarray, sampler: SamplerConfig = SamplerConfig(),
             n: Optional[int] = None, seed: int = 0, n_permutations: int = 200,
             mmd: MmdConfig = MmdConfig()) -> dict:
    """Sample, compare with ``reference`` by MMD^2, and probe representations."""
    reference = np.asarray(reference, dtype=np.float64)
    n = reference.shape[0] if n is None else n
    samples = sample(velocity_field(state), n, sampler, seed=seed)
    test = mmd_permutation_test(samples, reference, mmd, n_permutations=n_permutations, seed=seed)
    report = {
        "mmd2": test.statistic,
        "mmd2_threshold": test.threshold,
        "mmd2_p_value": test.p_value,
        "n_samples": n,
        "seed": seed,
        "sampler": {"kind": sampler.kind, "steps": sampler.steps, "last_step_size": sampler.last_step_size,
                    "diffusion_scale": sampler.diffusion_scale},
    }
    report.update(heldout_probe(state, reference, seed + 1))
    return report


def evaluate_checkpoint(ckpt, reference: np.ndarray, sampler: SamplerConfig = SamplerConfig(), n=None, seed: int = 0,
                        n_permutations: int = 200) -> dict:
    state, manifest = load_checkpoint(ckpt)
    report = evaluate(state, reference, sampler, n=n, seed=seed, n_permutations=n_permutations)
    report["config_echo"] = manifest
    return report


def reference_draw(dataset: str, n: int, seed: int) -> np.ndarray:
    return sample_dataset(dataset, n, np.random.default_rng(seed))


def write_samples_csv(path, samples: np.ndarray) -> None:
    samples = np.asarray(samples, dtype=np.float64)
    dim = samples.shape[1] if samples.ndim == 2 else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{k}" for k in range(dim)])
        for row in samples:
            w.writerow([repr(float(v)) for v in row])


def read_samples_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file, expected a header row")
    data = [[float(v) for v in r] for r in rows[1:] if r]
    return np.array(data, dtype=np.float64).reshape(len(data), len(rows[0]))


__all__ = [
    "FINAL_CKPT", "MANIFEST", "METRICS", "OUTPUT_ENV", "RunLog", "TrainingDiverged", "build_manifest",
    "dump_config", "evaluate", "evaluate_checkpoint", "heldout_probe", "metrics_header", "output_root",
    "read_samples_csv", "reference_draw", "seed_streams", "train", "train_from_config", "write_samples_csv",
]
