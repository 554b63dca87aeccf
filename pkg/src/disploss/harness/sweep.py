"""Grid sweeps over dotted config overrides, one isolated run directory per point."""

from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .config import ConfigError, RunConfig
from .train import TrainingDiverged, train


@dataclass(frozen=True)
class SweepConfig:
    base: RunConfig
    grid: dict[str, list]
    name: str = "sweep"
    workers: int = 1

    def points(self) -> list[dict[str, Any]]:
        keys = list(self.grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.grid[k] for k in keys))]


def load_sweep(path) -> SweepConfig:
    """``{"base": <run config>, "grid": {"loss.lambda": [...], ...}, "name": ..., "workers": ...}``"""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as err:
        raise ConfigError(f"sweep file not found: {path}") from err
    except ValueError as err:
        raise ConfigError(f"{path}: not valid JSON ({err})") from err
    unknown = sorted(set(raw) - {"base", "grid", "name", "workers"})
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown field")
    grid = raw.get("grid")
    if not isinstance(grid, dict) or not grid:
        raise ConfigError("grid: expected a non-empty object of dotted path -> list of values")
    for key, values in grid.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"grid.{key}: expected a non-empty list")
    base = RunConfig.from_dict(raw.get("base", {}))
    workers = raw.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError(f"workers: must be a positive integer, got {workers!r}")
    sweep = SweepConfig(base=base, grid=grid, name=str(raw.get("name", "sweep")), workers=workers)
    for point in sweep.points():
        base.with_overrides(point)  # fail before any run starts
    return sweep


def run_name(point: dict[str, Any]) -> str:
    return "__".join(f"{k}={v}" for k, v in point.items())


def _run_one(args: tuple[RunConfig, str, Path]) -> dict:
    cfg, name, run_dir = args
    row = {"run": name, "status": "ok", "diverged_at": ""}
    try:
        log = train(cfg, run_dir)
        last = log.rows[-1]
        row.update({k: last[k] for k in ("step", "loss_total", "loss_diff", "loss_disp")})
    except TrainingDiverged as err:
        row.update({"status": "diverged", "diverged_at": err.step})
    return row


def run_sweep(sweep: SweepConfig, out_dir, workers: Optional[int] = None) -> list[dict]:
    """Train every grid point and write ``summary.csv``. Rows come back in grid order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    points = sweep.points()
    jobs = []
    for point in points:
        name = run_name(point)
        cfg = sweep.base.with_overrides({**point, "name": name})
        jobs.append((cfg, name, out_dir / name))
    workers = sweep.workers if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one, jobs))
    else:
        rows = [_run_one(job) for job in jobs]
    for point, row in zip(points, rows):
        row.update(point)
        total = row.get("loss_total")
        row["finite"] = total is not None and math.isfinite(total)

    header = ["run", *sweep.grid, "status", "diverged_at", "step", "loss_total", "loss_diff", "loss_disp", "finite"]
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(row[k]) if isinstance(row.get(k), float) else row.get(k, "") for k in header])
    return rows


__all__ = ["SweepConfig", "load_sweep", "run_name", "run_sweep"]
