"""Samplers for a velocity field ``v(x, t)`` trained on ``x_t = (1 - t) x0 + t eps``.

Both samplers start from ``x ~ N(0, I)`` at ``t = 1`` and integrate towards
``t = 0`` on a linear time grid.

The stochastic sampler uses the reverse-time SDE that shares marginals with
the probability-flow ODE ``dx/dt = v``::

    dx = [v(x, t) - g(t)^2 / 2 * s(x, t)] dt + g(t) dW,      dt < 0
    s(x, t) = -(x + (1 - t) v(x, t)) / t                      (score of p_t)
    g(t)^2  = 2 * diffusion_scale * t

``g^2 s`` stays bounded as ``t -> 0``. Euler-Maruyama runs from ``t = 1`` to
``t = last_step_size`` in ``steps`` intervals, followed by one noise-free
Euler step of size ``last_step_size`` to ``t = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]

SAMPLER_KINDS = ("heun_ode", "euler_sde")


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    kind: str = "heun_ode"
    steps: int = 250
    last_step_size: float = 0.04
    t_schedule: str = "linear"
    diffusion_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"kind: expected one of {SAMPLER_KINDS}, got {self.kind!r}")
        if int(self.steps) < 1:
            raise ValueError(f"steps: must be >= 1, got {self.steps}")
        if self.t_schedule != "linear":
            raise ValueError(f"t_schedule: only 'linear' is supported, got {self.t_schedule!r}")
        if not self.diffusion_scale >= 0:
            raise ValueError(f"diffusion_scale: must be >= 0, got {self.diffusion_scale}")
        if self.kind == "euler_sde" and not 0 < self.last_step_size < 1:
            raise ValueError(f"last_step_size: must lie in (0, 1), got {self.last_step_size}")


def ode_time_grid(steps: int) -> np.ndarray:
    return np.linspace(1.0, 0.0, steps + 1)


def sde_time_grid(steps: int, last_step_size: float) -> np.ndarray:
    """``steps`` stochastic intervals down to ``last_step_size``, then the final hop to 0."""
    return np.append(np.linspace(1.0, last_step_size, steps + 1), 0.0)


def _check(x: np.ndarray, k: int, t: float) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise SamplerError(f"non-finite state after step {k} (t = {t:.6g})")
    return x


def _tvec(t: float, n: int) -> np.ndarray:
    return np.full(n, t)


def heun_integrate(field: Field, x: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Heun predictor-corrector along ``grid``."""
    x = np.array(x, dtype=np.float64)
    n = x.shape[0]
    for k in range(len(grid) - 1):
        t, t_next = grid[k], grid[k + 1]
        h = t_next - t
        v = field(x, _tvec(t, n))
        x_pred = x + h * v
        v_next = field(x_pred, _tvec(t_next, n))
        x = _check(x + 0.5 * h * (v + v_next), k, t_next)
    return x


def euler_integrate(field: Field, x: np.ndarray, grid: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    n = x.shape[0]
    for k in range(len(grid) - 1):
        t, t_next = grid[k], grid[k + 1]
        x = _check(x + (t_next - t) * field(x, _tvec(t, n)), k, t_next)
    return x


def score_from_velocity(x: np.ndarray, v: np.ndarray, t: float) -> np.ndarray:
    return -(x + (1.0 - t) * v) / t


def sde_drift(x: np.ndarray, v: np.ndarray, t: float, diffusion_scale: float) -> np.ndarray:
    """Reverse-time drift, to be multiplied by a negative step."""
    g2 = 2.0 * diffusion_scale * t
    return v - 0.5 * g2 * score_from_velocity(x, v, t)


def euler_maruyama_integrate(field: Field, x: np.ndarray, cfg: SamplerConfig, rng: np.random.Generator) -> np.ndarray:
    grid = sde_time_grid(int(cfg.steps), cfg.last_step_size)
    x = np.array(x, dtype=np.float64)
    n = x.shape[0]
    for k in range(len(grid) - 2):
        t, t_next = grid[k], grid[k + 1]
        h = t_next - t
        noise = rng.standard_normal(x.shape)
        g = np.sqrt(2.0 * cfg.diffusion_scale * t)
        drift = sde_drift(x, field(x, _tvec(t, n)), t, cfg.diffusion_scale)
        x = _check(x + h * drift + g * np.sqrt(-h) * noise, k, t_next)
    t = grid[-2]
    drift = sde_drift(x, field(x, _tvec(t, n)), t, cfg.diffusion_scale)
    return _check(x + (grid[-1] - t) * drift, len(grid) - 2, 0.0)


def _dim(field, dim):
    return dim if dim is not None else getattr(field, "dim", 2)


def sample_heun(field: Field, n: int, cfg: SamplerConfig = SamplerConfig(), seed: int = 0, dim=None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x1 = rng.standard_normal((n, _dim(field, dim)))
    if n == 0:
        return x1
    return heun_integrate(field, x1, ode_time_grid(int(cfg.steps)))


def sample_euler_sde(field: Field, n: int, cfg: SamplerConfig = SamplerConfig(kind="euler_sde"), seed: int = 0, dim=None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x1 = rng.standard_normal((n, _dim(field, dim)))
    if n == 0:
        return x1
    return euler_maruyama_integrate(field, x1, cfg, rng)


def sample(field: Field, n: int, cfg: SamplerConfig, seed: int = 0, dim=None) -> np.ndarray:
    if cfg.kind == "heun_ode":
        return sample_heun(field, n, cfg, seed, dim)
    return sample_euler_sde(field, n, cfg, seed, dim)
