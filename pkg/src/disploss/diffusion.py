"""Linear-interpolant flow matching: noising, regression loss, combined objective.

Convention: ``x_t = (1 - t) x0 + t eps`` with velocity target ``eps - x0``,
so ``t = 0`` is data and ``t = 1`` is pure noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .losses import LossConfig, contrastive_loss, dispersive_loss
from .numerics import Tensor, as_tensor, square

POLICY_KINDS = ("single", "two_view_independent", "two_view_restricted")


@dataclass(frozen=True)
class NoisedBatch:
    x_t: np.ndarray
    t: np.ndarray
    target: np.ndarray
    x0: np.ndarray
    eps: np.ndarray


@dataclass(frozen=True)
class NoisePolicy:
    kind: str = "single"
    max_dt: float = 0.005

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"kind: expected one of {POLICY_KINDS}, got {self.kind!r}")
        if not self.max_dt >= 0:
            raise ValueError(f"max_dt: must be >= 0, got {self.max_dt}")

    @property
    def two_view(self) -> bool:
        return self.kind != "single"


def interpolate(x0: np.ndarray, eps: np.ndarray, t: np.ndarray) -> NoisedBatch:
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    tc = t[:, None]
    return NoisedBatch(x_t=(1.0 - tc) * x0 + tc * eps, t=t, target=eps - x0, x0=x0, eps=eps)


def recover_endpoints(x_t: np.ndarray, target: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Invert the interpolant: ``(x0, eps)`` from ``(x_t, eps - x0, t)``."""
    tc = np.asarray(t)[:, None]
    x0 = x_t - tc * target
    return x0, x0 + target


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def noise_batch(x0, rng, policy: NoisePolicy = NoisePolicy()) -> Union[NoisedBatch, tuple[NoisedBatch, NoisedBatch]]:
    """Draw times and noise for ``x0``; two-view policies return a pair of views.

    View 1 is drawn first and identically under every policy, so switching
    policy on a fixed seed only changes view 2.
    """
    gen = _rng(rng)
    x0 = np.asarray(x0, dtype=np.float64)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 contains non-finite values")
    n = x0.shape[0]
    t1 = gen.uniform(0.0, 1.0, size=n)
    view1 = interpolate(x0, gen.standard_normal(x0.shape), t1)
    if not policy.two_view:
        return view1
    if policy.kind == "two_view_restricted":
        t2 = np.clip(t1 + gen.uniform(-policy.max_dt, policy.max_dt, size=n), 0.0, 1.0)
    else:
        t2 = gen.uniform(0.0, 1.0, size=n)
    view2 = interpolate(x0, gen.standard_normal(x0.shape), t2)
    return view1, view2


def diffusion_loss(pred, target) -> Tensor:
    """Mean squared error over every element."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match target shape {target.shape}")
    return square(pred - target).mean()


@dataclass(frozen=True)
class CombinedLoss:
    total: Tensor
    diff: Tensor
    disp: Tensor


Reps = Union[Tensor, np.ndarray, Sequence[Tensor]]


def _as_list(Z: Reps) -> list:
    return list(Z) if isinstance(Z, (list, tuple)) else [Z]


def combined_loss(pred, Z: Reps, target, cfg: LossConfig) -> CombinedLoss:
    """``L_diff + lambda * L_disp``. Several tapped batches are summed.

    With ``lambda == 0`` the dispersive term is evaluated on detached
    representations for logging only, so the objective is the bare diffusion
    loss in both value and gradient.
    """
    diff = diffusion_loss(pred, target)
    if cfg.lam == 0:
        disp = sum(dispersive_loss(as_tensor(z).detach(), cfg).item() for z in _as_list(Z))
        return CombinedLoss(total=diff, diff=diff, disp=Tensor(disp))
    terms = [dispersive_loss(z, cfg) for z in _as_list(Z)]
    disp = terms[0]
    for extra in terms[1:]:
        disp = disp + extra
    return CombinedLoss(total=diff + cfg.lam * disp, diff=diff, disp=disp)


# forward(x_t, t) -> (prediction, representations)
Forward = Callable[[np.ndarray, np.ndarray], tuple]


def two_view_training_step(views: tuple[NoisedBatch, NoisedBatch], model: Forward, cfg: LossConfig) -> CombinedLoss:
    """Denoising loss on view 1, contrastive loss between the views' representations."""
    v1, v2 = views
    pred, Z1 = model(v1.x_t, v1.t)
    _, Z2 = model(v2.x_t, v2.t)
    diff = diffusion_loss(pred, v1.target)
    pairs = list(zip(_as_list(Z1), _as_list(Z2)))
    if cfg.lam == 0:
        value = sum(contrastive_loss(a.detach(), b.detach(), cfg).item() for a, b in pairs)
        return CombinedLoss(total=diff, diff=diff, disp=Tensor(value))
    con: Optional[Tensor] = None
    for a, b in pairs:
        term = contrastive_loss(a, b, cfg)
        con = term if con is None else con + term
    return CombinedLoss(total=diff + cfg.lam * con, diff=diff, disp=con)
