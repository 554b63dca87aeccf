"""Dispersive losses and their contrastive counterparts.

All losses take an ``N x D`` batch of flattened representations (one row per
sample) and return a scalar :class:`~disploss.numerics.Tensor` that is
differentiable with respect to its inputs.

=========  ==============================================  ==================================
variant    contrastive                                     dispersive
=========  ==============================================  ==================================
InfoNCE    ``D(z_i,z_i+)/tau + log sum_j exp(-D_ij/tau)``  ``log E_ij exp(-D_ij/tau)``
Hinge      ``D(z_i,z_i+)^2 + E_j max(0, eps - D_ij)^2``    ``E_ij max(0, eps - D_ij)^2``
Cov.       ``(1 - C_mm)^2 + w sum_{m!=n} C_mn^2``          ``sum_mn C_mn^2``
=========  ==============================================  ==================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import (
    DomainError,
    Tensor,
    as_tensor,
    logsumexp,
    maximum,
    pairwise_dist,
    pairwise_sqdist,
    sqrt,
    square,
    tsum,
)

VARIANTS = ("infonce_l2", "infonce_cosine", "hinge", "covariance")
DISSIM_MODES = ("squared_l2", "neg_cosine", "l2")

_MIN_ROW_NORM = 1e-12
_MIN_COL_VAR = 1e-10


class DegenerateBatchError(ValueError):
    """A batch the loss is undefined on: zero rows for cosine, constant columns for covariance."""


@dataclass(frozen=True)
class LossConfig:
    variant: str = "infonce_l2"
    lam: float = 0.5
    tau: float = 0.5
    epsilon: float = 1.0
    w: float = 1.0
    include_diagonal: bool = True
    # added to the column variance before the square root; 0 keeps diag(Cov) == 1 exactly
    cov_eps: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant: expected one of {VARIANTS}, got {self.variant!r}")
        if not self.lam >= 0:
            raise ValueError(f"lambda: must be >= 0, got {self.lam}")
        if not self.tau > 0:
            raise ValueError(f"tau: must be > 0, got {self.tau}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon: must be > 0, got {self.epsilon}")
        if not self.w >= 0:
            raise ValueError(f"w: must be >= 0, got {self.w}")
        if not self.cov_eps >= 0:
            raise ValueError(f"cov_eps: must be >= 0, got {self.cov_eps}")

    @property
    def dissim(self) -> str:
        return "neg_cosine" if self.variant == "infonce_cosine" else "squared_l2"


def _batch(Z, name: str = "Z", min_rows: int = 2) -> Tensor:
    Z = as_tensor(Z)
    if Z.ndim != 2:
        raise ValueError(f"{name}: expected an N x D matrix, got shape {Z.shape}")
    if Z.shape[0] < min_rows:
        raise ValueError(f"{name}: need at least {min_rows} rows, got {Z.shape[0]}")
    if not np.all(np.isfinite(Z.data)):
        raise DomainError(f"{name}: contains non-finite entries")
    return Z


def _pair(Z, Zpos) -> tuple[Tensor, Tensor]:
    Z, Zpos = _batch(Z), _batch(Zpos, "Zpos")
    if Z.shape != Zpos.shape:
        raise ValueError(f"views differ in shape: {Z.shape} vs {Zpos.shape}")
    return Z, Zpos


def _offdiag_mask(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


def normalize_rows(Z: Tensor, name: str = "Z") -> Tensor:
    norms2 = np.einsum("ij,ij->i", Z.data, Z.data)
    small = np.flatnonzero(norms2 <= _MIN_ROW_NORM**2)
    if small.size:
        raise DegenerateBatchError(f"{name}: row {small[0]} has norm <= {_MIN_ROW_NORM}, cosine is undefined")
    norms = sqrt(tsum(square(Z), axis=1))
    return (Z.T / norms).T


def pairwise_dissim(Z, mode: str = "squared_l2") -> Tensor:
    """``M[i, j] = D(z_i, z_j)`` for the chosen dissimilarity."""
    Z = _batch(Z, min_rows=1)
    if mode == "squared_l2":
        return pairwise_sqdist(Z)
    if mode == "l2":
        return pairwise_dist(Z)
    if mode == "neg_cosine":
        Zn = normalize_rows(Z)
        return -(Zn @ Zn.T)
    raise ValueError(f"mode: expected one of {DISSIM_MODES}, got {mode!r}")


def rowwise_dissim(Z: Tensor, Zpos: Tensor, mode: str) -> Tensor:
    """``D(z_i, z_i+)`` for each row, shape ``(N,)``."""
    if mode == "squared_l2":
        return tsum(square(Z - Zpos), axis=1)
    if mode == "neg_cosine":
        return -tsum(normalize_rows(Z) * normalize_rows(Zpos, "Zpos"), axis=1)
    raise ValueError(f"rowwise dissimilarity not defined for mode {mode!r}")


def _require_infonce(cfg: LossConfig):
    if cfg.variant not in ("infonce_l2", "infonce_cosine"):
        raise ValueError(f"InfoNCE loss called with variant {cfg.variant!r}")


def dispersive_infonce_batch(Z, cfg: LossConfig = LossConfig()) -> Tensor:
    """``log mean_{i,j} exp(-D(z_i, z_j) / tau)`` over ordered pairs."""
    _require_infonce(cfg)
    Z = _batch(Z)
    n = Z.shape[0]
    logits = pairwise_dissim(Z, cfg.dissim) * (-1.0 / cfg.tau)
    if cfg.include_diagonal:
        return logsumexp(logits) - math.log(n * n)
    return logsumexp(logits[_offdiag_mask(n)]) - math.log(n * (n - 1))


def dispersive_infonce_per_sample(Z, i: int, cfg: LossConfig = LossConfig()) -> Tensor:
    """``log mean_j exp(-D(z_i, z_j) / tau)`` for reference sample ``i``."""
    _require_infonce(cfg)
    Z = _batch(Z)
    n = Z.shape[0]
    if not 0 <= i < n:
        raise IndexError(f"sample index {i} out of range for batch of {n}")
    row = (pairwise_dissim(Z, cfg.dissim) * (-1.0 / cfg.tau))[i]
    if cfg.include_diagonal:
        return logsumexp(row) - math.log(n)
    return logsumexp(row[np.arange(n) != i]) - math.log(n - 1)


def dispersive_hinge(Z, cfg: LossConfig = LossConfig(variant="hinge")) -> Tensor:
    """Mean over ordered pairs ``i != j`` of ``max(0, eps - ||z_i - z_j||)^2``."""
    Z = _batch(Z)
    gap = maximum(cfg.epsilon - pairwise_dist(Z), 0.0)
    return square(gap)[_offdiag_mask(Z.shape[0])].mean()


def standardize_columns(Z: Tensor, eps: float = 0.0, view: str = "Z") -> Tensor:
    """Zero-mean, unit-variance columns (population variance over the batch)."""
    centered = Z - Z.mean(axis=0)
    var = square(centered).mean(axis=0)
    flat = np.flatnonzero(var.data <= _MIN_COL_VAR)
    if flat.size:
        raise DegenerateBatchError(
            f"{view}: column {flat[0]} has variance {var.data[flat[0]]:.3g} <= {_MIN_COL_VAR}"
        )
    return centered / sqrt(var + eps)


def dispersive_covariance(Z, cfg: LossConfig = LossConfig(variant="covariance")) -> Tensor:
    """``sum_{m,n} Cov_mn^2`` of the column-standardized batch, diagonal included."""
    Z = _batch(Z)
    Zs = standardize_columns(Z, cfg.cov_eps)
    cov = (Zs.T @ Zs) * (1.0 / Z.shape[0])
    return tsum(square(cov))


def contrastive_infonce(Z, Zpos, cfg: LossConfig = LossConfig()) -> Tensor:
    """Mean over ``i`` of ``D(z_i, z_i+)/tau + log sum_j exp(-D(z_i, z_j)/tau)``.

    Negatives are the in-batch rows of ``Z``; ``j = i`` is part of the sum
    unless ``include_diagonal`` is off.
    """
    _require_infonce(cfg)
    Z, Zpos = _pair(Z, Zpos)
    n = Z.shape[0]
    positive = rowwise_dissim(Z, Zpos, cfg.dissim) * (1.0 / cfg.tau)
    logits = pairwise_dissim(Z, cfg.dissim) * (-1.0 / cfg.tau)
    if not cfg.include_diagonal:
        logits = logits[_offdiag_mask(n)].reshape(n, n - 1)
    return (positive + logsumexp(logits, axis=1)).mean()


def contrastive_hinge(Z, Zpos, cfg: LossConfig = LossConfig(variant="hinge")) -> Tensor:
    """Mean over ``i`` of ``||z_i - z_i+||^2 + mean_{j != i} max(0, eps - ||z_i - z_j||)^2``."""
    Z, Zpos = _pair(Z, Zpos)
    n = Z.shape[0]
    positive = tsum(square(Z - Zpos), axis=1)
    gap = square(maximum(cfg.epsilon - pairwise_dist(Z), 0.0))
    negative = gap[_offdiag_mask(n)].reshape(n, n - 1).mean(axis=1)
    return (positive + negative).mean()


def contrastive_covariance(Z, Zpos, cfg: LossConfig = LossConfig(variant="covariance")) -> Tensor:
    """Barlow-Twins style ``sum_m (1 - C_mm)^2 + w sum_{m != n} C_mn^2`` on the cross-covariance."""
    Z, Zpos = _pair(Z, Zpos)
    n, d = Z.shape
    cross = (standardize_columns(Z, cfg.cov_eps).T @ standardize_columns(Zpos, cfg.cov_eps, "Zpos")) * (1.0 / n)
    idx = np.arange(d)
    on_diag = tsum(square(1.0 - cross[idx, idx]))
    if d == 1:
        return on_diag
    return on_diag + cfg.w * tsum(square(cross[_offdiag_mask(d)]))


def dispersive_loss(Z, cfg: LossConfig) -> Tensor:
    if cfg.variant in ("infonce_l2", "infonce_cosine"):
        return dispersive_infonce_batch(Z, cfg)
    if cfg.variant == "hinge":
        return dispersive_hinge(Z, cfg)
    return dispersive_covariance(Z, cfg)


def contrastive_loss(Z, Zpos, cfg: LossConfig) -> Tensor:
    if cfg.variant in ("infonce_l2", "infonce_cosine"):
        return contrastive_infonce(Z, Zpos, cfg)
    if cfg.variant == "hinge":
        return contrastive_hinge(Z, Zpos, cfg)
    return contrastive_covariance(Z, Zpos, cfg)
