"""Representation probes and a kernel two-sample statistic."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

DEFAULT_BANDWIDTHS = (0.1, 0.5, 1.0, 2.0)


def _array(z) -> np.ndarray:
    return np.asarray(getattr(z, "data", z), dtype=np.float64)


def row_norm_mean(Z) -> float:
    Z = _array(Z)
    return float(np.linalg.norm(Z, axis=1).mean())


def norm_probe(taps: Mapping[int, object]) -> dict[int, float]:
    """Mean row l2 norm for each block's batch."""
    if not taps:
        raise ValueError("norm_probe needs at least one block")
    return {b: row_norm_mean(z) for b, z in sorted(taps.items())}


def block_norms(blocks: Sequence) -> dict[int, float]:
    """:func:`norm_probe` over an ordered block list, keyed 1..K."""
    return norm_probe({i + 1: z for i, z in enumerate(blocks)})


def dispersion_stat(Z) -> float:
    """Mean pairwise l2 distance over unordered pairs."""
    Z = _array(Z)
    if Z.shape[0] < 2:
        raise ValueError("dispersion needs at least two rows")
    return float(pdist(Z).mean())


@dataclass(frozen=True)
class MmdConfig:
    bandwidths: tuple[float, ...] = DEFAULT_BANDWIDTHS

    def __post_init__(self):
        if not self.bandwidths or any(not b > 0 for b in self.bandwidths):
            raise ValueError(f"bandwidths: all must be > 0, got {self.bandwidths}")


def rbf_kernel(x: np.ndarray, y: np.ndarray, bandwidths: Sequence[float]) -> np.ndarray:
    """Sum over bandwidths of ``exp(-||x - y||^2 / (2 h^2))``."""
    d2 = cdist(x, y, "sqeuclidean")
    return sum(np.exp(-d2 / (2.0 * h * h)) for h in bandwidths)


def _mmd2_from_kernel(K: np.ndarray, n: int) -> float:
    Kxx, Kyy, Kxy = K[:n, :n], K[n:, n:], K[:n, n:]
    m = K.shape[0] - n
    xx = (Kxx.sum() - np.trace(Kxx)) / (n * (n - 1))
    yy = (Kyy.sum() - np.trace(Kyy)) / (m * (m - 1))
    return float(xx + yy - 2.0 * Kxy.mean())


def _check_sets(x, y) -> tuple[np.ndarray, np.ndarray]:
    x, y = _array(x), _array(y)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ValueError(f"sample sets must be matrices of equal width, got {x.shape} and {y.shape}")
    if x.shape[0] < 2 or y.shape[0] < 2:
        raise ValueError(f"unbiased MMD needs at least 2 points per set, got {x.shape[0]} and {y.shape[0]}")
    return x, y


def mmd2(samples, reference, cfg: MmdConfig = MmdConfig()) -> float:
    """Unbiased MMD^2 with a multi-bandwidth RBF kernel.

    The estimate can be slightly negative; for a set compared against an
    exact copy of itself it is always <= 0.
    """
    x, y = _check_sets(samples, reference)
    pooled = np.concatenate([x, y])
    return _mmd2_from_kernel(rbf_kernel(pooled, pooled, cfg.bandwidths), x.shape[0])


@dataclass(frozen=True)
class MmdTest:
    statistic: float
    threshold: float
    p_value: float

    @property
    def reject(self) -> bool:
        return self.statistic > self.threshold


def mmd_permutation_test(samples, reference, cfg: MmdConfig = MmdConfig(), n_permutations: int = 200,
                         alpha: float = 0.05, seed: int = 0) -> MmdTest:
    """Permutation null for :func:`mmd2`; ``threshold`` is the ``1 - alpha`` null quantile."""
    x, y = _check_sets(samples, reference)
    n = x.shape[0]
    pooled = np.concatenate([x, y])
    K = rbf_kernel(pooled, pooled, cfg.bandwidths)
    stat = _mmd2_from_kernel(K, n)
    rng = np.random.default_rng(seed)
    null = np.empty(n_permutations)
    for k in range(n_permutations):
        perm = rng.permutation(K.shape[0])
        null[k] = _mmd2_from_kernel(K[np.ix_(perm, perm)], n)
    threshold = float(np.quantile(null, 1.0 - alpha))
    p_value = float((1 + np.sum(null >= stat)) / (1 + n_permutations))
    return MmdTest(stat, threshold, p_value)
