"""Toy 2-D target distributions, generated from a seed or generator."""

from __future__ import annotations

import numpy as np

DATASETS = ("two_moons", "checkerboard", "eight_gaussians")


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def checkerboard(n: int, rng) -> np.ndarray:
    """Uniform on the dark squares of a 4x4 board spanning [-4, 4]^2."""
    g = _rng(rng)
    x1 = g.uniform(-2.0, 2.0, size=n)
    x2 = g.uniform(0.0, 1.0, size=n) - 2.0 * g.integers(0, 2, size=n) + np.floor(x1) % 2
    return 2.0 * np.stack([x1, x2], axis=1)


def eight_gaussians(n: int, rng, scale: float = 4.0, std: float = 0.5) -> np.ndarray:
    g = _rng(rng)
    angles = np.arange(8) * (np.pi / 4)
    centers = scale * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    idx = g.integers(0, 8, size=n)
    return (centers[idx] + std * g.standard_normal((n, 2))) / np.sqrt(2.0)


def two_moons(n: int, rng, noise: float = 0.1) -> np.ndarray:
    g = _rng(rng)
    theta = g.uniform(0.0, np.pi, size=n)
    upper = g.integers(0, 2, size=n).astype(bool)
    x = np.where(upper, np.cos(theta), 1.0 - np.cos(theta))
    y = np.where(upper, np.sin(theta), 0.5 - np.sin(theta))
    pts = np.stack([x, y], axis=1) + noise * g.standard_normal((n, 2))
    return 2.0 * (pts - np.array([0.5, 0.25]))


def sample_dataset(name: str, n: int, rng) -> np.ndarray:
    if name == "checkerboard":
        return checkerboard(n, rng)
    if name == "eight_gaussians":
        return eight_gaussians(n, rng)
    if name == "two_moons":
        return two_moons(n, rng)
    raise ValueError(f"dataset: expected one of {DATASETS}, got {name!r}")
