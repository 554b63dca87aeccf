"""Central finite-difference gradient checker."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import DomainError, Tensor, grad


def numeric_grad(f: Callable[[Tensor], Tensor], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x``, one coordinate at a time."""
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat = x.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        coord = tuple(int(i) for i in np.unravel_index(k, x.shape))
        try:
            flat[k] = orig + step
            hi = f(Tensor(x)).item()
            flat[k] = orig - step
            lo = f(Tensor(x)).item()
        except DomainError as err:
            raise DomainError(f"function is undefined when probing coordinate {coord}: {err}") from err
        finally:
            flat[k] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise DomainError(f"function is non-finite when probing coordinate {coord}")
        out.reshape(-1)[k] = (hi - lo) / (2.0 * step)
    return out


def analytic_grad(f: Callable[[Tensor], Tensor], x: np.ndarray) -> np.ndarray:
    leaf = Tensor(x, requires_grad=True)
    value = f(leaf)
    if not np.isfinite(value.item()):
        raise DomainError("function is non-finite at the base point")
    return grad(value, [leaf])[0]


def grad_check(f: Callable[[Tensor], Tensor], x, step: float = 1e-5) -> float:
    """Max over coordinates of ``|a - n| / max(1, |a|, |n|)``.

    ``a`` is the reverse-mode gradient, ``n`` the central difference.
    """
    x = np.array(x, dtype=np.float64)
    a = analytic_grad(f, x)
    n = numeric_grad(f, x, step)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / denom)) if x.size else 0.0
