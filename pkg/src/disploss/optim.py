"""AdamW over a dict of named numpy weights."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr: must be > 0, got {self.lr}")
        for name in ("beta1", "beta2"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name}: must lie in [0, 1), got {getattr(self, name)}")
        if not self.eps > 0:
            raise ValueError(f"eps: must be > 0, got {self.eps}")
        if not self.weight_decay >= 0:
            raise ValueError(f"weight_decay: must be >= 0, got {self.weight_decay}")


@dataclass
class Adam:
    cfg: AdamConfig
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, weights: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Return updated copies; the inputs are left untouched."""
        c = self.cfg
        self.step_count += 1
        bc1 = 1.0 - c.beta1**self.step_count
        bc2 = 1.0 - c.beta2**self.step_count
        out = {}
        for name, w in weights.items():
            g = grads[name]
            m = c.beta1 * self.m.get(name, 0.0) + (1.0 - c.beta1) * g
            v = c.beta2 * self.v.get(name, 0.0) + (1.0 - c.beta2) * g * g
            self.m[name], self.v[name] = m, v
            new = w - c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)
            if c.weight_decay:
                new = new - c.lr * c.weight_decay * w
            out[name] = new
        return out
