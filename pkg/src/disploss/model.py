"""Residual MLP velocity model with per-block representation taps.

Block ``b`` (1-based) maps the residual stream ``h`` to
``h + W2 silu(W1 h + b1 + Wt emb(t)) + b2``. The tap for block ``b`` is the
stream right after that residual addition.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .numerics import CorruptTensorError, Tensor, as_tensor, read_tensor, silu, write_tensor

CHECKPOINT_FORMAT = "disploss-checkpoint/1"
TAP_POINT = "post_residual"


def default_tap(num_blocks: int) -> int:
    """The block at the first quarter of the stack."""
    return max(1, math.ceil(num_blocks / 4))


@dataclass(frozen=True)
class DenoiserConfig:
    input_dim: int = 2
    hidden_dim: int = 128
    num_blocks: int = 8
    tap_blocks: Optional[tuple[int, ...]] = None
    time_embed_dim: int = 32

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "num_blocks", "time_embed_dim"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name}: must be >= 1, got {getattr(self, name)}")
        if self.time_embed_dim % 2:
            raise ValueError(f"time_embed_dim: must be even, got {self.time_embed_dim}")
        taps = (default_tap(self.num_blocks),) if self.tap_blocks is None else tuple(int(b) for b in self.tap_blocks)
        for b in taps:
            if not 1 <= b <= self.num_blocks:
                raise ValueError(f"tap_blocks: block {b} outside 1..{self.num_blocks}")
        object.__setattr__(self, "tap_blocks", tuple(sorted(set(taps))))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tap_blocks"] = list(self.tap_blocks)
        return d


def weight_shapes(cfg: DenoiserConfig) -> dict[str, tuple[int, ...]]:
    d, h, e = cfg.input_dim, cfg.hidden_dim, cfg.time_embed_dim
    shapes = {"in.weight": (d, h), "in.bias": (h,)}
    for b in range(1, cfg.num_blocks + 1):
        shapes[f"block{b}.fc1.weight"] = (h, h)
        shapes[f"block{b}.fc1.bias"] = (h,)
        shapes[f"block{b}.time.weight"] = (e, h)
        shapes[f"block{b}.fc2.weight"] = (h, h)
        shapes[f"block{b}.fc2.bias"] = (h,)
    shapes["out.weight"] = (h, d)
    shapes["out.bias"] = (d,)
    return shapes


@dataclass(frozen=True)
class DenoiserState:
    config: DenoiserConfig
    weights: dict[str, np.ndarray]
    seed: int = 0
    step: int = 0

    def parameters(self) -> dict[str, Tensor]:
        """Fresh gradient-tracking leaves, one per weight."""
        return {k: Tensor(v, requires_grad=True, name=k) for k, v in self.weights.items()}

    def replace(self, weights: dict[str, np.ndarray], step: Optional[int] = None) -> "DenoiserState":
        return DenoiserState(self.config, weights, self.seed, self.step if step is None else step)

    @property
    def num_parameters(self) -> int:
        return sum(int(w.size) for w in self.weights.values())


def init_model(cfg: DenoiserConfig, seed: int = 0) -> DenoiserState:
    """Scaled-normal weights (std ``1/sqrt(fan_in)``), zero biases.

    The input projection and the residual branch outputs get an extra
    ``1/sqrt(hidden_dim)`` (and ``1/sqrt(num_blocks)`` for the branches), which
    keeps residual-stream rows at O(1) norm. Squared distances between rows
    then start comparable to the temperature instead of saturating the
    InfoNCE exponent.
    """
    rng = np.random.default_rng(seed)
    h = cfg.hidden_dim
    weights = {}
    for name, shape in weight_shapes(cfg).items():
        if name.endswith("bias"):
            weights[name] = np.zeros(shape)
            continue
        std = 1.0 / math.sqrt(shape[0])
        if name == "in.weight":
            std /= math.sqrt(h)
        elif name.endswith("fc2.weight"):
            std /= math.sqrt(h * cfg.num_blocks)
        weights[name] = rng.normal(0.0, std, size=shape)
    return DenoiserState(cfg, weights, seed=seed)


def time_embedding(t: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Sinusoidal features of ``1000 t``, ``[cos | sin]`` halves."""
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    args = 1000.0 * np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.cos(args), np.sin(args)], axis=1)


@dataclass
class ForwardResult:
    pred: Tensor
    taps: dict[int, Tensor]
    blocks: list[Tensor] = field(default_factory=list)


def forward_with_taps(state: DenoiserState, x_t, t, params: Optional[dict[str, Tensor]] = None) -> ForwardResult:
    """Velocity prediction plus the post-residual activation of every block.

    ``params`` overrides the state's weights (pass ``state.parameters()`` to
    record gradients); without it the pass is constant-only.
    """
    cfg = state.config
    x = as_tensor(x_t)
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or x.shape[1] != cfg.input_dim:
        raise ValueError(f"x_t: expected shape (N, {cfg.input_dim}), got {x.shape}")
    if t.shape[0] != x.shape[0]:
        raise ValueError(f"t: expected {x.shape[0]} times, got {t.shape[0]}")
    p = params if params is not None else {k: Tensor(v) for k, v in state.weights.items()}
    emb = Tensor(time_embedding(t, cfg.time_embed_dim))

    h = x @ p["in.weight"] + p["in.bias"]
    blocks = []
    for b in range(1, cfg.num_blocks + 1):
        u = h @ p[f"block{b}.fc1.weight"] + p[f"block{b}.fc1.bias"] + emb @ p[f"block{b}.time.weight"]
        h = h + silu(u) @ p[f"block{b}.fc2.weight"] + p[f"block{b}.fc2.bias"]
        blocks.append(h)
    pred = h @ p["out.weight"] + p["out.bias"]
    return ForwardResult(pred=pred, taps={b: blocks[b - 1] for b in cfg.tap_blocks}, blocks=blocks)


def velocity_field(state: DenoiserState):
    """Plain-array callable ``v(x, t)`` for the samplers."""

    def field_fn(x: np.ndarray, t: np.ndarray) -> np.ndarray:
        return forward_with_taps(state, x, t).pred.data

    field_fn.dim = state.config.input_dim
    return field_fn


# ---------------------------------------------------------------------------
# checkpoints

class CheckpointError(ValueError):
    pass


def save_checkpoint(path, state: DenoiserState, extra: Optional[dict] = None) -> Path:
    """One JSON manifest line, then each weight as a tensor record in manifest order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "config": state.config.to_dict(),
        "seed": state.seed,
        "step": state.step,
        "weights": list(state.weights),
    }
    if extra:
        manifest.update(extra)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(manifest, sort_keys=True).encode() + b"\n")
        for name in manifest["weights"]:
            write_tensor(fh, state.weights[name])
    tmp.replace(path)
    return path


def load_checkpoint(path) -> tuple[DenoiserState, dict]:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            manifest = json.loads(line)
        except ValueError as err:
            raise CheckpointError(f"{path}: manifest line is not valid JSON") from err
        if not isinstance(manifest, dict):
            raise CheckpointError(f"{path}: manifest is not an object")
        for key in ("format", "config", "seed", "step", "weights"):
            if key not in manifest:
                raise CheckpointError(f"{path}: manifest field '{key}' missing")
        if manifest["format"] != CHECKPOINT_FORMAT:
            raise CheckpointError(f"{path}: field 'format' is {manifest['format']!r}")
        try:
            cfg = DenoiserConfig(**{**manifest["config"], "tap_blocks": tuple(manifest["config"]["tap_blocks"])})
        except (TypeError, ValueError, KeyError) as err:
            raise CheckpointError(f"{path}: field 'config' invalid ({err})") from err
        expected = weight_shapes(cfg)
        if list(manifest["weights"]) != list(expected):
            raise CheckpointError(f"{path}: field 'weights' does not match the model config")
        weights = {}
        for name in manifest["weights"]:
            try:
                arr = read_tensor(fh, label=name)
            except CorruptTensorError as err:
                raise CheckpointError(f"{path}: weight '{name}' malformed: {err}") from err
            if arr.shape != expected[name]:
                raise CheckpointError(f"{path}: weight '{name}' has shape {arr.shape}, expected {expected[name]}")
            if not np.all(np.isfinite(arr)):
                raise CheckpointError(f"{path}: weight '{name}' contains non-finite values")
            weights[name] = arr
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after the last weight")
    state = DenoiserState(cfg, weights, seed=int(manifest["seed"]), step=int(manifest["step"]))
    return state, manifest
