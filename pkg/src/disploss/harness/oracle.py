"""Brute-force property suite: loop-oracle equivalence, gradient checks, identities, invariances.

Every property returns a :class:`PropertyResult`. Loss implementations are
looked up through an ``impls`` mapping so a test can swap one out and confirm
the suite notices.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from .. import losses, reference
from ..diffusion import combined_loss, diffusion_loss, noise_batch
from ..losses import LossConfig
from ..model import DenoiserConfig, forward_with_taps, init_model, weight_shapes
from ..numerics import Tensor, grad, grad_check

DISPERSIVE = ("dispersive_infonce_l2", "dispersive_infonce_cosine", "dispersive_hinge", "dispersive_covariance")
CONTRASTIVE = ("contrastive_infonce", "contrastive_hinge", "contrastive_covariance")
LOSS_NAMES = DISPERSIVE + CONTRASTIVE

EQUIV_TOL = 1e-10
GRAD_TOL = 1e-4
IDENTITY_TOL = 1e-12
TRANSLATION_TOL = 1e-9
SCALE_TOL = 1e-12
PERMUTATION_TOL = 1e-12

# name -> (loss config, implementation taking (Z, Zpos, cfg)); Zpos is ignored by dispersive losses
Impl = Callable[[object, object, LossConfig], Tensor]


def default_impls() -> dict[str, Impl]:
    return {
        "dispersive_infonce_l2": lambda Z, P, c: losses.dispersive_infonce_batch(Z, c),
        "dispersive_infonce_cosine": lambda Z, P, c: losses.dispersive_infonce_batch(Z, c),
        "dispersive_hinge": lambda Z, P, c: losses.dispersive_hinge(Z, c),
        "dispersive_covariance": lambda Z, P, c: losses.dispersive_covariance(Z, c),
        "contrastive_infonce": lambda Z, P, c: losses.contrastive_infonce(Z, P, c),
        "contrastive_hinge": lambda Z, P, c: losses.contrastive_hinge(Z, P, c),
        "contrastive_covariance": lambda Z, P, c: losses.contrastive_covariance(Z, P, c),
    }


def naive(name: str, Z: np.ndarray, P: np.ndarray, cfg: LossConfig) -> float:
    if name in ("dispersive_infonce_l2", "dispersive_infonce_cosine"):
        return reference.infonce_batch(Z, cfg.tau, cfg.variant, cfg.include_diagonal)
    if name == "dispersive_hinge":
        return reference.hinge(Z, cfg.epsilon)
    if name == "dispersive_covariance":
        return reference.covariance(Z, cfg.cov_eps)
    if name == "contrastive_infonce":
        return reference.contrastive_infonce(Z, P, cfg.tau, cfg.variant, cfg.include_diagonal)
    if name == "contrastive_hinge":
        return reference.contrastive_hinge(Z, P, cfg.epsilon)
    if name == "contrastive_covariance":
        return reference.contrastive_covariance(Z, P, cfg.w, cfg.cov_eps)
    raise KeyError(name)


def random_config(name: str, rng: np.random.Generator) -> LossConfig:
    tau = float(rng.uniform(0.25, 2.0))
    diag = bool(rng.integers(2))
    if name == "dispersive_infonce_l2":
        return LossConfig(variant="infonce_l2", tau=tau, include_diagonal=diag)
    if name == "dispersive_infonce_cosine":
        return LossConfig(variant="infonce_cosine", tau=tau, include_diagonal=diag)
    if name == "contrastive_infonce":
        variant = ("infonce_l2", "infonce_cosine")[int(rng.integers(2))]
        return LossConfig(variant=variant, tau=tau, include_diagonal=diag)
    if name.endswith("hinge"):
        return LossConfig(variant="hinge", epsilon=float(rng.uniform(0.5, 2.0)))
    return LossConfig(variant="covariance", w=float(rng.uniform(0.0, 2.0)))


def random_views(rng: np.random.Generator, max_n: int = 64, max_d: int = 16, min_n: int = 2) -> tuple[np.ndarray, np.ndarray]:
    n = int(rng.integers(min_n, max_n + 1))
    d = int(rng.integers(1, max_d + 1))
    Z = rng.standard_normal((n, d)) * 0.6
    return Z, Z + 0.3 * rng.standard_normal((n, d))


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(b))


def check_equivalence(name: str, impl: Impl, batches: int = 20, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng([seed, LOSS_NAMES.index(name)])
    worst = 0.0
    for _ in range(batches):
        Z, P = random_views(rng)
        cfg = random_config(name, rng)
        worst = max(worst, _rel(impl(Z, P, cfg).item(), naive(name, Z, P, cfg)))
    return worst <= EQUIV_TOL, f"max rel err {worst:.2e} over {batches} batches (tol {EQUIV_TOL:g})"


def check_gradient(name: str, impl: Impl, seeds: int = 10) -> tuple[bool, str]:
    worst = 0.0
    for s in range(seeds):
        rng = np.random.default_rng([s, 100 + LOSS_NAMES.index(name)])
        Z, P = random_views(rng, max_n=8, max_d=4, min_n=3)
        if name.endswith("hinge"):
            # keep pairs inside the margin so the check sees nonzero gradients
            Z, P = Z * 0.5, P * 0.5
        cfg = random_config(name, rng)
        contrastive = name in CONTRASTIVE
        worst = max(worst, grad_check(lambda z: impl(z, P, cfg), Z))
        if contrastive:
            worst = max(worst, grad_check(lambda p: impl(Z, p, cfg), P))
    return worst <= GRAD_TOL, f"max rel err {worst:.2e} over {seeds} seeds (tol {GRAD_TOL:g})"


SMALL_MODEL = DenoiserConfig(input_dim=2, hidden_dim=8, num_blocks=2, tap_blocks=(1,), time_embed_dim=4)


def _split(theta: Tensor, shapes: Mapping[str, tuple]) -> dict[str, Tensor]:
    params, k = {}, 0
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        params[name] = theta[k:k + size].reshape(shape)
        k += size
    return params


def combined_objective(seed: int, cfg: LossConfig = LossConfig(), model: DenoiserConfig = SMALL_MODEL, n: int = 6,
                       bare: bool = False):
    """Scalar function of a flat parameter vector, plus the starting vector.

    ``bare`` returns the diffusion loss alone instead of the combined objective.
    """
    rng = np.random.default_rng(seed)
    state = init_model(model, seed)
    x0 = rng.standard_normal((n, model.input_dim))
    batch = noise_batch(x0, rng)
    shapes = weight_shapes(model)

    def f(theta: Tensor) -> Tensor:
        fr = forward_with_taps(state, batch.x_t, batch.t, _split(theta, shapes))
        if bare:
            return diffusion_loss(fr.pred, batch.target)
        return combined_loss(fr.pred, [fr.taps[b] for b in model.tap_blocks], batch.target, cfg).total

    theta0 = np.concatenate([state.weights[k].reshape(-1) for k in shapes])
    # perturb so biases are nonzero and no gradient vanishes by symmetry
    theta0 = theta0 + 0.05 * rng.standard_normal(theta0.shape)
    return f, theta0


def check_combined_gradient(seeds: int = 10) -> tuple[bool, str]:
    worst = 0.0
    for s in range(seeds):
        f, theta = combined_objective(s)
        worst = max(worst, grad_check(f, theta))
    return worst <= GRAD_TOL, f"2-block model, max rel err {worst:.2e} over {seeds} seeds (tol {GRAD_TOL:g})"


def check_lambda_zero(seeds: int = 3) -> tuple[bool, str]:
    """With lambda = 0 the combined loss and its gradient equal the bare diffusion loss exactly."""
    for s in range(seeds):
        f, theta = combined_objective(s, LossConfig(lam=0.0))
        f_bare, _ = combined_objective(s, bare=True)
        a, b = Tensor(theta, requires_grad=True), Tensor(theta, requires_grad=True)
        total, base = f(a), f_bare(b)
        g_total, g_base = grad(total, [a])[0], grad(base, [b])[0]
        if total.item() != base.item() or not np.array_equal(g_total, g_base):
            return False, (f"seed {s}: value diff {abs(total.item() - base.item()):.3e}, "
                           f"grad diff {np.max(np.abs(g_total - g_base)):.3e}")
    return True, f"values and gradients bit-identical over {seeds} seeds"


def check_identity_views(impls: Mapping[str, Impl], batches: int = 20) -> tuple[bool, str]:
    """Contrastive InfoNCE on identical views equals log N plus the mean per-sample dispersive term."""
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(batches):
        Z, _ = random_views(rng)
        n = Z.shape[0]
        cfg = LossConfig(variant="infonce_l2", tau=float(rng.uniform(0.25, 2.0)))
        lhs = impls["contrastive_infonce"](Z, Z, cfg).item()
        per_sample = np.mean([losses.dispersive_infonce_per_sample(Z, i, cfg).item() for i in range(n)])
        worst = max(worst, abs(lhs - (math.log(n) + per_sample)))
    return worst <= IDENTITY_TOL, f"max abs err {worst:.2e} (tol {IDENTITY_TOL:g})"


def check_jensen(impls: Mapping[str, Impl], batches: int = 10, seed: int = 11) -> tuple[bool, str]:
    """Batch form >= mean of per-sample forms (log of a mean vs mean of logs)."""
    rng = np.random.default_rng(seed)
    min_gap = math.inf
    for k in range(batches):
        Z, _ = random_views(rng)
        variant = ("infonce_l2", "infonce_cosine")[k % 2]
        cfg = LossConfig(variant=variant, tau=float(rng.uniform(0.25, 2.0)))
        name = "dispersive_infonce_l2" if variant == "infonce_l2" else "dispersive_infonce_cosine"
        batch = impls[name](Z, None, cfg).item()
        per = np.mean([losses.dispersive_infonce_per_sample(Z, i, cfg).item() for i in range(Z.shape[0])])
        min_gap = min(min_gap, batch - per)
    return min_gap >= -1e-12, f"min(batch - mean per-sample) = {min_gap:.3e} over {batches} batches"


def check_translation(impls: Mapping[str, Impl], batches: int = 20) -> tuple[bool, str]:
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(batches):
        Z, P = random_views(rng)
        shift = rng.uniform(-3, 3, size=Z.shape[1])
        cfg = LossConfig(variant="infonce_l2", tau=float(rng.uniform(0.25, 2.0)))
        for name in ("dispersive_infonce_l2", "contrastive_infonce"):
            a = impls[name](Z, P, cfg).item()
            b = impls[name](Z + shift, P + shift, cfg).item()
            worst = max(worst, _rel(b, a))
    return worst <= TRANSLATION_TOL, f"max rel err {worst:.2e} (tol {TRANSLATION_TOL:g})"


def check_cosine_scale(impls: Mapping[str, Impl], batches: int = 20) -> tuple[bool, str]:
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(batches):
        Z, P = random_views(rng)
        scale = np.exp(rng.uniform(-2, 2, size=(Z.shape[0], 1)))
        cfg = LossConfig(variant="infonce_cosine", tau=float(rng.uniform(0.25, 2.0)))
        for name in ("dispersive_infonce_cosine", "contrastive_infonce"):
            a = impls[name](Z, P, cfg).item()
            b = impls[name](Z * scale, P * scale, cfg).item()
            worst = max(worst, _rel(b, a))
    return worst <= SCALE_TOL, f"per-row rescaling, max rel err {worst:.2e} (tol {SCALE_TOL:g})"


def check_permutation(impls: Mapping[str, Impl], batches: int = 20) -> tuple[bool, str]:
    rng = np.random.default_rng(19)
    worst, where = 0.0, ""
    for _ in range(batches):
        Z, P = random_views(rng)
        perm = rng.permutation(Z.shape[0])
        for name in LOSS_NAMES:
            cfg = random_config(name, rng)
            err = _rel(impls[name](Z[perm], P[perm], cfg).item(), impls[name](Z, P, cfg).item())
            if err > worst:
                worst, where = err, name
    ok = worst <= PERMUTATION_TOL
    return ok, f"max rel err {worst:.2e} (tol {PERMUTATION_TOL:g})" + ("" if ok else f" in {where}")


def check_hinge_margin(impls: Mapping[str, Impl], batches: int = 20) -> tuple[bool, str]:
    """Distinct integer-lattice points are >= 1 apart, so a margin-1 hinge is exactly zero, gradient included."""
    rng = np.random.default_rng(23)
    cfg = LossConfig(variant="hinge", epsilon=1.0)
    for k in range(batches):
        d = int(rng.integers(1, 5))
        n = int(rng.integers(2, min(16, 7**d) + 1))
        points = set()
        while len(points) < n:
            points.add(tuple(int(v) for v in rng.integers(-3, 4, size=d)))
        Z = np.array(sorted(points), dtype=np.float64)
        leaf = Tensor(Z, requires_grad=True)
        value = impls["dispersive_hinge"](leaf, None, cfg)
        g = grad(value, [leaf])[0]
        if value.item() != 0.0 or np.any(g != 0.0):
            return False, f"batch {k}: value {value.item():.3e}, max |grad| {np.max(np.abs(g)):.3e}"
    return True, f"exactly zero value and gradient on {batches} lattice batches"


def run_oracle(impls: Optional[Mapping[str, Impl]] = None, quick: bool = False) -> list[PropertyResult]:
    """Run every property. ``impls`` overrides individual loss implementations by name."""
    table = default_impls()
    if impls:
        unknown = set(impls) - set(table)
        if unknown:
            raise KeyError(f"unknown loss implementation(s): {sorted(unknown)}")
        table.update(impls)
    seeds = 3 if quick else 10
    checks: list[tuple[str, Callable[[], tuple[bool, str]]]] = []
    for name in LOSS_NAMES:
        checks.append((f"oracle_equivalence[{name}]", lambda n=name: check_equivalence(n, table[n])))
    for name in LOSS_NAMES:
        checks.append((f"gradient[{name}]", lambda n=name: check_gradient(n, table[n], seeds)))
    checks += [
        ("gradient[combined_objective]", lambda: check_combined_gradient(seeds)),
        ("identity_views", lambda: check_identity_views(table)),
        ("jensen_ordering", lambda: check_jensen(table, 10 if quick else 50)),
        ("lambda_zero_reduction", check_lambda_zero),
        ("translation_invariance[infonce_l2]", lambda: check_translation(table)),
        ("scale_invariance[infonce_cosine]", lambda: check_cosine_scale(table)),
        ("permutation_invariance", lambda: check_permutation(table)),
        ("hinge_zero_at_margin", lambda: check_hinge_margin(table)),
    ]
    results = []
    for name, fn in checks:
        start = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as err:  # a crash is a failed property, not a crashed suite
            ok, detail = False, f"raised {type(err).__name__}: {err}"
        results.append(PropertyResult(name, bool(ok), detail, time.perf_counter() - start))
    return results


def format_report(results: list[PropertyResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'property':<{width}}  result  time(s)  detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.seconds:7.2f}  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    lines.append(f"{len(results) - len(failed)}/{len(results)} properties passed")
    if failed:
        lines.append("failed: " + ", ".join(failed))
    return "\n".join(lines)


__all__ = ["LOSS_NAMES", "PropertyResult", "combined_objective", "default_impls", "format_report", "naive",
           "random_config", "random_views", "run_oracle"]
