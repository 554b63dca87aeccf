"""Acceptance suite: one PASS/FAIL line per criterion, printed even without ``-s``.

The training-based criteria (5-7) take several minutes on one CPU core.
"""

import time

import numpy as np
import pytest

from disploss.harness import RunConfig, load_config, train
from disploss.harness.oracle import (
    LOSS_NAMES,
    check_combined_gradient,
    check_cosine_scale,
    check_equivalence,
    check_gradient,
    check_hinge_margin,
    check_identity_views,
    check_jensen,
    check_lambda_zero,
    check_permutation,
    check_translation,
    default_impls,
)
from disploss.harness.train import METRICS
from disploss.sampler import SamplerConfig, euler_integrate, euler_maruyama_integrate, sde_time_grid
from test_sampler import discrete_chain_variance, heun_order, sine_field, terminal_variance

SEEDS = (0, 1, 2)
# 3000 steps per run keeps criteria 5 and 6 inside their budget on one core
TREND_STEPS = 3000
GRID_STEPS = 1000
LAMBDAS = (0.25, 0.5, 1.0)
TAUS = (0.25, 0.5, 1.0, 2.0)


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


def test_criterion_1_oracle_equivalence(report):
    impls = default_impls()
    start = time.perf_counter()
    results = {name: check_equivalence(name, impls[name], batches=20) for name in LOSS_NAMES}
    seconds = time.perf_counter() - start
    failed = [n for n, (ok, _) in results.items() if not ok]
    ok = not failed and seconds < 10
    assert report(1, ok, f"{len(LOSS_NAMES) - len(failed)}/{len(LOSS_NAMES)} losses within 1e-10, {seconds:.1f}s"
                  + (f"; failed {failed}" if failed else "")), results


def test_criterion_2_gradients(report):
    impls = default_impls()
    start = time.perf_counter()
    results = {name: check_gradient(name, impls[name], seeds=10) for name in LOSS_NAMES}
    results["combined_objective"] = check_combined_gradient(seeds=10)
    seconds = time.perf_counter() - start
    failed = [n for n, (ok, _) in results.items() if not ok]
    ok = not failed and seconds < 60
    assert report(2, ok, f"{len(results) - len(failed)}/{len(results)} gradient checks within 1e-4, {seconds:.1f}s"), results


def test_criterion_3_identities(report):
    impls = default_impls()
    parts = {
        "identical_views": check_identity_views(impls, batches=20),
        "jensen": check_jensen(impls, batches=50),
        "lambda_zero": check_lambda_zero(seeds=3),
    }
    ok = all(p[0] for p in parts.values())
    assert report(3, ok, "; ".join(f"{k}: {d}" for k, (_, d) in parts.items())), parts


def test_criterion_4_invariances(report):
    impls = default_impls()
    parts = {
        "translation": check_translation(impls, batches=20),
        "cosine_scale": check_cosine_scale(impls, batches=20),
        "permutation": check_permutation(impls, batches=20),
        "hinge_margin": check_hinge_margin(impls, batches=20),
    }
    ok = all(p[0] for p in parts.values())
    assert report(4, ok, "; ".join(f"{k}: {d}" for k, (_, d) in parts.items())), parts


@pytest.fixture(scope="module")
def trend_runs():
    """Matched baseline and dispersive runs on checkerboard, keyed by (seed, lambda)."""
    start = time.perf_counter()
    runs = {}
    for seed in SEEDS:
        for lam in (0.0, 0.5):
            cfg = RunConfig(steps=TREND_STEPS, eval_every=TREND_STEPS // 10, seed=seed).with_overrides(
                {"loss.lambda": lam, "loss.tau": 0.5, "loss.variant": "infonce_l2"})
            runs[seed, lam] = train(cfg)
    return runs, time.perf_counter() - start


@pytest.mark.slow
def test_criterion_5_norm_trend(trend_runs, report):
    runs, seconds = trend_runs
    num_blocks = RunConfig().model.num_blocks
    tap = RunConfig().model.tap_blocks[0]
    wins, lines = 0, []
    for seed in SEEDS:
        base, disp = runs[seed, 0.0].rows[-1], runs[seed, 0.5].rows[-1]
        ratios = [disp[f"norm_block_{b}"] / base[f"norm_block_{b}"] for b in range(tap, num_blocks + 1)]
        wins += min(ratios) > 1.0
        lines.append(f"seed {seed} min ratio {min(ratios):.3f}")
    ok = wins == len(SEEDS) and seconds <= 30 * 60
    assert report(5, ok, f"dispersive norms exceed baseline at blocks {tap}..{num_blocks} in {wins}/3 seeds "
                         f"({', '.join(lines)}); 6 runs in {seconds / 60:.1f} min")


@pytest.mark.slow
def test_criterion_6_regularization_direction(trend_runs, report):
    runs, _ = trend_runs
    better = sum(runs[s, 0.5].rows[-1]["mmd2"] <= runs[s, 0.0].rows[-1]["mmd2"] for s in SEEDS)
    decreasing = [r.rows[-1]["loss_disp"] < r.rows[0]["loss_disp"] for r in runs.values()]
    mmds = ", ".join(f"seed {s}: {runs[s, 0.5].rows[-1]['mmd2']:.4f} vs {runs[s, 0.0].rows[-1]['mmd2']:.4f}"
                     for s in SEEDS)
    ok = better >= 2 and all(decreasing)
    assert report(6, ok, f"MMD^2 dispersive <= baseline in {better}/3 seeds ({mmds}); "
                         f"dispersive loss decreased in {sum(decreasing)}/{len(decreasing)} runs")


@pytest.mark.slow
def test_criterion_7_robustness_grid(report):
    start = time.perf_counter()
    finite = []
    for lam in LAMBDAS:
        for tau in TAUS:
            cfg = RunConfig(steps=GRID_STEPS, eval_every=GRID_STEPS // 4, mmd_samples=0).with_overrides(
                {"loss.lambda": lam, "loss.tau": tau})
            last = train(cfg).rows[-1]
            finite.append(all(np.isfinite(last[k]) for k in ("loss_total", "loss_diff", "loss_disp")))
    seconds = time.perf_counter() - start
    ok = all(finite) and seconds <= 2 * 3600
    assert report(7, ok, f"{sum(finite)}/12 (lambda, tau) runs finite after {GRID_STEPS} steps, {seconds / 60:.1f} min")


def test_criterion_8_samplers(report):
    order = heun_order()
    n = 10_000
    expected = discrete_chain_variance(250, 0.04)
    var = terminal_variance(250, 0.04)
    se = expected * np.sqrt(2.0 / (n - 1))
    cfg = SamplerConfig(kind="euler_sde", steps=100, diffusion_scale=0.0)
    x1 = np.random.default_rng(0).standard_normal((64, 2))
    bitwise = np.array_equal(euler_maruyama_integrate(sine_field, x1, cfg, np.random.default_rng(0)),
                             euler_integrate(sine_field, x1, sde_time_grid(100, 0.04)))
    ok = order >= 1.9 and abs(var - expected) <= 3 * se and bitwise
    assert report(8, ok, f"Heun order {order:.3f}; EM variance {var:.5f} vs {expected:.5f} "
                         f"({abs(var - expected) / se:.2f} SE); zero-diffusion bitwise equal: {bitwise}")


def test_criterion_9_determinism(tmp_path, report):
    from disploss.harness.cli import main

    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text('{"steps": 60, "eval_every": 10, "mmd_samples": 200, "sampler": {"steps": 20}}')
    assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "a")]) == 0
    assert main(["train", "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")]) == 0
    assert load_config(tmp_path / "a" / "manifest.json") == load_config(cfg_path)
    same = (tmp_path / "a" / METRICS).read_bytes() == (tmp_path / "b" / METRICS).read_bytes()
    assert report(9, same, "metrics CSV from manifest rerun is " + ("byte-identical" if same else "different"))
