import numpy as np
import pytest

from disploss.diffusion import combined_loss, noise_batch
from disploss.harness.oracle import combined_objective
from disploss.losses import LossConfig
from disploss.model import (
    CheckpointError,
    DenoiserConfig,
    default_tap,
    forward_with_taps,
    init_model,
    load_checkpoint,
    save_checkpoint,
    velocity_field,
    weight_shapes,
)
from disploss.numerics import Tensor, grad, grad_check, write_tensor

TINY = DenoiserConfig(hidden_dim=8, num_blocks=2, time_embed_dim=4)


@pytest.mark.parametrize("blocks,tap", [(1, 1), (2, 1), (4, 1), (5, 2), (8, 2), (12, 3)])
def test_default_tap_first_quarter(blocks, tap):
    assert default_tap(blocks) == tap
    assert DenoiserConfig(num_blocks=blocks).tap_blocks == (tap,)


@pytest.mark.parametrize("kwargs", [{"num_blocks": 0}, {"hidden_dim": 0}, {"tap_blocks": (9,)}, {"tap_blocks": (0,)},
                                    {"time_embed_dim": 3}])
def test_config_rejected(kwargs):
    with pytest.raises(ValueError):
        DenoiserConfig(**kwargs)


def test_parameter_count_closed_form():
    state = init_model(DenoiserConfig(), 0)
    d, h, e, b = 2, 128, 32, 8
    expected = d * h + h + b * (h * h + h + e * h + h * h + h) + h * d + d
    assert state.num_parameters == expected == sum(int(np.prod(s)) for s in weight_shapes(state.config).values())


def test_init_deterministic():
    a, b = init_model(TINY, 3), init_model(TINY, 3)
    assert all(np.array_equal(a.weights[k], b.weights[k]) for k in a.weights)
    c = init_model(TINY, 4)
    assert not np.array_equal(a.weights["block1.fc1.weight"], c.weights["block1.fc1.weight"])


def test_forward_shapes_single_sample():
    state = init_model(DenoiserConfig(hidden_dim=16, num_blocks=4, tap_blocks=(1, 3)), 0)
    fr = forward_with_taps(state, np.zeros((1, 2)), np.array([0.5]))
    assert fr.pred.shape == (1, 2)
    assert set(fr.taps) == {1, 3}
    assert all(z.shape == (1, 16) for z in fr.taps.values())
    assert len(fr.blocks) == 4


def test_taps_are_transparent(rng):
    x, t = rng.standard_normal((5, 2)), rng.uniform(size=5)
    base = init_model(DenoiserConfig(hidden_dim=16, num_blocks=4, tap_blocks=()), 0)
    tapped = init_model(DenoiserConfig(hidden_dim=16, num_blocks=4, tap_blocks=(1, 2)), 0)
    assert forward_with_taps(base, x, t).taps == {}
    np.testing.assert_array_equal(forward_with_taps(base, x, t).pred.data, forward_with_taps(tapped, x, t).pred.data)


def test_tap_blocks_leave_lambda_zero_gradients_unchanged(rng):
    x0 = rng.standard_normal((6, 2))
    batch = noise_batch(x0, 1)

    def grads(taps):
        state = init_model(DenoiserConfig(hidden_dim=8, num_blocks=3, time_embed_dim=4, tap_blocks=taps), 0)
        params = state.parameters()
        fr = forward_with_taps(state, batch.x_t, batch.t, params)
        loss = combined_loss(fr.pred, [fr.taps[b] for b in taps], batch.target, LossConfig(lam=0.0)).total
        return grad(loss, params.values())

    for a, b in zip(grads((1,)), grads((2, 3))):
        np.testing.assert_array_equal(a, b)


def test_forward_deterministic(rng):
    state = init_model(TINY, 0)
    x, t = rng.standard_normal((4, 2)), rng.uniform(size=4)
    a, b = forward_with_taps(state, x, t), forward_with_taps(state, x, t)
    np.testing.assert_array_equal(a.pred.data, b.pred.data)
    np.testing.assert_array_equal(a.taps[1].data, b.taps[1].data)


def test_forward_shape_errors():
    state = init_model(TINY, 0)
    with pytest.raises(ValueError, match="x_t"):
        forward_with_taps(state, np.zeros((3, 3)), np.zeros(3))
    with pytest.raises(ValueError, match="t:"):
        forward_with_taps(state, np.zeros((3, 2)), np.zeros(2))


@pytest.mark.parametrize("seed", range(3))
def test_end_to_end_gradient_check(seed):
    f, theta = combined_objective(seed, n=4)
    assert grad_check(f, theta) <= 1e-4


def test_every_block_observable(rng):
    state = init_model(DenoiserConfig(hidden_dim=16, num_blocks=5), 0)
    fr = forward_with_taps(state, rng.standard_normal((7, 2)), rng.uniform(size=7))
    assert [z.shape for z in fr.blocks] == [(7, 16)] * 5
    assert fr.taps[2] is fr.blocks[1]


def test_velocity_field_matches_forward(rng):
    state = init_model(TINY, 0)
    x, t = rng.standard_normal((4, 2)), rng.uniform(size=4)
    field = velocity_field(state)
    assert field.dim == 2
    np.testing.assert_array_equal(field(x, t), forward_with_taps(state, x, t).pred.data)


def test_checkpoint_roundtrip(tmp_path):
    state = init_model(TINY, 5).replace(init_model(TINY, 6).weights, step=42)
    path = save_checkpoint(tmp_path / "m.ckpt", state, {"note": "x"})
    loaded, manifest = load_checkpoint(path)
    assert loaded.config == state.config and loaded.step == 42 and loaded.seed == 5
    assert manifest["note"] == "x"
    assert list(manifest["weights"]) == list(weight_shapes(TINY))
    for k in state.weights:
        assert np.array_equal(loaded.weights[k], state.weights[k])


def _write_raw(path, manifest, weights):
    import json
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest).encode() + b"\n")
        for w in weights:
            write_tensor(fh, w)


@pytest.mark.parametrize("corruption,match", [
    ("truncate", "weight 'out.bias'"),
    ("format", "field 'format'"),
    ("missing_step", "field 'step'"),
    ("shape", "weight 'in.weight' has shape"),
    ("nan", "weight 'in.bias' contains non-finite"),
    ("trailing", "trailing bytes"),
    ("garbage", "not valid JSON"),
])
def test_corrupt_checkpoint_names_field(tmp_path, corruption, match):
    state = init_model(TINY, 0)
    good = tmp_path / "good.ckpt"
    save_checkpoint(good, state)
    _, manifest = load_checkpoint(good)
    weights = [state.weights[k] for k in manifest["weights"]]
    bad = tmp_path / "bad.ckpt"
    if corruption == "truncate":
        bad.write_bytes(good.read_bytes()[:-8])
    elif corruption == "format":
        _write_raw(bad, {**manifest, "format": "other/9"}, weights)
    elif corruption == "missing_step":
        _write_raw(bad, {k: v for k, v in manifest.items() if k != "step"}, weights)
    elif corruption == "shape":
        _write_raw(bad, manifest, [weights[0].T] + weights[1:])
    elif corruption == "nan":
        weights[1] = weights[1].copy()
        weights[1][0] = np.nan
        _write_raw(bad, manifest, weights)
    elif corruption == "trailing":
        bad.write_bytes(good.read_bytes() + b"\x00")
    else:
        bad.write_bytes(b"\x00\x01garbage\n")
    with pytest.raises(CheckpointError, match=match):
        load_checkpoint(bad)
