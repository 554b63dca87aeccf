import io
import math

import numpy as np
import pytest

from disploss.numerics import (
    CorruptTensorError,
    DomainError,
    ShapeError,
    Tape,
    Tensor,
    backward,
    concatenate,
    exp,
    grad,
    grad_check,
    log,
    logsumexp,
    maximum,
    numeric_grad,
    pairwise_dist,
    pairwise_sqdist,
    read_tensor,
    relu,
    silu,
    sqrt,
    square,
    write_tensor,
)


def test_matmul_identity():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal((a @ Tensor(np.eye(2))).data, [[1, 2], [3, 4]])


def test_mean():
    assert Tensor([1.0, 2.0, 3.0, 4.0]).mean().item() == 2.5


def test_exp_log_inverse():
    assert abs(exp(log(Tensor(0.37))).item() - 0.37) <= 1e-12


def test_grad_of_sum_of_squares():
    w = Tensor([1.0, -2.0], requires_grad=True)
    (g,) = grad((w * w).sum(), [w])
    np.testing.assert_array_equal(g, [2.0, -4.0])


def test_grad_of_mean():
    w = Tensor(np.arange(4.0), requires_grad=True)
    (g,) = grad(w.mean(), [w])
    np.testing.assert_array_equal(g, [0.25] * 4)


def test_non_scalar_root_rejected():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ShapeError):
        backward(w * 2.0)


def test_leaf_off_tape_gets_zero_gradient():
    w = Tensor([1.0, 2.0], requires_grad=True)
    other = Tensor([[3.0]], requires_grad=True)
    gw, go = grad(square(w).sum(), [w, other])
    np.testing.assert_array_equal(gw, [2.0, 4.0])
    np.testing.assert_array_equal(go, [[0.0]])


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(3, 2\)"):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((3, 2)))


def test_matmul_mismatch():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


@pytest.mark.parametrize("op", [log, sqrt])
@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_non_positive_domain_fails(op, bad):
    with pytest.raises(DomainError, match="index"):
        op(Tensor([1.0, bad]))


def test_exp_overflow_fails():
    with pytest.raises(DomainError):
        exp(Tensor([1000.0]))


def test_division_by_zero_fails():
    with pytest.raises(DomainError):
        Tensor([1.0]) / Tensor([0.0])


def test_broadcast_rules():
    m = Tensor(np.ones((3, 2)))
    assert (m + Tensor([1.0, 2.0])).shape == (3, 2)
    assert (m * 2.0).shape == (3, 2)
    with pytest.raises(ShapeError):
        m + Tensor([1.0, 2.0, 3.0])


def test_tensors_are_immutable():
    t = Tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        t.data[0] = 5.0


def test_tape_is_topological_and_visits_once():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = x * x
    z = y + y  # shared subexpression
    root = z.sum()
    tape = Tape.from_root(root)
    pos = {id(n): k for k, n in enumerate(tape.nodes)}
    assert len(pos) == len(tape.nodes)
    for node in tape.nodes:
        for p in node._parents:
            if p.requires_grad:
                assert pos[id(p)] < pos[id(node)]
    (g,) = grad(root, [x])
    np.testing.assert_array_equal(g, 4.0 * x.data)


def test_deep_graph_does_not_recurse():
    x = Tensor([1.0], requires_grad=True)
    y = x
    for _ in range(5000):
        y = y + 0.0
    (g,) = grad(y.sum(), [x])
    assert g[0] == 1.0


def _primitives():
    # name -> (function of one tensor, input shape, input transform keeping the domain valid)
    return {
        "add": (lambda x: (x + x * 0.5).sum(), (4, 3), None),
        "sub_broadcast": (lambda x: (x - Tensor([1.0, 2.0, 3.0])).sum(), (4, 3), None),
        "mul": (lambda x: (x * x).sum(), (5, 2), None),
        "div": (lambda x: (1.0 / x).sum(), (3, 3), lambda a: np.abs(a) + 0.5),
        "matmul": (lambda x: (x @ x.T).sum(), (4, 3), None),
        "exp": (lambda x: exp(x).sum(), (3, 4), None),
        "log": (lambda x: log(x).sum(), (3, 4), lambda a: np.abs(a) + 0.1),
        "sqrt": (lambda x: sqrt(x).sum(), (3, 4), lambda a: np.abs(a) + 0.1),
        "maximum": (lambda x: square(maximum(x, 0.1)).sum(), (6, 2), None),
        "relu": (lambda x: square(relu(x)).sum(), (6, 2), None),
        "silu": (lambda x: silu(x).sum(), (6, 2), None),
        "sum_axis": (lambda x: square(x.sum(axis=0)).sum(), (4, 3), None),
        "mean_axis": (lambda x: square(x.mean(axis=1)).sum(), (4, 3), None),
        "logsumexp": (lambda x: logsumexp(x, axis=1).sum() + logsumexp(x), (4, 5), None),
        "transpose": (lambda x: (x.T @ Tensor(np.arange(4.0).reshape(4, 1))).sum(), (4, 3), None),
        "reshape": (lambda x: square(x.reshape(2, 6)).mean(axis=0).sum(), (4, 3), None),
        "row_slice": (lambda x: square(x[1:3]).sum(), (5, 3), None),
        "mask": (lambda x: square(x[~np.eye(4, dtype=bool)]).sum(), (4, 4), None),
        "concatenate": (lambda x: square(concatenate([x, x * 2.0])).sum(), (3, 2), None),
        "pairwise_sqdist": (lambda x: exp(-pairwise_sqdist(x)).sum(), (5, 3), None),
        "pairwise_dist": (lambda x: square(pairwise_dist(x)).sum() + pairwise_dist(x).sum(), (5, 3), None),
    }


@pytest.mark.parametrize("name", sorted(_primitives()))
@pytest.mark.parametrize("seed", range(10))
def test_primitive_gradients(name, seed):
    f, shape, fix = _primitives()[name]
    x = np.random.default_rng(seed).standard_normal(shape)
    if fix is not None:
        x = fix(x)
    assert grad_check(f, x, step=1e-5) <= 1e-4


def test_backward_is_linear(rng):
    x = rng.standard_normal((4, 3))

    def f(t):
        return exp(t * 0.3).sum()

    def g(t):
        return square(t @ t.T).mean()

    a, b = 1.7, -0.4
    leaf = Tensor(x, requires_grad=True)
    (combined,) = grad(f(leaf) * a + g(leaf) * b, [leaf])
    leaf_f, leaf_g = Tensor(x, requires_grad=True), Tensor(x, requires_grad=True)
    (gf,) = grad(f(leaf_f), [leaf_f])
    (gg,) = grad(g(leaf_g), [leaf_g])
    np.testing.assert_allclose(combined, a * gf + b * gg, rtol=0, atol=1e-12)


def test_forward_backward_bit_identical():
    def run():
        x = Tensor(np.random.default_rng(5).standard_normal((6, 4)), requires_grad=True)
        loss = logsumexp(-pairwise_sqdist(x)) + silu(x).mean()
        return loss.item(), grad(loss, [x])[0]

    (v1, g1), (v2, g2) = run(), run()
    assert v1 == v2
    assert np.array_equal(g1, g2)


def test_grad_check_quadratic():
    assert grad_check(lambda t: square(t).sum(), np.array([3.0]), step=1e-5) <= 1e-8


def test_grad_check_names_non_finite_coordinate():
    # sqrt at 0 - step leaves the domain
    with pytest.raises(DomainError, match=r"coordinate \(1,\)"):
        numeric_grad(lambda t: sqrt(t + 1e-9).sum(), np.array([1.0, 0.0]), step=1e-5)


def test_grad_check_rejects_bad_step():
    with pytest.raises(ValueError):
        grad_check(lambda t: t.sum(), np.ones(2), step=0.0)


def test_logsumexp_is_shifted():
    x = Tensor([1000.0, 1000.0])
    assert logsumexp(x).item() == pytest.approx(1000.0 + math.log(2.0), abs=1e-12)


def test_pairwise_sqdist_matches_expansion(rng):
    Z = rng.standard_normal((5, 3))
    expected = ((Z[:, None, :] - Z[None, :, :]) ** 2).sum(-1)
    out = pairwise_sqdist(Tensor(Z)).data
    np.testing.assert_allclose(out, expected, atol=1e-10)
    assert np.all(np.diag(out) == 0.0)


def test_pairwise_dist_subgradient_at_coincident_rows():
    x = Tensor([[1.0, 1.0], [1.0, 1.0], [2.0, 1.0]], requires_grad=True)
    (g,) = grad(pairwise_dist(x).sum(), [x])
    assert np.all(np.isfinite(g))


@pytest.mark.parametrize("shape", [(), (0,), (3,), (2, 3), (2, 0, 4)])
def test_tensor_io_roundtrip(shape, rng):
    arr = rng.standard_normal(shape)
    buf = io.BytesIO()
    write_tensor(buf, arr)
    buf.seek(0)
    out = read_tensor(buf)
    assert out.shape == arr.shape
    assert np.array_equal(out, arr)


def test_tensor_io_little_endian_header():
    buf = io.BytesIO()
    write_tensor(buf, np.array([1.0]))
    assert buf.getvalue() == b'{"shape": [1]}\n' + np.array([1.0], dtype="<f8").tobytes()


@pytest.mark.parametrize("payload", [b"", b"not json\n", b'{"shape": [2]}\n' + b"\x00" * 8, b'{"dims": [1]}\n'])
def test_tensor_io_corrupt(payload):
    with pytest.raises(CorruptTensorError):
        read_tensor(io.BytesIO(payload), label="w")
