import threading

import numpy as np
import numpy.testing as npt
import pytest

from conftest import finite_difference
from core import tensor as tc
from core.errors import ContractError, DimensionError, NonFiniteError
from core.tensor import Tape


def grad_of(fn, **leaves):
    """Analytic gradients of the scalar fn(**tensors) for numpy leaves."""
    params = {k: tc.parameter(v, name=k) for k, v in leaves.items()}
    with Tape() as tape:
        root = fn(**params)
    return tape, root, tc.backward(tape, root, params)


def relative(a, b, floor=1e-8):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))


def test_matmul_values():
    eye = tc.constant(np.eye(2))
    col = tc.constant([[3.0], [4.0]])
    npt.assert_array_equal((eye @ col).data, [[3.0], [4.0]])
    a = tc.constant([[1.0, 2.0], [3.0, 4.0]])
    npt.assert_array_equal(tc.matmul(a, tc.constant([[1.0], [1.0]])).data, [[3.0], [7.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError) as err:
        tc.matmul(tc.zeros(2, 3), tc.zeros(2, 3))
    assert "(2, 3)" in str(err.value)


def test_matmul_gradient_matches_finite_differences(rng):
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    _, _, grads = grad_of(lambda A, B: tc.sum(tc.matmul(A, B)), A=a, B=b)
    numeric = finite_difference(lambda v: float(np.sum(v["A"] @ v["B"])), {"A": a, "B": b})
    assert relative(grads["A"], numeric["A"]) < 1e-6
    assert relative(grads["B"], numeric["B"]) < 1e-6


def test_activation_values():
    assert tc.sigmoid(tc.constant([0.0])).item() == 0.5
    assert tc.tanh(tc.constant([0.0])).item() == 0.0


def test_sigmoid_is_stable_at_extremes():
    values = tc.sigmoid(tc.constant([-1000.0, 1000.0])).data
    npt.assert_array_equal(values, [0.0, 1.0])


def test_tanh_derivative_at_point_three():
    eps = 1e-5
    _, _, grads = grad_of(lambda x: tc.sum(tc.tanh(x)), x=np.array([0.3]))
    numeric = (np.tanh(0.3 + eps) - np.tanh(0.3 - eps)) / (2 * eps)
    assert abs(grads["x"][0] - numeric) / abs(numeric) < 1e-6


@pytest.mark.parametrize("op", ["add", "sub", "mul", "tanh", "sigmoid"])
def test_elementwise_gradients(op):
    for trial in range(10):
        r = np.random.default_rng(trial)
        a, b = r.normal(size=(3, 4)), r.normal(size=(3, 4))
        if op in ("tanh", "sigmoid"):
            fn = lambda a, b: tc.sum(tc.elementwise(op, a))  # noqa: E731
            ref = {"tanh": np.tanh, "sigmoid": lambda v: 1 / (1 + np.exp(-v))}[op]
            numeric = finite_difference(lambda v: float(np.sum(ref(v["a"]))), {"a": a, "b": b}, eps=1e-5)
        else:
            fn = lambda a, b: tc.sum(tc.mul(tc.elementwise(op, a, b), tc.elementwise(op, a, b)))  # noqa: E731
            ref = {"add": np.add, "sub": np.subtract, "mul": np.multiply}[op]
            numeric = finite_difference(lambda v: float(np.sum(ref(v["a"], v["b"]) ** 2)), {"a": a, "b": b}, eps=1e-5)
        _, _, grads = grad_of(fn, a=a, b=b)
        assert relative(grads["a"], numeric["a"], 1e-4) < 1e-4
        assert relative(grads["b"], numeric["b"], 1e-4) < 1e-4


def test_bias_row_broadcast_and_gradient():
    x = np.arange(6.0).reshape(2, 3)
    bias = np.array([1.0, 2.0, 3.0])
    _, root, grads = grad_of(lambda x, b: tc.sum(tc.add(x, b)), x=x, b=bias)
    assert root.item() == float(np.sum(x + bias))
    npt.assert_array_equal(grads["b"], [2.0, 2.0, 2.0])


def test_general_broadcast_is_rejected():
    with pytest.raises(DimensionError):
        tc.add(tc.zeros(2, 3), tc.zeros(3, 2))
    with pytest.raises(DimensionError):
        tc.mul(tc.zeros(2, 3), tc.zeros(2))


def test_unknown_elementwise_op():
    with pytest.raises(ContractError):
        tc.elementwise("relu", tc.zeros(2))


def test_reductions():
    assert tc.reductions("mean", tc.constant([1.0, 2.0, 3.0])).item() == 2.0
    npt.assert_array_equal(tc.reductions("sum", tc.constant([[1.0, 2.0], [3.0, 4.0]]), axis=0).data, [4.0, 6.0])
    _, _, grads = grad_of(lambda p: tc.mean(p), p=np.arange(5.0))
    npt.assert_allclose(grads["p"], np.full(5, 0.2))


def test_reduction_axis_out_of_range():
    with pytest.raises(DimensionError):
        tc.sum(tc.zeros(2, 3), axis=2)


def test_backward_of_leaf_is_one():
    p = tc.parameter([4.0], name="p")
    with Tape() as tape:
        pass
    npt.assert_array_equal(tc.backward(tape, p, {"p": p})["p"], [1.0])


def test_backward_square_sum():
    _, _, grads = grad_of(lambda p: tc.sum(tc.mul(p, p)), p=np.array([1.0, 2.0]))
    npt.assert_array_equal(grads["p"], [2.0, 4.0])


def test_backward_rejects_non_scalar_root():
    p = tc.parameter([1.0, 2.0], name="p")
    with Tape() as tape:
        y = tc.tanh(p)
    with pytest.raises(ContractError):
        tc.backward(tape, y, {"p": p})


def test_unreached_leaf_gets_zero_gradient():
    p = tc.parameter([1.0, 2.0], name="p")
    q = tc.parameter(np.ones((2, 2)), name="q")
    with Tape() as tape:
        root = tc.sum(p)
    grads = tc.backward(tape, root, {"p": p, "q": q})
    npt.assert_array_equal(grads["q"], np.zeros((2, 2)))
    assert grads["q"].shape == q.shape


def test_backward_is_linear(rng):
    a, b = 1.7, -0.4
    x = rng.normal(size=(3, 3))

    def l1(p):
        return tc.sum(tc.tanh(p))

    def l2(p):
        return tc.sum(tc.mul(p, p))

    _, _, g1 = grad_of(l1, p=x)
    _, _, g2 = grad_of(l2, p=x)
    _, _, g = grad_of(lambda p: tc.add(tc.scale(l1(p), a), tc.scale(l2(p), b)), p=x)
    npt.assert_allclose(g["p"], a * g1["p"] + b * g2["p"], atol=1e-10, rtol=0)


def test_replaying_a_tape_is_bitwise_stable(rng):
    p = tc.parameter(rng.normal(size=(2, 3)), name="p")
    q = tc.parameter(rng.normal(size=(3, 2)), name="q")
    with Tape() as tape:
        root = tc.sum(tc.sigmoid(tc.matmul(p, q)))
    first = tc.backward(tape, root, {"p": p, "q": q})
    second = tc.backward(tape, root, {"p": p, "q": q})
    for name in first:
        assert np.array_equal(first[name], second[name])


def test_gradient_shapes_match_leaves(rng):
    shapes = {"w": (4, 3), "b": (3,), "x": (2, 4)}
    values = {k: rng.normal(size=s) for k, s in shapes.items()}
    _, _, grads = grad_of(lambda w, b, x: tc.mean(tc.tanh(tc.add(tc.matmul(x, w), b))), **values)
    for name, shape in shapes.items():
        assert grads[name].shape == shape


def test_tensors_are_read_only():
    t = tc.constant([1.0, 2.0])
    with pytest.raises(ValueError):
        t.data[0] = 5.0


def test_non_finite_values_raise():
    with pytest.raises(NonFiniteError):
        tc.constant([np.nan])
    big = tc.constant([1e200])
    with pytest.raises(NonFiniteError):
        tc.mul(big, big)


def test_no_recording_without_tape():
    p = tc.parameter([1.0], name="p")
    tc.tanh(p)
    with Tape() as tape:
        tc.tanh(tc.constant([1.0]))
    assert len(tape) == 0


def test_tapes_are_independent_across_threads():
    recorded = {}

    def work(label):
        with Tape() as tape:
            p = tc.parameter(np.ones(3), name=label)
            tc.sum(tc.tanh(p))
        recorded[label] = len(tape)

    threads = [threading.Thread(target=work, args=(f"p{i}",)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert set(recorded.values()) == {2}


def test_sequence_plumbing_gradients(rng):
    seq = rng.normal(size=(2, 3, 4))
    _, _, grads = grad_of(
        lambda s: tc.sum(tc.stack_steps([tc.tanh(tc.take_step(s, t)) for t in (2, 0)])), s=seq
    )
    expected = np.zeros_like(seq)
    for t in (2, 0):
        expected[:, t, :] = 1 - np.tanh(seq[:, t, :]) ** 2
    npt.assert_allclose(grads["s"], expected)


def test_softmax_cross_entropy_values_and_gradient(rng):
    logits = rng.normal(size=(5, 4))
    targets = np.array([0, 3, 1, 1, 2])
    _, root, grads = grad_of(lambda z: tc.sum(tc.softmax_cross_entropy(z, targets)), z=logits)

    def nll(v):
        z = v["z"]
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return float(-logp[np.arange(5), targets].sum())

    assert root.item() == pytest.approx(nll({"z": logits}), rel=1e-12)
    numeric = finite_difference(nll, {"z": logits}, eps=1e-5)
    assert relative(grads["z"], numeric["z"], 1e-4) < 1e-4


def test_softmax_cross_entropy_rejects_bad_targets():
    with pytest.raises(ContractError):
        tc.softmax_cross_entropy(tc.zeros(2, 3), np.array([0, 3]))
    with pytest.raises(DimensionError):
        tc.softmax_cross_entropy(tc.zeros(2, 3), np.array([0]))
