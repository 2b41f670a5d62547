import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointslu.autodiff import (Adam, CheckpointError, Graph, Parameter, Params, ShapeError,
                               clip_grad_norm, load_checkpoint, ops, save_checkpoint)
from jointslu.autodiff.checkpoint import decode, encode

from gradcheck import PRIMITIVES, check_params, param_grads


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name):
    for seed in range(5):
        rng = np.random.default_rng(seed)
        params, loss_fn = PRIMITIVES[name](rng)
        assert check_params(params, loss_fn, rng, coords=6).worst < 1e-4


def test_shape_mismatch_names_primitive_and_shapes():
    g = Graph()
    a, b = g.constant(np.zeros((2, 3))), g.constant(np.zeros((3, 2)))
    with pytest.raises(ShapeError, match=r"add: cannot broadcast shapes \(2, 3\) and \(3, 2\)"):
        ops.add(a, b)
    with pytest.raises(ShapeError, match="matmul"):
        ops.matmul(a, a)


def test_leading_axis_broadcast_is_rejected():
    g = Graph()
    with pytest.raises(ShapeError):
        ops.mul(g.constant(np.zeros((2, 3))), g.constant(np.zeros((2, 1))))


def test_nodes_record_in_execution_order():
    params = Params()
    p = params.new("p", np.array([1.0, 2.0]))
    g = Graph()
    x = g.param(p)
    y = ops.tanh(x)
    z = ops.sum(ops.mul(y, y))
    assert g.nodes == [y, g.nodes[1], z]


def test_backward_accumulates_across_calls():
    params = Params()
    p = params.new("p", np.array([0.3, -0.7]))
    g = Graph()
    loss = ops.sum(ops.mul(g.param(p), g.param(p)))
    g.backward(loss)
    first = p.grad.copy()
    g.backward(loss)
    np.testing.assert_allclose(p.grad, 2 * first)
    np.testing.assert_allclose(first, 2 * p.value)


def test_backward_rejects_non_scalar():
    params = Params()
    p = params.new("p", np.ones(3))
    g = Graph()
    with pytest.raises(ShapeError):
        g.backward(ops.tanh(g.param(p)))


def test_parameter_read_twice_sums_both_paths():
    params = Params()
    p = params.new("p", np.array([2.0]))
    grads = param_grads(params, lambda g: ops.sum(ops.add(ops.mul(g.param(p), 3.0), ops.exp(g.param(p)))))
    np.testing.assert_allclose(grads["p"], 3.0 + np.exp(2.0))


def test_untrainable_parameter_gets_no_gradient():
    params = Params()
    p = params.new("p", np.array([1.0]))
    g = Graph()
    loss = ops.sum(ops.mul(g.param(p, trainable=False), 2.0))
    g.backward(loss)
    assert not loss.requires_grad
    assert p.grad[0] == 0.0


def test_log_rejects_non_positive():
    g = Graph()
    with pytest.raises(ValueError):
        ops.log(g.constant(np.array([1.0, 0.0])))


def test_cross_entropy_hand_value():
    # logits [2, 0], target 0, eps 0.1 over two classes: q = [0.9, 0.1]
    g = Graph()
    loss = ops.cross_entropy(g.constant(np.array([2.0, 0.0])), 0, 0.1).item()
    lse = np.log(np.exp(2.0) + 1.0)
    assert loss == pytest.approx(0.9 * (lse - 2.0) + 0.1 * lse, abs=1e-12)
    assert loss == pytest.approx(0.3269280110, abs=1e-9)


def test_cross_entropy_rejects_bad_target():
    g = Graph()
    with pytest.raises(ValueError):
        ops.cross_entropy(g.constant(np.zeros(3)), 3)


def test_adam_first_step_hand_value():
    p = Parameter("w", np.array([1.0, -2.0]))
    opt = Adam([p], lr=0.1)
    opt.step([np.array([0.5, -0.25])])
    # with bias correction the first step is lr * g / (|g| + eps)
    np.testing.assert_allclose(p.value, [1.0 - 0.1 * 0.5 / (0.5 + 1e-8), -2.0 + 0.1 * 0.25 / (0.25 + 1e-8)],
                               rtol=0, atol=1e-15)
    assert opt.t == 1
    opt.step([np.array([0.0, 0.0])])
    assert opt.t == 2


def test_adam_rejects_shape_mismatch():
    p = Parameter("w", np.zeros(2))
    with pytest.raises(ShapeError):
        Adam([p], lr=0.1).step([np.zeros(3)])


def test_adam_leaves_unlisted_parameters():
    a, b = Parameter("a", np.ones(2)), Parameter("b", np.ones(2))
    a.grad[:] = 1.0
    b.grad[:] = 1.0
    Adam([a], lr=0.1).step()
    assert np.all(b.value == 1.0) and np.all(a.value < 1.0)


def test_clip_grad_norm():
    a = Parameter("a", np.zeros(2))
    a.grad[:] = [3.0, 4.0]
    norm = clip_grad_norm([a], 1.0)
    assert norm == pytest.approx(5.0)
    np.testing.assert_allclose(a.grad, [0.6, 0.8])


def test_checkpoint_round_trip(tmp_path):
    arrays = {"w": np.arange(6.0).reshape(2, 3), "b": np.array([np.pi]), "s": np.array(2.5)}
    save_checkpoint(tmp_path / "m.ckpt", arrays, {"kind": "las"})
    back, meta = load_checkpoint(tmp_path / "m.ckpt")
    assert meta == {"kind": "las"}
    for k, v in arrays.items():
        assert back[k].shape == v.shape and np.array_equal(back[k], v)


def test_checkpoint_layout():
    blob = encode({"a": np.array([1.0, 2.0])})
    assert blob.startswith(b"SLUF1\n")
    header, payload = blob[6:].split(b"\x00", 1)
    assert header == b'{"a":{"byte_offset":0,"shape":[2]}}'
    assert payload == np.array([1.0, 2.0], dtype="<f8").tobytes()


def test_checkpoint_errors():
    with pytest.raises(CheckpointError):
        decode(b"nope")
    blob = encode({"a": np.ones(4)})
    with pytest.raises(CheckpointError):
        decode(blob[:-8])


def test_params_load_state_checks_names_and_shapes():
    params = Params()
    params.new("a", np.zeros(2))
    with pytest.raises(KeyError):
        params.load_state({"b": np.zeros(2)})
    with pytest.raises(ShapeError):
        params.load_state({"a": np.zeros(3)})
    with pytest.raises(KeyError):
        params.new("a", np.zeros(1))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.integers(0, 5))
def test_softmax_rows_sum_to_one(values, k):
    g = Graph()
    s = ops.softmax(g.constant(np.array(values))).data
    assert abs(s.sum() - 1.0) < 1e-12 and np.all(s > 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 10_000))
def test_values_stay_finite(n, m, seed):
    rng = np.random.default_rng(seed)
    params = Params()
    p = params.new("p", rng.standard_normal((n, m)) * 30)
    g = Graph()
    loss = ops.cross_entropy(ops.tanh(g.param(p)), rng.integers(0, m, size=n), 0.1)
    g.backward(loss)
    assert np.isfinite(loss.item()) and np.all(np.isfinite(p.grad))
