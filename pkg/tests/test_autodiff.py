import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from segaug.autodiff import (
    AdamState,
    DimensionError,
    GraphError,
    NumericError,
    Tape,
    Tensor,
    adam_step,
    backward,
    no_grad,
    ops,
)
from segaug.autodiff.serialize import FormatError, load_container, read_tensor, save_container, tensor_bytes, write_tensor
from segaug.selfcheck import adam_scalar_oracle, conv2d_loop


def leaf(x, dtype=np.float64):
    return Tensor(np.asarray(x, dtype=dtype), requires_grad=True, dtype=dtype)


# -- tensor / tape -------------------------------------------------------------


def test_square_gradient(f64):
    x = leaf(3.0)
    (x * x).backward()
    assert x.grad == pytest.approx(6.0)


def test_relu_subgradient(f64):
    x = leaf([-1.0, 2.0])
    ops.sum(ops.relu(x)).backward()
    np.testing.assert_array_equal(x.grad, [0.0, 1.0])


def test_relu_derivative_at_zero_is_zero(f64):
    x = leaf([0.0])
    ops.sum(ops.relu(x)).backward()
    assert x.grad[0] == 0.0


def test_backward_populates_every_reachable_leaf(f64):
    a, b, c = leaf([1.0, 2.0]), leaf([3.0, 4.0]), leaf([5.0, 6.0])
    unused = leaf([1.0])
    loss = ops.sum(ops.mul(ops.add(a, b), c))
    loss.backward()
    np.testing.assert_allclose(a.grad, c.data)
    np.testing.assert_allclose(b.grad, c.data)
    np.testing.assert_allclose(c.grad, a.data + b.data)
    assert unused.grad is None


def test_tape_topological_order(f64):
    a = leaf([1.0, 2.0])
    h = ops.tanh(ops.mul(a, a))
    y = ops.sum(ops.add(h, a))
    tape = Tape.from_seed(y)
    pos = {id(n): i for i, n in enumerate(tape)}
    for node in tape:
        for p in node.parents:
            if id(p) in pos:
                assert pos[id(p)] < pos[id(node)]


def test_seed_not_on_tape_is_graph_error(f64):
    a = leaf([1.0])
    y1 = ops.sum(ops.mul(a, a))
    y2 = ops.sum(ops.add(a, a))
    with pytest.raises(GraphError):
        backward(y2, Tape.from_seed(y1))


def test_non_scalar_seed_is_graph_error(f64):
    a = leaf([1.0, 2.0])
    with pytest.raises(GraphError):
        ops.mul(a, a).backward()


def test_no_grad_records_nothing(f64):
    a = leaf([1.0])
    with no_grad():
        y = ops.mul(a, a)
    assert not y.requires_grad and y.parents == ()


def test_grad_accumulates_across_backward_calls(f64):
    a = leaf([2.0])
    ops.sum(ops.mul(a, a)).backward()
    ops.sum(ops.mul(a, a)).backward()
    assert a.grad[0] == pytest.approx(8.0)


def test_grad_shape_matches_data(f64):
    a = leaf(np.ones((2, 3)))
    b = leaf(np.ones((3,)))
    ops.sum(ops.mul(a, b)).backward()
    assert a.grad.shape == a.shape and b.grad.shape == b.shape


def test_non_finite_forward_is_numeric_error(f64):
    with pytest.raises(NumericError):
        ops.log(Tensor(np.array([0.0, 1.0])))
    with pytest.raises(NumericError):
        ops.exp(Tensor(np.array([1e4])))


# -- conv / pooling / upsampling ---------------------------------------------


def test_conv_identity_kernel(f64):
    x = Tensor(np.ones((1, 1, 3, 3)))
    w = Tensor(np.ones((1, 1, 1, 1)))
    np.testing.assert_array_equal(ops.conv2d(x, w, None, 1, 0).data, x.data)


def test_conv_output_shape():
    x = Tensor(np.zeros((1, 3, 8, 8)))
    w = Tensor(np.zeros((4, 3, 4, 4)))
    assert ops.conv2d(x, w, None, 2, 1).shape == (1, 4, 4, 4)


def test_conv_channel_mismatch_is_dimension_error():
    with pytest.raises(DimensionError):
        ops.conv2d(Tensor(np.zeros((1, 2, 5, 5))), Tensor(np.zeros((1, 3, 3, 3))))


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(1, 2),
    c=st.integers(1, 3),
    o=st.integers(1, 3),
    size=st.integers(4, 9),
    k=st.sampled_from([1, 2, 3, 4]),
    stride=st.integers(1, 2),
    pad=st.integers(0, 2),
    seed=st.integers(0, 2**16),
)
def test_conv_matches_loop_oracle(n, c, o, size, k, stride, pad, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((n, c, size, size))
    w = r.standard_normal((o, c, k, k))
    b = r.standard_normal(o)
    got = ops.conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), Tensor(b, dtype=np.float64), stride, pad)
    np.testing.assert_allclose(got.data, conv2d_loop(x, w, b, stride, pad), atol=1e-6)


def test_upsample_single_value():
    y = ops.upsample_nearest2x(Tensor(np.full((1, 1, 1, 1), 5.0)))
    np.testing.assert_array_equal(y.data, np.full((1, 1, 2, 2), 5.0))


def test_upsample_definition():
    y = ops.upsample_nearest2x(Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]])))
    expected = [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
    np.testing.assert_array_equal(y.data[0, 0], expected)


def test_upsample_sum_gradient_is_four(f64):
    x = leaf(np.random.default_rng(0).standard_normal((2, 3, 4, 4)))
    ops.sum(ops.upsample_nearest2x(x)).backward()
    np.testing.assert_array_equal(x.grad, np.full(x.shape, 4.0))


def test_avg_pool_constant_and_mean():
    c = ops.avg_pool2d(Tensor(np.full((1, 2, 6, 6), 3.5)), 2, 2)
    np.testing.assert_allclose(c.data, 3.5)
    m = ops.avg_pool2d(Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]])), 2, 2)
    np.testing.assert_allclose(m.data, [[[[2.5]]]])


def test_avg_pool_loop_oracle(rng):
    x = rng.standard_normal((2, 3, 7, 7))
    got = ops.avg_pool2d(Tensor(x, dtype=np.float64), 3, 2).data
    ref = np.zeros((2, 3, 3, 3))
    for i in range(3):
        for j in range(3):
            ref[:, :, i, j] = x[:, :, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3].mean(axis=(2, 3))
    np.testing.assert_allclose(got, ref, atol=1e-6)


def test_avg_pool_window_too_large():
    with pytest.raises(DimensionError):
        ops.avg_pool2d(Tensor(np.zeros((1, 1, 2, 2))), 3, 1)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 4)), elements=st.floats(-5, 5)))
def test_softmax_rows_sum_to_one(x):
    p = ops.softmax(Tensor(x, dtype=np.float64), axis=1).data
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(p >= 0)


# -- adam --------------------------------------------------------------------


def test_adam_zero_gradient_leaves_params():
    p = np.array([1.0, -2.0])
    st_ = AdamState(lr=1e-3, beta1=0.0, beta2=0.9)
    adam_step([p], [np.zeros(2)], st_)
    np.testing.assert_array_equal(p, [1.0, -2.0])
    assert st_.t == 1


def test_adam_first_step_closed_form():
    p = np.array([0.0])
    st_ = AdamState(lr=1e-4, beta1=0.0, beta2=0.9, eps=1e-8)
    adam_step([p], [np.array([2.0])], st_)
    assert p[0] == pytest.approx(-1e-4 * 2.0 / (2.0 + 1e-8), abs=1e-18)


def test_adam_ten_step_trace_matches_scalar_oracle():
    # scalar quadratic f(x) = (x - 3)^2, gradient 2 (x - 3)
    p = np.array([0.5])
    st_ = AdamState(lr=1e-4, beta1=0.0, beta2=0.9, eps=1e-8)
    grads, got = [], []
    for _ in range(10):
        g = 2.0 * (p[0] - 3.0)
        grads.append(g)
        adam_step([p], [np.array([g])], st_)
        got.append(p[0])
    ref = adam_scalar_oracle(0.5, grads, 1e-4, 0.0, 0.9, 1e-8)
    np.testing.assert_allclose(got, ref, rtol=0, atol=1e-12)


def test_adam_non_finite_gradient_applies_nothing():
    p1, p2 = np.array([1.0]), np.array([2.0])
    st_ = AdamState(lr=0.1)
    with pytest.raises(NumericError):
        adam_step([p1, p2], [np.array([1.0]), np.array([np.nan])], st_)
    assert p1[0] == 1.0 and p2[0] == 2.0 and st_.t == 0


def test_adam_moments_track_parameter_shapes():
    ps = [np.zeros((2, 3)), np.zeros(4)]
    st_ = AdamState(lr=0.1)
    for t in range(3):
        adam_step(ps, [np.ones((2, 3)), np.ones(4)], st_)
        assert st_.t == t + 1
        assert [m.shape for m in st_.m] == [p.shape for p in ps] == [v.shape for v in st_.v]


# -- serialization -----------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(
    arrays(
        st.sampled_from([np.float32, np.float64, np.uint8]),
        st.lists(st.integers(0, 4), min_size=0, max_size=4).map(tuple),
    )
)
def test_tensor_roundtrip_bitwise(arr):
    out = read_tensor(io.BytesIO(tensor_bytes(arr)))
    assert out.dtype == arr.dtype and out.shape == arr.shape
    assert out.tobytes() == arr.tobytes()


def test_truncated_tensor_is_format_error():
    blob = tensor_bytes(np.arange(10, dtype=np.float32))
    for cut in (2, 6, len(blob) - 1):
        with pytest.raises(FormatError):
            read_tensor(io.BytesIO(blob[:cut]))


def test_bad_magic_is_format_error():
    buf = io.BytesIO()
    write_tensor(buf, np.zeros(2, dtype=np.float32))
    data = b"XXXX" + buf.getvalue()[4:]
    with pytest.raises(FormatError):
        read_tensor(io.BytesIO(data))


def test_container_roundtrip(tmp_path):
    entries = {"a.weight": np.arange(6, dtype=np.float32).reshape(2, 3), "m": np.array([1, 2], dtype=np.uint8)}
    save_container(tmp_path / "c.rgt", {"k": "v", "n": "3"}, entries)
    header, back = load_container(tmp_path / "c.rgt")
    assert header == {"k": "v", "n": "3"}
    assert set(back) == set(entries)
    for k in entries:
        assert back[k].tobytes() == entries[k].tobytes()
