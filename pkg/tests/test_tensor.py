import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmnet import _pykernels, kernels
from mmnet import tensor as T
from mmnet.errors import DimensionError, DoubleBackwardError, GeometryError, LabelError, NonFiniteError


def conv_oracle(x, w, b, stride, pad):
    """Quadruple loop over (co, i, j, taps)."""
    c_in, h, wd = x.shape
    c_out, _, k, _ = w.shape
    xp = np.zeros((c_in, h + 2 * pad, wd + 2 * pad))
    xp[:, pad : pad + h, pad : pad + wd] = x
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((c_out, ho, wo))
    for co in range(c_out):
        for i in range(ho):
            for j in range(wo):
                acc = b[co]
                for ci in range(c_in):
                    for di in range(k):
                        for dj in range(k):
                            acc += w[co, ci, di, dj] * xp[ci, i * stride + di, j * stride + dj]
                out[co, i, j] = acc
    return out


@settings(max_examples=25, deadline=None)
@given(
    c_in=st.integers(1, 3), c_out=st.integers(1, 3), h=st.integers(3, 8), w=st.integers(3, 8),
    k=st.sampled_from([1, 3]), stride=st.integers(1, 2), pad=st.integers(0, 1), seed=st.integers(0, 2**31),
)
def test_conv2d_matches_loop_oracle(c_in, c_out, h, w, k, stride, pad, seed):
    r = np.random.default_rng(seed)
    x, wt, b = r.standard_normal((c_in, h, w)), r.standard_normal((c_out, c_in, k, k)), r.standard_normal(c_out)
    ref = conv_oracle(x, wt, b, stride, pad)
    for algo in ("gemm", "direct"):
        out = T.conv2d(T.Tensor(x), T.Tensor(wt), T.Tensor(b), stride, pad, algo).data
        np.testing.assert_allclose(out, ref, rtol=0, atol=1e-10)


def test_conv2d_backward_matches_direct(rng):
    x = rng.standard_normal((3, 9, 9))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    grads = {}
    for algo in ("gemm", "direct"):
        ts = [T.Tensor(a, requires_grad=True) for a in (x, w, b)]
        out = T.conv2d(*ts, stride=2, padding=1, algorithm=algo)
        T.backward(T.tsum(T.mul(out, T.Tensor(np.arange(out.size, dtype=float).reshape(out.shape)))))
        grads[algo] = [t.grad for t in ts]
    for a, d in zip(grads["gemm"], grads["direct"]):
        np.testing.assert_allclose(a, d, atol=1e-10)


def test_conv2d_errors():
    x = T.Tensor(np.zeros((2, 4, 4)))
    with pytest.raises(DimensionError):
        T.conv2d(x, T.Tensor(np.zeros((1, 3, 3, 3))), T.Tensor(np.zeros(1)))
    with pytest.raises(GeometryError):
        T.conv2d(T.Tensor(np.zeros((2, 2, 2))), T.Tensor(np.zeros((1, 2, 3, 3))), T.Tensor(np.zeros(1)))
    with pytest.raises(GeometryError):
        T.conv2d(x, T.Tensor(np.zeros((1, 2, 1, 1))), T.Tensor(np.zeros(1)), stride=0)


def test_maxpool_first_argmax_on_ties():
    x = T.Tensor(np.ones((1, 2, 2)), requires_grad=True)
    out = T.spatial_maxpool2(x)
    assert out.shape == (1, 1, 1)
    T.backward(T.tsum(out))
    np.testing.assert_array_equal(x.grad[0], [[1.0, 0.0], [0.0, 0.0]])


def test_maxpool_values_and_routing(rng):
    a = rng.standard_normal((3, 6, 8))
    x = T.Tensor(a, requires_grad=True)
    out = T.spatial_maxpool2(x)
    ref = a.reshape(3, 3, 2, 4, 2).max(axis=(2, 4))
    np.testing.assert_array_equal(out.data, ref)
    T.backward(T.tsum(out))
    assert x.grad.sum() == out.size
    assert np.all(a[x.grad == 1] == np.repeat(np.repeat(ref, 2, 1), 2, 2)[x.grad == 1])


def test_maxpool_odd_size_rejected():
    with pytest.raises(GeometryError):
        T.spatial_maxpool2(T.Tensor(np.zeros((1, 3, 4))))


def test_channel_max_tie_goes_to_first_channel():
    x = T.Tensor(np.zeros((3, 2, 2)), requires_grad=True)
    T.backward(T.tsum(T.channel_max(x)))
    assert np.all(x.grad[0] == 1) and np.all(x.grad[1:] == 0)


def test_channel_avg(rng):
    a = rng.standard_normal((5, 3, 4))
    np.testing.assert_allclose(T.channel_avg(T.Tensor(a)).data, a.mean(0, keepdims=True))


def test_double_backward_raises():
    x = T.Tensor(np.array([1.0, 2.0]), requires_grad=True)
    loss = T.tsum(T.mul(x, x))
    T.backward(loss)
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])
    with pytest.raises(DoubleBackwardError):
        T.backward(loss)


def test_stale_leaf_grad_raises():
    x = T.Tensor(np.array([1.0, 2.0]), requires_grad=True)
    T.backward(T.tsum(x))
    with pytest.raises(DoubleBackwardError):
        T.backward(T.tsum(T.mul_scalar(x, 2.0)))
    x.zero_grad()
    T.backward(T.tsum(T.mul_scalar(x, 2.0)))
    np.testing.assert_array_equal(x.grad, [2.0, 2.0])


def test_backward_needs_scalar():
    x = T.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(DimensionError):
        T.backward(T.mul_scalar(x, 2.0))


def test_shared_input_accumulates():
    x = T.Tensor(np.array(3.0), requires_grad=True)
    y = T.add(T.mul(x, x), x)
    T.backward(y)
    assert x.grad == pytest.approx(7.0)


def test_non_finite_forward_raises():
    with pytest.raises(NonFiniteError):
        T.add(T.Tensor(np.array([np.inf])), T.Tensor(np.array([1.0])))


def test_no_grad_records_nothing():
    x = T.Tensor(np.ones(2), requires_grad=True)
    with T.no_grad():
        y = T.mul(x, x)
    assert not y.requires_grad and y.is_leaf


def test_graph_is_topological():
    a = T.Tensor(np.ones(2), requires_grad=True)
    b = T.Tensor(np.ones(2), requires_grad=True)
    out = T.tsum(T.relu(T.add(a, b)))
    g = T.Graph(out)
    assert [k for k, _, _ in g.nodes] == ["add", "relu", "sum"]
    for _, ids, t in g.nodes:
        assert all(i < g.tensors.index(t) for i in ids)
    assert len(g.leaves) == 2


def test_sigmoid_saturation_stays_open():
    out = T.sigmoid(T.Tensor(np.array([-1000.0, 0.0, 1000.0]))).data
    assert 0 < out[0] and out[2] < 1 and out[1] == 0.5


def test_gelu_reference_values():
    out = T.gelu(T.Tensor(np.array([-1.0, 0.0, 1.0]))).data
    np.testing.assert_allclose(out, [-0.15865525393145707, 0.0, 0.8413447460685429], rtol=1e-14)


def test_cross_entropy_value_and_label_check():
    logits = np.array([1.0, 2.0, 3.0])
    ref = -np.log(np.exp(3.0) / np.exp(logits).sum())
    assert T.cross_entropy(T.Tensor(logits), 2).item() == pytest.approx(ref, rel=1e-14)
    with pytest.raises(LabelError):
        T.cross_entropy(T.Tensor(logits), 3)
    with pytest.raises(LabelError):
        T.cross_entropy(T.Tensor(logits), -1)


def test_softmax_extreme_logits_finite():
    p = T.softmax(T.Tensor(np.array([[1000.0, 0.0, -1000.0]]))).data
    np.testing.assert_allclose(p.sum(), 1.0)


def test_layer_norm_channel_axis(rng):
    a = rng.standard_normal((4, 3, 3))
    out = T.layer_norm(T.Tensor(a), T.Tensor(np.ones(4)), T.Tensor(np.zeros(4)), axis=0).data
    ref = (a - a.mean(0)) / np.sqrt(a.var(0) + 1e-5)
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_map_layer_norm_whole_map_statistics(rng):
    a = rng.standard_normal((3, 4, 5))
    g, b = rng.standard_normal(3), rng.standard_normal(3)
    out = T.map_layer_norm(T.Tensor(a), T.Tensor(g), T.Tensor(b)).data
    ref = (a - a.mean()) / np.sqrt(a.var() + 1e-5) * g[:, None, None] + b[:, None, None]
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_map_layer_norm_shape_checks(rng):
    with pytest.raises(DimensionError):
        T.map_layer_norm(T.Tensor(np.zeros((2, 3))), T.Tensor(np.ones(2)), T.Tensor(np.zeros(2)))
    with pytest.raises(DimensionError):
        T.map_layer_norm(T.Tensor(np.zeros((2, 3, 3))), T.Tensor(np.ones(3)), T.Tensor(np.zeros(3)))


def test_rms_normalize(rng):
    a = rng.standard_normal((2, 3, 3)) * 7.0
    out = T.rms_normalize(T.Tensor(a)).data
    assert np.sqrt(np.mean(out**2)) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(out * np.sqrt(np.mean(a**2)), a, atol=1e-12)
    assert np.all(T.rms_normalize(T.Tensor(np.zeros((2, 2, 2)))).data == 0.0)


def test_broadcast_mul_validates_shapes():
    with pytest.raises(DimensionError):
        T.broadcast_mul(T.Tensor(np.ones((2, 4, 4))), T.Tensor(np.ones((1, 2, 2))))
    out = T.broadcast_mul(T.Tensor(np.ones((2, 2, 2))), T.Tensor(np.full((1, 2, 2), 3.0)))
    assert np.all(out.data == 3.0)


def test_matmul_shape_error():
    with pytest.raises(DimensionError):
        T.matmul(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((2, 3))))


def test_forward_is_deterministic(rng):
    x, w, b = rng.standard_normal((3, 10, 10)), rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4)
    a = T.conv2d(T.Tensor(x), T.Tensor(w), T.Tensor(b), 2, 1).data
    c = T.conv2d(T.Tensor(x), T.Tensor(w), T.Tensor(b), 2, 1).data
    assert a.tobytes() == c.tobytes()


@pytest.mark.skipif("cython" not in kernels.backends(), reason="extension not built")
@pytest.mark.parametrize("stride,pad,k", [(1, 0, 1), (2, 1, 3), (1, 1, 3), (2, 0, 1)])
def test_backends_agree(rng, stride, pad, k):
    cy = kernels.backends()["cython"]
    x = rng.standard_normal((5, 12, 10))
    cols_py = _pykernels.im2col(x, k, stride, pad)
    assert np.array_equal(cols_py, cy.im2col(x, k, stride, pad))
    dcols = rng.standard_normal(cols_py.shape)
    assert np.array_equal(_pykernels.col2im(dcols, x.shape, k, stride, pad), cy.col2im(dcols, x.shape, k, stride, pad))
    w, b = rng.standard_normal((3, 5, k, k)), rng.standard_normal(3)
    np.testing.assert_allclose(cy.conv2d_direct(x, w, b, stride, pad),
                               _pykernels.conv2d_direct(x, w, b, stride, pad), atol=1e-12)
    for a, c in zip(_pykernels.maxpool2_forward(x), cy.maxpool2_forward(x)):
        assert np.array_equal(a, c)
    out, idx = _pykernels.maxpool2_forward(x)
    g = rng.standard_normal(out.shape)
    assert np.array_equal(_pykernels.maxpool2_backward(g, idx, 12, 10), cy.maxpool2_backward(g, np.asarray(idx), 12, 10))
    for a, c in zip(_pykernels.channel_max_forward(x), cy.channel_max_forward(x)):
        assert np.array_equal(a, c)
    out, idx = _pykernels.channel_max_forward(x)
    g = rng.standard_normal(out.shape)
    assert np.array_equal(_pykernels.channel_max_backward(g, idx, 5), cy.channel_max_backward(g, np.asarray(idx), 5))


def test_pure_python_backend_selected_by_env(monkeypatch):
    import importlib

    monkeypatch.setenv("MMNET_PURE_PYTHON", "1")
    try:
        mod = importlib.reload(kernels)
        assert mod.BACKEND == "python"
    finally:
        monkeypatch.delenv("MMNET_PURE_PYTHON")
        importlib.reload(kernels)
