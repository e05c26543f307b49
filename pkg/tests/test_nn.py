"""Forward contracts and finite-difference gradient checks for the nn primitives."""

import math

import numpy as np
import pytest

from signalkit import nn
from conftest import check_gradients, rel_err


def t(x):
    return nn.as_tensor(np.asarray(x, dtype=np.float64))


def p(x):
    return nn.parameter(np.asarray(x, dtype=np.float64))


# ---------------------------------------------------------------------------
# dense
# ---------------------------------------------------------------------------

def test_dense_identity():
    x = t([1.0, -2.0, 3.0])
    out = nn.dense_forward(x, t(np.eye(3)), t(np.zeros(3)))
    assert np.array_equal(out.data, x.data)


def test_dense_hand_example():
    out = nn.dense_forward(t([1.0, 1.0]), t([[1.0, 2.0], [3.0, 4.0]]), t([1.0, 1.0]))
    assert np.allclose(out.data, [4.0, 8.0])


def test_dense_shape_mismatch():
    with pytest.raises(ValueError):
        nn.dense_forward(t([1.0, 2.0, 3.0]), t([[1.0, 2.0]]), t([0.0]))
    with pytest.raises(ValueError):
        nn.dense_forward(t([1.0, 2.0]), t([[1.0, 2.0]]), t([0.0, 0.0]))


def test_dense_gradient_outer_product_structure():
    rng = np.random.default_rng(0)
    x = t(rng.normal(size=4))
    W = p(rng.normal(size=(3, 4)))
    b = p(rng.normal(size=3))
    loss = nn.tensor_sum(nn.dense_forward(x, W, b))
    loss.backward()
    assert np.allclose(W.grad, np.outer(np.ones(3), x.data))
    assert np.allclose(b.grad, np.ones(3))


def test_dense_gradients_match_fd():
    rng = np.random.default_rng(1)
    for _ in range(20):
        m, k = rng.integers(1, 6, size=2)
        batched = rng.random() < 0.5
        shape = (int(rng.integers(1, 4)), k) if batched else (k,)
        x = p(rng.normal(size=shape))
        W = p(rng.normal(size=(m, k)))
        b = p(rng.normal(size=m))
        coefs = rng.normal(size=shape[:-1] + (m,))

        def loss():
            return _weighted(nn.dense_forward(x, W, b), coefs)

        assert check_gradients(loss, [x, W, b], rng) < 1e-6


def _weighted(out, coefs):
    # project onto fixed random coefficients so the scalar loss exercises all entries
    flat = nn.reshape(out, (out.data.size,))
    return nn.tensor_sum(nn.matmul(nn.reshape(flat, (1, out.data.size)),
                                   nn.as_tensor(np.asarray(coefs, dtype=np.float64).reshape(-1, 1))))


# ---------------------------------------------------------------------------
# conv1d
# ---------------------------------------------------------------------------

def test_conv1d_kernel_one_identity():
    x = t([[1.0, 2.0, 3.0, 4.0]])
    out = nn.conv1d_forward(x, t([[[1.0]]]), t([0.0]))
    assert np.array_equal(out.data, x.data)


def test_conv1d_hand_example():
    out = nn.conv1d_forward(t([[1.0, 2.0, 3.0, 4.0]]), t([[[1.0, 0.0, -1.0]]]), t([0.0]))
    assert np.allclose(out.data, [[-2.0, -2.0]])


def test_conv1d_too_short():
    with pytest.raises(ValueError, match="shorter than kernel"):
        nn.conv1d_forward(t([[1.0, 2.0]]), t([[[1.0, 0.0, -1.0]]]), t([0.0]))


def test_conv1d_matches_direct_sum():
    rng = np.random.default_rng(2)
    for _ in range(10):
        cin, cout, k = rng.integers(1, 4, size=3)
        L = int(k + rng.integers(0, 5))
        x = rng.normal(size=(cin, L))
        kern = rng.normal(size=(cout, cin, k))
        bias = rng.normal(size=cout)
        out = nn.conv1d_forward(t(x), t(kern), t(bias)).data
        for c in range(cout):
            for pos in range(L - k + 1):
                ref = bias[c] + sum(kern[c, i, j] * x[i, pos + j]
                                    for i in range(cin) for j in range(k))
                assert abs(out[c, pos] - ref) < 1e-12


def test_conv1d_gradients_match_fd():
    rng = np.random.default_rng(3)
    for _ in range(20):
        cin, cout, k = (int(v) for v in rng.integers(1, 4, size=3))
        L = int(k + rng.integers(0, 4))
        batched = rng.random() < 0.5
        xshape = (int(rng.integers(1, 3)), cin, L) if batched else (cin, L)
        x = p(rng.normal(size=xshape))
        kern = p(rng.normal(size=(cout, cin, k)))
        bias = p(rng.normal(size=cout))
        coefs = rng.normal(size=xshape[:-2] + (cout, L - k + 1))

        def loss():
            return _weighted(nn.conv1d_forward(x, kern, bias), coefs)

        assert check_gradients(loss, [x, kern, bias], rng) < 1e-6


# ---------------------------------------------------------------------------
# maxpool
# ---------------------------------------------------------------------------

def test_maxpool_hand_example():
    out = nn.maxpool1d(t([[1.0, 3.0, 2.0, 2.0]]))
    assert np.array_equal(out.data, [[3.0, 2.0]])


def test_maxpool_tie_routes_to_first_index():
    x = p([[5.0, 5.0]])
    out = nn.maxpool1d(x)
    assert np.array_equal(out.data, [[5.0]])
    nn.tensor_sum(out).backward()
    assert np.array_equal(x.grad, [[1.0, 0.0]])


def test_maxpool_odd_length_drops_tail():
    out = nn.maxpool1d(t([[1.0, 2.0, 3.0, 4.0, 99.0]]))
    assert out.data.shape == (1, 2)
    assert np.array_equal(out.data, [[2.0, 4.0]])


def test_maxpool_too_short():
    with pytest.raises(ValueError, match="length >= 2"):
        nn.maxpool1d(t([[1.0]]))


def test_maxpool_gradients_match_fd():
    rng = np.random.default_rng(4)
    for _ in range(20):
        c = int(rng.integers(1, 4))
        L = int(rng.integers(2, 9))
        x = p(rng.normal(size=(c, L)))
        coefs = rng.normal(size=(c, L // 2))

        def loss():
            return _weighted(nn.maxpool1d(x), coefs)

        assert check_gradients(loss, [x], rng) < 1e-6


# ---------------------------------------------------------------------------
# softmax
# ---------------------------------------------------------------------------

def test_softmax_uniform_on_equal_logits():
    out = nn.softmax(t([2.0, 2.0, 2.0]))
    assert np.allclose(out.data, [1 / 3] * 3, atol=1e-15)


def test_softmax_shift_invariance():
    rng = np.random.default_rng(5)
    for _ in range(50):
        logits = rng.normal(size=int(rng.integers(2, 8)))
        c = float(rng.normal() * 10)
        a = nn.softmax(t(logits)).data
        b = nn.softmax(t(logits + c)).data
        assert rel_err(a, b) < 1e-12


def test_softmax_hand_example():
    out = nn.softmax(t([0.0, math.log(3.0)]))
    assert np.allclose(out.data, [0.25, 0.75], atol=1e-15)


def test_softmax_simplex_contract():
    rng = np.random.default_rng(6)
    for _ in range(50):
        logits = rng.normal(size=int(rng.integers(1, 10))) * rng.uniform(0.1, 50)
        out = nn.softmax(t(logits)).data
        assert abs(out.sum() - 1.0) <= 1e-12
        assert np.all(out > 0.0)


def test_softmax_gradients_match_fd():
    rng = np.random.default_rng(7)
    for _ in range(20):
        shape = (int(rng.integers(2, 5)),) if rng.random() < 0.5 else (2, int(rng.integers(2, 5)))
        x = p(rng.normal(size=shape))
        coefs = rng.normal(size=shape)

        def loss():
            return _weighted(nn.softmax(x), coefs)

        assert check_gradients(loss, [x], rng) < 1e-6


# ---------------------------------------------------------------------------
# multi-head self-attention
# ---------------------------------------------------------------------------

def _attn_params(rng, d, h):
    return nn.init_attention(rng, d, h)


def test_attention_identical_nodes_give_identical_rows():
    rng = np.random.default_rng(8)
    for _ in range(50):
        d, h = 8, 2
        params = _attn_params(rng, d, h)
        row = rng.normal(size=d)
        n = int(rng.integers(2, 6))
        nodes = np.tile(row, (n, 1))
        out = nn.multi_head_self_attention(t(nodes), params).data
        assert rel_err(out, np.tile(out[0], (n, 1))) < 1e-12


def test_attention_permutation_equivariance():
    rng = np.random.default_rng(9)
    for _ in range(50):
        d, h = 8, 4
        params = _attn_params(rng, d, h)
        n = int(rng.integers(2, 7))
        nodes = rng.normal(size=(n, d))
        perm = rng.permutation(n)
        out = nn.multi_head_self_attention(t(nodes), params).data
        out_p = nn.multi_head_self_attention(t(nodes[perm]), params).data
        assert rel_err(out[perm], out_p) < 1e-12


def test_attention_matches_scalar_reference():
    # N=2, d=2, h=1: independent straight-line computation
    rng = np.random.default_rng(10)
    wq = rng.normal(size=(1, 2, 2))
    wk = rng.normal(size=(1, 2, 2))
    wv = rng.normal(size=(1, 2, 2))
    wo = rng.normal(size=(2, 2))
    params = nn.AttentionParams(wq=p(wq), wk=p(wk), wv=p(wv), wo=p(wo))
    nodes = rng.normal(size=(2, 2))

    q = nodes @ wq[0]
    k = nodes @ wk[0]
    v = nodes @ wv[0]
    scores = q @ k.T / math.sqrt(2.0)
    e = np.exp(scores - scores.max(axis=1, keepdims=True))
    a = e / e.sum(axis=1, keepdims=True)
    ref = (a @ v) @ wo.T

    out = nn.multi_head_self_attention(t(nodes), params).data
    assert rel_err(out, ref) < 1e-12


def test_attention_returns_weights():
    rng = np.random.default_rng(11)
    params = _attn_params(rng, 8, 2)
    nodes = rng.normal(size=(3, 8))
    out, weights = nn.multi_head_self_attention(t(nodes), params, return_weights=True)
    assert weights.data.shape == (2, 3, 3)
    assert np.allclose(weights.data.sum(axis=-1), 1.0)
    assert out.data.shape == (3, 8)


def test_attention_dim_mismatch():
    rng = np.random.default_rng(12)
    params = _attn_params(rng, 8, 2)
    with pytest.raises(ValueError, match="dim mismatch"):
        nn.multi_head_self_attention(t(np.zeros((3, 4))), params)


def test_attention_gradients_match_fd():
    rng = np.random.default_rng(13)
    for _ in range(20):
        d, h = 4, 2
        params = _attn_params(rng, d, h)
        n = int(rng.integers(1, 4))
        nodes = p(rng.normal(size=(n, d)))
        coefs = rng.normal(size=(n, d))

        def loss():
            return _weighted(nn.multi_head_self_attention(nodes, params), coefs)

        tensors = [nodes, params.wq, params.wk, params.wv, params.wo]
        assert check_gradients(loss, tensors, rng) < 1e-4


# ---------------------------------------------------------------------------
# adam
# ---------------------------------------------------------------------------

def test_adam_zero_gradient_leaves_parameters():
    ps = nn.ParamSet()
    w = ps.add("w", p([1.0, -2.0]))
    w.grad = np.zeros(2)
    nn.adam_step(ps, lr=0.1)
    assert np.array_equal(w.data, [1.0, -2.0])
    assert w.grad is None


def test_adam_first_step_is_lr_sized():
    ps = nn.ParamSet()
    w = ps.add("w", p([0.0]))
    w.grad = np.array([1.0])
    nn.adam_step(ps, lr=0.1)
    assert abs(w.data[0] + 0.1) < 1e-8  # bias-corrected first step ~ -lr


def test_adam_quadratic_bowl_converges():
    ps = nn.ParamSet()
    w = ps.add("w", p([5.0]))
    for _ in range(500):
        w.grad = 2.0 * w.data
        nn.adam_step(ps, lr=0.1)
    assert abs(w.data[0]) < 0.01


def test_adam_moments_track_parameter_shapes():
    ps = nn.ParamSet()
    ps.add("a", p(np.zeros((2, 3))))
    ps.add("b", p(np.zeros(5)))
    for name, param in ps.params.items():
        assert ps.m[name].shape == param.data.shape
        assert ps.v[name].shape == param.data.shape


def test_paramset_rejects_duplicates():
    ps = nn.ParamSet()
    ps.add("w", p([1.0]))
    with pytest.raises(ValueError, match="duplicate"):
        ps.add("w", p([2.0]))


# ---------------------------------------------------------------------------
# determinism / finiteness
# ---------------------------------------------------------------------------

def test_forward_ops_deterministic():
    rng = np.random.default_rng(14)
    x = rng.normal(size=(3, 12))
    kern = rng.normal(size=(2, 3, 3))
    bias = rng.normal(size=2)
    a = nn.conv1d_forward(t(x), t(kern), t(bias)).data
    b = nn.conv1d_forward(t(x), t(kern), t(bias)).data
    assert np.array_equal(a, b)
    params = _attn_params(np.random.default_rng(15), 8, 2)
    nodes = rng.normal(size=(4, 8))
    a = nn.multi_head_self_attention(t(nodes), params).data
    b = nn.multi_head_self_attention(t(nodes), params).data
    assert np.array_equal(a, b)


def test_forward_ops_finite_on_finite_inputs():
    rng = np.random.default_rng(16)
    for _ in range(20):
        x = rng.normal(size=(2, 10)) * rng.uniform(0.1, 100)
        out = nn.maxpool1d(nn.relu(nn.conv1d_forward(
            t(x), t(rng.normal(size=(3, 2, 3))), t(rng.normal(size=3)))))
        assert np.all(np.isfinite(out.data))
        assert np.all(np.isfinite(nn.softmax(t(rng.normal(size=6) * 500)).data))
