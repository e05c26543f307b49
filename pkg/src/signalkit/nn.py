"""Differentiable numeric primitives with reverse-mode gradients.

A small tape: every op returns a `Tensor` holding a float64 ndarray plus a
closure that routes the incoming gradient to its parents. `backward()` on a
scalar output walks the graph in reverse topological order. All forward ops
are deterministic and operate in 64-bit precision.

Ops accept either a single sample or a stack of samples: contracts below are
written per-sample, with an optional leading batch axis handled by
broadcasting. Gradient correctness is pinned by central finite-difference
checks in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class Tensor:
    """Graph node wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Backpropagate from this node; the node must hold a single scalar."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar output, got shape {self.data.shape}")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to `shape`."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * c)

    return Tensor(a.data * c, parents=(a,), backward=backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul expects operands with ndim >= 2")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a.accumulate(np.swapaxes(g, ax1, ax2))

    return Tensor(np.swapaxes(a.data, ax1, ax2), parents=(a,), backward=backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g.reshape(a.data.shape))

    return Tensor(a.data.reshape(shape), parents=(a,), backward=backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * mask)

    return Tensor(np.where(mask, a.data, 0.0), parents=(a,), backward=backward)


def log(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g / a.data)

    return Tensor(np.log(a.data), parents=(a,), backward=backward)


def clip_min(a, floor: float) -> Tensor:
    a = as_tensor(a)
    mask = a.data > floor

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * mask)

    return Tensor(np.maximum(a.data, floor), parents=(a,), backward=backward)


def pick(a, idx) -> Tensor:
    """Select a[..., idx] per row: a [B,N] with idx [B] gives [B]; a [N] with int idx gives a scalar."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    if a.data.ndim == 1:
        out_data = a.data[idx]
    elif a.data.ndim == 2:
        rows = np.arange(a.data.shape[0])
        out_data = a.data[rows, idx]
    else:
        raise ValueError("pick expects a vector or a matrix")

    def backward(g):
        if not a.requires_grad:
            return
        da = np.zeros_like(a.data)
        if a.data.ndim == 1:
            da[idx] = g
        else:
            da[np.arange(a.data.shape[0]), idx] = g
        a.accumulate(da)

    return Tensor(out_data, parents=(a,), backward=backward)


def tensor_sum(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a.accumulate(np.full_like(a.data, float(g)))

    return Tensor(a.data.sum(), parents=(a,), backward=backward)


def tensor_mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size

    def backward(g):
        if a.requires_grad:
            a.accumulate(np.full_like(a.data, float(g) / n))

    return Tensor(a.data.mean(), parents=(a,), backward=backward)


# ---------------------------------------------------------------------------
# layer ops
# ---------------------------------------------------------------------------

def dense_forward(x, W, b) -> Tensor:
    """Affine map W x + b for x of shape [n] or [B, n]."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    m, n = W.data.shape
    if x.data.shape[-1] != n:
        raise ValueError(f"dense shape mismatch: x has width {x.data.shape[-1]}, W expects {n}")
    if b.data.shape != (m,):
        raise ValueError(f"dense bias shape {b.data.shape} does not match output width {m}")
    out_data = x.data @ W.data.T + b.data

    def backward(g):
        if x.requires_grad:
            x.accumulate(g @ W.data)
        if W.requires_grad:
            if x.data.ndim == 1:
                W.accumulate(np.outer(g, x.data))
            else:
                W.accumulate(g.reshape(-1, m).T @ x.data.reshape(-1, n))
        if b.requires_grad:
            b.accumulate(g if g.ndim == 1 else g.reshape(-1, m).sum(axis=0))

    return Tensor(out_data, parents=(x, W, b), backward=backward)


def conv1d_forward(x, kernels, bias) -> Tensor:
    """Valid 1-D convolution, stride 1.

    x: [C_in, L] or [B, C_in, L]; kernels: [C_out, C_in, k]; bias: [C_out].
    out[c, t] = bias[c] + sum_{i,j} kernels[c, i, j] * x[i, t + j].
    """
    x, kernels, bias = as_tensor(x), as_tensor(kernels), as_tensor(bias)
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3:
        raise ValueError(f"conv1d expects input of rank 2 or 3, got rank {x.data.ndim}")
    B, C, L = xd.shape
    c_out, c_in, k = kernels.data.shape
    if c_in != C:
        raise ValueError(f"conv1d channel mismatch: input has {C}, kernels expect {c_in}")
    if bias.data.shape != (c_out,):
        raise ValueError(f"conv1d bias shape {bias.data.shape} does not match {c_out} kernels")
    if L < k:
        raise ValueError(f"conv1d input length {L} is shorter than kernel size {k}")
    lp = L - k + 1

    windows = np.lib.stride_tricks.sliding_window_view(xd, k, axis=2)  # [B, C, lp, k]
    cols = windows.transpose(0, 2, 1, 3).reshape(B * lp, C * k)
    w2 = kernels.data.reshape(c_out, C * k)
    out = (cols @ w2.T + bias.data).reshape(B, lp, c_out).transpose(0, 2, 1)

    def backward(g):
        gb = g[None] if squeeze else g
        g2 = gb.transpose(0, 2, 1).reshape(B * lp, c_out)
        if kernels.requires_grad:
            kernels.accumulate((g2.T @ cols).reshape(c_out, C, k))
        if bias.requires_grad:
            bias.accumulate(g2.sum(axis=0))
        if x.requires_grad:
            dcols = (g2 @ w2).reshape(B, lp, C, k).transpose(0, 2, 1, 3)  # [B, C, lp, k]
            dx = np.zeros_like(xd)
            for j in range(k):
                dx[:, :, j:j + lp] += dcols[:, :, :, j]
            x.accumulate(dx[0] if squeeze else dx)

    return Tensor(out[0] if squeeze else out, parents=(x, kernels, bias), backward=backward)


def maxpool1d(x) -> Tensor:
    """Non-overlapping window-2 max pool over the last axis; odd tail dropped.

    Gradient routes to the argmax position, first index on ties.
    """
    x = as_tensor(x)
    L = x.data.shape[-1]
    if L < 2:
        raise ValueError(f"maxpool1d needs length >= 2, got {L}")
    l2 = L // 2
    lead = x.data.shape[:-1]
    pairs = x.data[..., :2 * l2].reshape(*lead, l2, 2)
    idx = np.argmax(pairs, axis=-1)
    out_data = np.take_along_axis(pairs, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        if not x.requires_grad:
            return
        dpairs = np.zeros_like(pairs)
        np.put_along_axis(dpairs, idx[..., None], g[..., None], axis=-1)
        dx = np.zeros_like(x.data)
        dx[..., :2 * l2] = dpairs.reshape(*lead, 2 * l2)
        x.accumulate(dx)

    return Tensor(out_data, parents=(x,), backward=backward)


def softmax(logits) -> Tensor:
    """Numerically stable softmax over the last axis."""
    logits = as_tensor(logits)
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if logits.requires_grad:
            inner = (g * p).sum(axis=-1, keepdims=True)
            logits.accumulate(p * (g - inner))

    return Tensor(p, parents=(logits,), backward=backward)


# ---------------------------------------------------------------------------
# multi-head self-attention
# ---------------------------------------------------------------------------

@dataclass
class AttentionParams:
    """Per-head Q/K/V projections [h, d, d_h] and output projection [d, h*d_h]."""

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor

    @property
    def heads(self) -> int:
        return self.wq.data.shape[0]

    @property
    def dim(self) -> int:
        return self.wq.data.shape[1]

    def tensors(self):
        return {"wq": self.wq, "wk": self.wk, "wv": self.wv, "wo": self.wo}


def init_attention(rng: np.random.Generator, dim: int, heads: int) -> AttentionParams:
    if dim % heads != 0:
        raise ValueError(f"model dim {dim} is not divisible by {heads} heads")
    dh = dim // heads
    lim_p = math.sqrt(6.0 / (dim + dh))
    lim_o = math.sqrt(6.0 / (heads * dh + dim))
    return AttentionParams(
        wq=parameter(rng.uniform(-lim_p, lim_p, size=(heads, dim, dh))),
        wk=parameter(rng.uniform(-lim_p, lim_p, size=(heads, dim, dh))),
        wv=parameter(rng.uniform(-lim_p, lim_p, size=(heads, dim, dh))),
        wo=parameter(rng.uniform(-lim_o, lim_o, size=(dim, heads * dh))),
    )


def multi_head_self_attention(nodes, params: AttentionParams, return_weights: bool = False):
    """Scaled dot-product self-attention over a set of nodes.

    nodes: [N, d] or [B, N, d]. Each node attends to all nodes (no positional
    information); heads are concatenated and projected back to d. Returns the
    refined node matrix, plus the attention weights [h, N, N] (or [B, h, N, N])
    when `return_weights` is set.
    """
    nodes = as_tensor(nodes)
    h, d, dh = params.wq.data.shape
    if nodes.data.shape[-1] != d:
        raise ValueError(f"attention dim mismatch: nodes have width {nodes.data.shape[-1]}, params expect {d}")
    n = nodes.data.shape[-2]
    lead = nodes.data.shape[:-2]

    x = reshape(nodes, lead + (1, n, d))            # [..., 1, N, d]
    q = matmul(x, params.wq)                         # [..., h, N, dh]
    kk = matmul(x, params.wk)
    v = matmul(x, params.wv)
    scores = scale(matmul(q, swapaxes(kk, -1, -2)), 1.0 / math.sqrt(dh))
    attn = softmax(scores)                           # [..., h, N, N]
    mixed = matmul(attn, v)                          # [..., h, N, dh]
    merged = reshape(swapaxes(mixed, -3, -2), lead + (n, h * dh))
    out = matmul(merged, swapaxes(params.wo, -1, -2))
    if return_weights:
        return out, attn
    return out


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class ParamSet:
    """Named parameter tensors with Adam moment buffers and a shared step counter."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = True
        self.params[name] = tensor
        self.m[name] = np.zeros_like(tensor.data)
        self.v[name] = np.zeros_like(tensor.data)
        return tensor

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        for name, p in self.params.items():
            src = np.asarray(arrays[name], dtype=np.float64)
            if src.shape != p.data.shape:
                raise ValueError(f"parameter {name!r} shape mismatch: {src.shape} vs {p.data.shape}")
            p.data = src.copy()


def adam_step(params: ParamSet, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """One Adam update with bias correction; gradients are zeroed afterwards."""
    params.t += 1
    t = params.t
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = params.m[name]
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    params.zero_grad()


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)
