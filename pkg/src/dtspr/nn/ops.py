"""Neural-net building blocks with analytic gradients.

Fused ops (layer_norm, gelu, masked softmax, cross entropy) keep the tape
short; structural ops (attention, patch conv) are composed from tensor
primitives so their gradients follow from the chain rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .tensor import Tensor, _make, _wrap, concat, matmul, reshape, transpose

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

LAYER_NORM_EPS = 1e-5


@dataclass(frozen=True)
class AttentionMask:
    """Boolean allowed-key matrix, broadcastable to (batch, heads, queries, keys).

    Every query row must allow at least one key; attention over an empty row
    is undefined and rejected at construction.
    """

    allowed: np.ndarray

    def __post_init__(self):
        allowed = np.asarray(self.allowed, dtype=bool)
        object.__setattr__(self, "allowed", allowed)
        if not allowed.any(axis=-1).all():
            raise ValueError("attention mask has a query row with no allowed keys")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = x @ w (+ b); w is (d_in, d_out)."""
    y = matmul(x, w)
    if b is not None:
        y = y + b
    return y


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift.

    A constant input has zero variance and maps to ``bias`` exactly.
    """
    x = _wrap(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    data = xhat * gain.data + bias.data

    def backward(g):
        if gain.requires_grad:
            gain.accumulate_grad((g * xhat).reshape(-1, x.data.shape[-1]).sum(axis=0))
        if bias.requires_grad:
            bias.accumulate_grad(g.reshape(-1, x.data.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gx = g * gain.data
            dx = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
            x.accumulate_grad(dx)

    return _make(data, (x, gain, bias), backward, "layer_norm")


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-error-linear unit: x * Phi(x)."""
    x = _wrap(x)
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    data = x.data * cdf

    def backward(g):
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI
        x.accumulate_grad(g * (cdf + x.data * pdf))

    return _make(data, (x,), backward, "gelu")


def softmax(x: Tensor, axis: int = -1, mask: AttentionMask | None = None) -> Tensor:
    """Softmax along ``axis``; with a mask, disallowed keys get exactly zero weight.

    Masking only supports the last axis (attention-score layout).
    """
    x = _wrap(x)
    if mask is None:
        z = x.data - x.data.max(axis=axis, keepdims=True)
        e = np.exp(z)
    else:
        if axis not in (-1, x.data.ndim - 1):
            raise ValueError("masked softmax supports the last axis only")
        allowed = np.broadcast_to(mask.allowed, x.data.shape)
        z = np.where(allowed, x.data, -np.inf)
        z = z - z.max(axis=-1, keepdims=True)
        e = np.where(allowed, np.exp(z), 0.0)
    p = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        gp = g * p
        x.accumulate_grad(gp - p * gp.sum(axis=axis, keepdims=True))

    return _make(p, (x,), backward, "softmax")


@dataclass
class AttentionParams:
    """Projection weights of one multi-head attention block.

    The key projection carries no bias: a constant shift of every key moves
    all scores in a row equally and softmax cancels it, so such a bias has an
    identically-zero gradient.
    """

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    bq: Tensor
    bv: Tensor
    bo: Tensor


def _split_heads(x: Tensor, heads: int) -> Tensor:
    # (..., n, d) -> (..., heads, n, d/h)
    *lead, n, d = x.shape
    x = reshape(x, (*lead, n, heads, d // heads))
    ndim = len(lead) + 3
    axes = tuple(range(len(lead))) + (ndim - 2, ndim - 3, ndim - 1)
    return transpose(x, axes)


def _merge_heads(x: Tensor) -> Tensor:
    # (..., heads, n, d/h) -> (..., n, d)
    *lead, h, n, dh = x.shape
    ndim = len(lead) + 3
    axes = tuple(range(len(lead))) + (ndim - 2, ndim - 3, ndim - 1)
    return reshape(transpose(x, axes), (*lead, n, h * dh))


def masked_mha(q_tokens: Tensor, kv_tokens: Tensor, params: AttentionParams,
               heads: int, mask: AttentionMask | None = None) -> Tensor:
    """Multi-head attention of ``q_tokens`` over ``kv_tokens``.

    Scores are q.k/sqrt(d_head) per head; masked keys receive exactly zero
    attention weight.  Model dim must divide evenly into heads.
    """
    d = q_tokens.shape[-1]
    if d % heads != 0:
        raise ValueError(f"model dim {d} not divisible by {heads} heads")
    q = _split_heads(linear(q_tokens, params.wq, params.bq), heads)
    k = _split_heads(linear(kv_tokens, params.wk, None), heads)
    v = _split_heads(linear(kv_tokens, params.wv, params.bv), heads)
    scale = 1.0 / math.sqrt(d // heads)
    ndim = len(k.shape)
    kt = transpose(k, tuple(range(ndim - 2)) + (ndim - 1, ndim - 2))
    scores = matmul(q, kt) * scale
    attn = softmax(scores, axis=-1, mask=mask)
    out = _merge_heads(matmul(attn, v))
    return linear(out, params.wo, params.bo)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor | None, stride: int) -> Tensor:
    """Non-overlapping patch projection: kernel size must equal the stride.

    x: (..., C_in, H, W); kernels: (C_out, C_in, k, k) -> (..., C_out, H/k, W/k).
    """
    *lead, c_in, h, w = x.shape
    c_out, kc, kh, kw = kernels.shape
    if kh != kw or kh != stride:
        raise ValueError("conv2d is patch projection only: kernel size must equal stride")
    if kc != c_in:
        raise ValueError(f"kernel expects {kc} input channels, input has {c_in}")
    if h % kh != 0 or w % kw != 0:
        raise ValueError(f"spatial dims {h}x{w} not divisible by kernel {kh}")
    hp, wp = h // kh, w // kw
    nl = len(lead)
    # (..., C, hp, k, wp, k) -> (..., hp, wp, C, k, k) -> patches as rows
    x6 = reshape(x, (*lead, c_in, hp, kh, wp, kw))
    x6 = transpose(x6, tuple(range(nl)) + (nl + 1, nl + 3, nl, nl + 2, nl + 4))
    cols = reshape(x6, (*lead, hp * wp, c_in * kh * kw))
    wmat = transpose(reshape(kernels, (c_out, c_in * kh * kw)), (1, 0))
    y = matmul(cols, wmat)
    if bias is not None:
        y = y + bias
    # (..., hp*wp, C_out) -> (..., C_out, hp, wp)
    y = transpose(y, tuple(range(nl)) + (nl + 1, nl))
    return reshape(y, (*lead, c_out, hp, wp))


def sinusoidal_pe(n_positions: int, dim: int) -> np.ndarray:
    """Fixed sin/cos positional table: pe[p, 2i] = sin(p / 10000^(2i/dim))."""
    if dim % 2 != 0:
        raise ValueError("positional embedding dim must be even")
    pos = np.arange(n_positions, dtype=np.float64)[:, None]
    i2 = np.arange(0, dim, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, i2 / dim)
    pe = np.empty((n_positions, dim), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``logits`` rows."""
    logits = _wrap(logits)
    n = logits.data.shape[0]
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    rows = np.arange(n)
    data = np.asarray(-logp[rows, labels].mean())

    def backward(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        logits.accumulate_grad(g * p / n)

    return _make(data, (logits,), backward, "cross_entropy")
