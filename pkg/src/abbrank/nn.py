"""Numpy building blocks for the reference encoder.

Every layer comes as a ``*_fwd`` / ``*_bwd`` pair: the forward returns
its output plus the cache the backward needs, and the backward maps the
output gradient to input and parameter gradients.  Everything runs in
float64; parameter gradients are accumulated into a caller-supplied dict
so the context and option passes of the dual encoder can share weights.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

LN_EPS = 1e-5
MASK_NEG = -1e30
_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _flat(x: np.ndarray) -> np.ndarray:
    return x.reshape(-1, x.shape[-1])


# -- linear ---------------------------------------------------------------

def linear_fwd(x, w, b):
    return x @ w + b, x


def linear_bwd(dy, x, w, grads, w_name, b_name):
    grads[w_name] += _flat(x).T @ _flat(dy)
    grads[b_name] += _flat(dy).sum(axis=0)
    return dy @ w.T


# -- layer norm -----------------------------------------------------------

def layernorm_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv_std
    return g * xhat + b, (xhat, inv_std)


def layernorm_bwd(dy, cache, g, grads, g_name, b_name):
    xhat, inv_std = cache
    grads[g_name] += (_flat(dy) * _flat(xhat)).sum(axis=0)
    grads[b_name] += _flat(dy).sum(axis=0)
    dxhat = dy * g
    mean_dxhat = dxhat.mean(axis=-1, keepdims=True)
    mean_dxhat_xhat = (dxhat * xhat).mean(axis=-1, keepdims=True)
    return inv_std * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)


# -- activations ----------------------------------------------------------

def gelu_fwd(x):
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2)), x


def gelu_bwd(dy, x):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
    return dy * (cdf + x * pdf)


def tanh_fwd(x):
    t = np.tanh(x)
    return t, t


def tanh_bwd(dy, t):
    return dy * (1.0 - t * t)


# -- softmax --------------------------------------------------------------

def softmax(z, axis=-1):
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_bwd(dy, s, axis=-1):
    return s * (dy - (dy * s).sum(axis=axis, keepdims=True))


# -- L2 normalization -----------------------------------------------------

def l2norm_fwd(x):
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot L2-normalize a zero vector")
    y = x / norms
    return y, (y, norms)


def l2norm_bwd(dy, cache):
    y, norms = cache
    return (dy - y * (y * dy).sum(axis=-1, keepdims=True)) / norms


# -- multi-head self-attention ---------------------------------------------

def attention_fwd(x, mask, params, prefix, n_heads):
    """Self-attention over ``x`` [B, T, d]; ``mask`` [B, T] marks real
    tokens with 1.  Padded positions are excluded as keys."""
    B, T, d = x.shape
    wq, wk, wv = params[f"{prefix}.wq"], params[f"{prefix}.wk"], params[f"{prefix}.wv"]
    dh = d // n_heads

    q, _ = linear_fwd(x, wq, params[f"{prefix}.bq"])
    k, _ = linear_fwd(x, wk, params[f"{prefix}.bk"])
    v, _ = linear_fwd(x, wv, params[f"{prefix}.bv"])

    def split(m):
        return m.reshape(B, T, n_heads, dh).transpose(0, 2, 1, 3)

    qh, kh, vh = split(q), split(k), split(v)
    scores = qh @ kh.transpose(0, 1, 3, 2) / np.sqrt(dh)
    scores = scores + (1.0 - mask[:, None, None, :]) * MASK_NEG
    attn = softmax(scores)
    ctx = attn @ vh
    merged = ctx.transpose(0, 2, 1, 3).reshape(B, T, d)
    out, _ = linear_fwd(merged, params[f"{prefix}.wo"], params[f"{prefix}.bo"])
    return out, (x, qh, kh, vh, attn, merged)


def attention_bwd(dy, cache, params, prefix, grads):
    x, qh, kh, vh, attn, merged = cache
    B, T, d = x.shape
    n_heads = qh.shape[1]
    dh = d // n_heads

    dmerged = linear_bwd(dy, merged, params[f"{prefix}.wo"], grads,
                         f"{prefix}.wo", f"{prefix}.bo")
    dctx = dmerged.reshape(B, T, n_heads, dh).transpose(0, 2, 1, 3)

    dattn = dctx @ vh.transpose(0, 1, 3, 2)
    dvh = attn.transpose(0, 1, 3, 2) @ dctx
    dscores = softmax_bwd(dattn, attn)
    dscores /= np.sqrt(dh)
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 1, 3, 2) @ qh

    def merge(m):
        return m.transpose(0, 2, 1, 3).reshape(B, T, d)

    dx = linear_bwd(merge(dqh), x, params[f"{prefix}.wq"], grads,
                    f"{prefix}.wq", f"{prefix}.bq")
    dx += linear_bwd(merge(dkh), x, params[f"{prefix}.wk"], grads,
                     f"{prefix}.wk", f"{prefix}.bk")
    dx += linear_bwd(merge(dvh), x, params[f"{prefix}.wv"], grads,
                     f"{prefix}.wv", f"{prefix}.bv")
    return dx
