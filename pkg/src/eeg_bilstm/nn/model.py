"""Sequence classifier: (Bi-)LSTM encoder, temporal pooling, dense head.

Parameters live in a flat ``{name: ndarray}`` dict so the optimiser and the
checkpoint writer can treat them uniformly. Names are prefixed by block:
``fwd.``, ``bwd.``, ``attn.``, ``dense1.``, ``dense2.``, ``out.``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigError, DimensionMismatch, EmptySequence
from .cells import LstmCellParams, lstm_sequence_backward, lstm_sequence_forward

__all__ = [
    "ARCHITECTURES",
    "Architecture",
    "AttentionPoolParams",
    "ModelParams",
    "parse_arch",
    "init_params",
    "attention_pool",
    "head_forward",
    "forward",
    "compute_gradients",
    "count_parameters",
]


@dataclass(frozen=True)
class Architecture:
    name: str
    bidirectional: bool
    attention_gate: bool
    attention_pool: bool


ARCHITECTURES = {
    "lstm": Architecture("lstm", False, False, False),
    "bilstm": Architecture("bilstm", True, False, False),
    "bilstm-attw": Architecture("bilstm-attw", True, False, True),
    "bilstm-attg": Architecture("bilstm-attg", True, True, False),
    "bilstm-attwg": Architecture("bilstm-attwg", True, True, True),
}


def parse_arch(name) -> Architecture:
    """Accept ``bilstm-attwg`` as well as table-style spellings like ``Bi-LSTM+AttWG``."""
    if isinstance(name, Architecture):
        return name
    key = str(name).strip().lower().replace("bi-lstm", "bilstm").replace("+", "-").replace("_", "-")
    try:
        return ARCHITECTURES[key]
    except KeyError:
        raise ConfigError(
            f"unknown architecture {name!r}; choose from {', '.join(ARCHITECTURES)}") from None


@dataclass
class AttentionPoolParams:
    """Additive attention over time: ``e_t = u . tanh(W_a h_t + b_a)``."""

    W_a: np.ndarray
    b_a: np.ndarray
    u: np.ndarray


@dataclass
class ModelParams:
    arch: str
    tensors: dict
    seed: int = 0

    @property
    def architecture(self):
        return parse_arch(self.arch)

    def n_parameters(self):
        return count_parameters(self.tensors)


# -- init ---------------------------------------------------------------------

def _uniform_matrix(rng, rows, cols):
    lim = 1.0 / np.sqrt(cols)
    return rng.uniform(-lim, lim, size=(rows, cols))


def init_params(arch, input_size, hidden_size, n_classes, dense_units=64,
                attn_size=None, rng=None) -> dict:
    arch = parse_arch(arch)
    rng = np.random.default_rng(rng)
    p = {}
    cell = LstmCellParams.init(rng, input_size, hidden_size, arch.attention_gate)
    p.update(cell.to_dict("fwd."))
    ctx = hidden_size
    if arch.bidirectional:
        cell = LstmCellParams.init(rng, input_size, hidden_size, arch.attention_gate)
        p.update(cell.to_dict("bwd."))
        ctx = 2 * hidden_size
    if arch.attention_pool:
        A = hidden_size if attn_size is None else attn_size
        p["attn.W_a"] = _uniform_matrix(rng, A, ctx)
        p["attn.b_a"] = np.zeros(A)
        p["attn.u"] = rng.uniform(-1.0 / np.sqrt(A), 1.0 / np.sqrt(A), size=A)
    p["dense1.W"] = _uniform_matrix(rng, dense_units, ctx)
    p["dense1.b"] = np.zeros(dense_units)
    p["dense2.W"] = _uniform_matrix(rng, dense_units, dense_units)
    p["dense2.b"] = np.zeros(dense_units)
    p["out.W"] = _uniform_matrix(rng, n_classes, dense_units)
    p["out.b"] = np.zeros(n_classes)
    return p


def count_parameters(params: dict) -> int:
    return int(sum(v.size for k, v in params.items() if not k.startswith("input.")))


def _cell(params, prefix):
    return LstmCellParams.from_dict(params, prefix)


# -- pooling ------------------------------------------------------------------

def _softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def attention_pool(p: AttentionPoolParams, hiddens):
    """Attention-weighted sum over time.

    ``hiddens`` is (time, features) or (batch, time, features). Returns
    ``(context, weights)``.
    """
    Hs = np.asarray(hiddens, dtype=np.float64)
    squeeze = Hs.ndim == 2
    if squeeze:
        Hs = Hs[np.newaxis]
    if Hs.shape[1] == 0:
        raise EmptySequence("attention pooling over an empty sequence")
    if Hs.shape[-1] != p.W_a.shape[1]:
        raise DimensionMismatch(f"attention expects {p.W_a.shape[1]} features, got {Hs.shape[-1]}")
    s = np.tanh(Hs @ p.W_a.T + p.b_a)
    e = s @ p.u
    w = _softmax(e, axis=1)
    ctx = np.einsum("bt,btf->bf", w, Hs)
    if squeeze:
        return ctx[0], w[0]
    return ctx, w


def _attention_pool_backward(p, Hs, s, w, dctx):
    # dctx: (B, F)
    dw = np.einsum("bf,btf->bt", dctx, Hs)
    de = w * (dw - np.sum(w * dw, axis=1, keepdims=True))
    dHs = w[:, :, None] * dctx[:, None, :]
    ds = de[:, :, None] * p.u
    dpre = ds * (1.0 - s * s)
    grads = {
        "attn.u": np.einsum("bt,bta->a", de, s),
        "attn.W_a": np.einsum("bta,btf->af", dpre, Hs),
        "attn.b_a": dpre.sum(axis=(0, 1)),
    }
    dHs += dpre @ p.W_a
    return grads, dHs


# -- head ---------------------------------------------------------------------

def _dropout_mask(rng, shape, rate):
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def head_forward(params, context, train_mode=False, rng=None, dropout_rate=0.5, masks=None):
    """dense -> ReLU -> dropout -> dense -> ReLU -> dropout -> softmax.

    Dropout is inverted (kept units scaled by ``1/(1-rate)``), so eval mode
    is the identity. Returns class probabilities with the input's batch shape.
    """
    ctx = np.asarray(context, dtype=np.float64)
    squeeze = ctx.ndim == 1
    if squeeze:
        ctx = ctx[np.newaxis]
    probs, _ = _head(params, ctx, train_mode, rng, dropout_rate, masks)
    return probs[0] if squeeze else probs


def _head(params, ctx, train_mode, rng, dropout_rate, masks):
    W1 = params["dense1.W"]
    if ctx.shape[-1] != W1.shape[1]:
        raise DimensionMismatch(f"head expects context {W1.shape[1]}, got {ctx.shape[-1]}")
    B = ctx.shape[0]
    U = W1.shape[0]
    if train_mode and masks is None and dropout_rate > 0:
        rng = np.random.default_rng(rng)
        masks = (_dropout_mask(rng, (B, U), dropout_rate),
                 _dropout_mask(rng, (B, params["dense2.W"].shape[0]), dropout_rate))
    if not train_mode:
        masks = None
    z1 = ctx @ W1.T + params["dense1.b"]
    a1 = np.maximum(z1, 0.0)
    d1 = a1 * masks[0] if masks is not None else a1
    z2 = d1 @ params["dense2.W"].T + params["dense2.b"]
    a2 = np.maximum(z2, 0.0)
    d2 = a2 * masks[1] if masks is not None else a2
    logits = d2 @ params["out.W"].T + params["out.b"]
    probs = _softmax(logits)
    return probs, (ctx, z1, d1, z2, d2, logits, masks)


def _head_backward(params, cache, dlogits):
    ctx, z1, d1, z2, d2, logits, masks = cache
    g = {"out.W": dlogits.T @ d2, "out.b": dlogits.sum(axis=0)}
    dd2 = dlogits @ params["out.W"]
    da2 = dd2 * masks[1] if masks is not None else dd2
    dz2 = da2 * (z2 > 0)
    g["dense2.W"] = dz2.T @ d1
    g["dense2.b"] = dz2.sum(axis=0)
    dd1 = dz2 @ params["dense2.W"]
    da1 = dd1 * masks[0] if masks is not None else dd1
    dz1 = da1 * (z1 > 0)
    g["dense1.W"] = dz1.T @ ctx
    g["dense1.b"] = dz1.sum(axis=0)
    return g, dz1 @ params["dense1.W"]


# -- full model -----------------------------------------------------------------

def _encode(params, arch, X):
    hf, cf = lstm_sequence_forward(_cell(params, "fwd."), X)
    if arch.bidirectional:
        hb, cb = lstm_sequence_forward(_cell(params, "bwd."), X, reverse=True)
        Hs = np.concatenate([hf, hb], axis=-1)
    else:
        cb = None
        Hs = hf
    if arch.attention_pool:
        ap = AttentionPoolParams(params["attn.W_a"], params["attn.b_a"], params["attn.u"])
        s = np.tanh(Hs @ ap.W_a.T + ap.b_a)
        w = _softmax(s @ ap.u, axis=1)
        ctx = np.einsum("bt,btf->bf", w, Hs)
        pool = (ap, s, w)
    else:
        ctx = Hs.mean(axis=1)
        pool = None
    return ctx, (cf, cb, Hs, pool)


def forward(params, arch, X, train_mode=False, rng=None, dropout_rate=0.5, masks=None,
            return_cache=False):
    """Class probabilities for ``X`` shaped (batch, time, features)."""
    arch = parse_arch(arch)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise DimensionMismatch(f"expected (batch, time, features), got {X.shape}")
    ctx, enc = _encode(params, arch, X)
    probs, head = _head(params, ctx, train_mode, rng, dropout_rate, masks)
    if return_cache:
        return probs, (arch, enc, head)
    return probs


def cross_entropy(probs, y):
    p = probs[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.maximum(p, np.finfo(float).tiny))))


def compute_gradients(params, arch, X, y, train_mode=False, rng=None, dropout_rate=0.5,
                      masks=None):
    """Mean cross-entropy over the batch and its gradient for every parameter.

    Returns ``(loss, grads)``; ``grads`` has the same keys and shapes as the
    trainable entries of ``params``.
    """
    y = np.asarray(y, dtype=np.intp)
    X = np.asarray(X, dtype=np.float64)
    if len(y) == 0 or len(y) != len(X):
        raise DimensionMismatch(f"{len(X)} sequences but {len(y)} labels")
    n_classes = params["out.b"].shape[0]
    if y.min() < 0 or y.max() >= n_classes:
        raise DimensionMismatch(f"labels must lie in [0, {n_classes})")
    probs, (arch, enc, head) = forward(params, arch, X, train_mode, rng, dropout_rate, masks,
                                       return_cache=True)
    B = len(y)
    # log-sum-exp form of the loss
    logits = head[5]
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(B), y]))

    dlogits = probs.copy()
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B
    grads, dctx = _head_backward(params, head, dlogits)

    cf, cb, Hs, pool = enc
    T = Hs.shape[1]
    if pool is None:
        dHs = np.repeat(dctx[:, None, :] / T, T, axis=1)
    else:
        ap, s, w = pool
        g, dHs = _attention_pool_backward(ap, Hs, s, w, dctx)
        grads.update(g)
    H = cf[0].hidden_size
    g, _ = lstm_sequence_backward(cf, dHs[..., :H])
    grads.update({"fwd." + k: v for k, v in g.items()})
    if cb is not None:
        g, _ = lstm_sequence_backward(cb, dHs[..., H:])
        grads.update({"bwd." + k: v for k, v in g.items()})
    return loss, {k: grads[k] for k in params if k in grads}
