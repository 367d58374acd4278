"""LSTM cells, the attention-gated variant, and the bidirectional layer.

Arrays carry features on the last axis, so every function accepts a single
vector or a batch. Sequence functions take ``(batch, time, features)``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from ..errors import DimensionMismatch, EmptySequence

GATES = ("i", "f", "o", "c")


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class AttnGateParams:
    """Per-unit forget-gate parameters: ``f = sigmoid(v_f * tanh(w_f * c_prev))``."""

    v_f: np.ndarray
    w_f: np.ndarray

    def n_parameters(self):
        return self.v_f.size + self.w_f.size


@dataclass
class LstmCellParams:
    """Input weights ``W_*`` (hidden, input), recurrent ``U_*`` (hidden, hidden),
    biases ``b_*`` (hidden,). The forget-gate trio is ``None`` when the cell
    carries an :class:`AttnGateParams` instead.
    """

    W_i: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    U_i: np.ndarray
    U_o: np.ndarray
    U_c: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray
    W_f: Optional[np.ndarray] = None
    U_f: Optional[np.ndarray] = None
    b_f: Optional[np.ndarray] = None
    attn: Optional[AttnGateParams] = None

    @property
    def hidden_size(self):
        return self.W_i.shape[0]

    @property
    def input_size(self):
        return self.W_i.shape[1]

    @property
    def attention_gated(self):
        return self.attn is not None

    @property
    def gates(self):
        return ("i", "o", "c") if self.attention_gated else GATES

    def stacked(self):
        """Row-stacked (W, U, b) over the cell's matrix-driven gates."""
        g = self.gates
        return (np.concatenate([getattr(self, f"W_{k}") for k in g]),
                np.concatenate([getattr(self, f"U_{k}") for k in g]),
                np.concatenate([getattr(self, f"b_{k}") for k in g]))

    def to_dict(self, prefix=""):
        out = {}
        for k in self.gates:
            for kind in "WUb":
                out[f"{prefix}{kind}_{k}"] = getattr(self, f"{kind}_{k}")
        if self.attn is not None:
            out[f"{prefix}v_f"] = self.attn.v_f
            out[f"{prefix}w_f"] = self.attn.w_f
        return out

    @classmethod
    def from_dict(cls, d, prefix=""):
        kw = {f.name: d.get(prefix + f.name) for f in fields(cls) if f.name != "attn"}
        if prefix + "v_f" in d:
            kw["attn"] = AttnGateParams(d[prefix + "v_f"], d[prefix + "w_f"])
        return cls(**kw)

    def n_parameters(self):
        return sum(v.size for v in self.to_dict().values())

    @classmethod
    def init(cls, rng, input_size, hidden_size, attention_gated=False):
        """Uniform(+-1/sqrt(fan_in)) weights, zero biases, forget bias +1."""
        def mat(rows, cols):
            lim = 1.0 / np.sqrt(cols)
            return rng.uniform(-lim, lim, size=(rows, cols))

        kw = {}
        gates = ("i", "o", "c") if attention_gated else GATES
        for k in gates:
            kw[f"W_{k}"] = mat(hidden_size, input_size)
            kw[f"U_{k}"] = mat(hidden_size, hidden_size)
            kw[f"b_{k}"] = np.zeros(hidden_size)
        if attention_gated:
            kw["attn"] = AttnGateParams(rng.uniform(-0.1, 0.1, hidden_size),
                                        rng.uniform(-0.1, 0.1, hidden_size))
        else:
            kw["b_f"] = np.ones(hidden_size)
        return cls(**kw)


def forget_gate_parameter_count(hidden_size, input_size, attention_gated):
    if attention_gated:
        return 2 * hidden_size
    return hidden_size * input_size + hidden_size ** 2 + hidden_size


def _check_dims(p, x, h, c):
    H, D = p.hidden_size, p.input_size
    if x.shape[-1] != D or h.shape[-1] != H or c.shape[-1] != H:
        raise DimensionMismatch(
            f"cell expects input {D}, hidden {H}; got x {x.shape}, h {h.shape}, c {c.shape}")


def _step(p, x, h, c, W, U, b):
    H = p.hidden_size
    z = x @ W.T + h @ U.T + b
    if p.attention_gated:
        i = sigmoid(z[..., :H])
        o = sigmoid(z[..., H:2 * H])
        g = np.tanh(z[..., 2 * H:])
        s = np.tanh(p.attn.w_f * c)
        f = sigmoid(p.attn.v_f * s)
    else:
        i = sigmoid(z[..., :H])
        f = sigmoid(z[..., H:2 * H])
        o = sigmoid(z[..., 2 * H:3 * H])
        g = np.tanh(z[..., 3 * H:])
        s = None
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (i, f, o, g, tc, s)


def lstm_cell_forward(p: LstmCellParams, x_t, h_prev, c_prev):
    """One step of the standard cell. Returns ``(h_t, c_t)``."""
    if p.attention_gated:
        raise DimensionMismatch("use attn_lstm_cell_forward for an attention-gated cell")
    x_t, h_prev, c_prev = (np.asarray(a, dtype=np.float64) for a in (x_t, h_prev, c_prev))
    _check_dims(p, x_t, h_prev, c_prev)
    h, c, _ = _step(p, x_t, h_prev, c_prev, *p.stacked())
    return h, c


def attn_lstm_cell_forward(p: LstmCellParams, a: Optional[AttnGateParams], x_t, h_prev, c_prev):
    """One step with the forget gate computed from ``c_prev`` alone."""
    if a is not None:
        p = LstmCellParams(**{**{f.name: getattr(p, f.name) for f in fields(p)},
                              "W_f": None, "U_f": None, "b_f": None, "attn": a})
    if not p.attention_gated:
        raise DimensionMismatch("attention gate parameters missing")
    x_t, h_prev, c_prev = (np.asarray(v, dtype=np.float64) for v in (x_t, h_prev, c_prev))
    _check_dims(p, x_t, h_prev, c_prev)
    if p.attn.v_f.shape != (p.hidden_size,) or p.attn.w_f.shape != (p.hidden_size,):
        raise DimensionMismatch("v_f and w_f must have length hidden_size")
    h, c, _ = _step(p, x_t, h_prev, c_prev, *p.stacked())
    return h, c


# -- sequences -----------------------------------------------------------------

def lstm_sequence_forward(p: LstmCellParams, X, reverse=False):
    """Run a cell over ``X`` (batch, time, input) from zero state.

    With ``reverse=True`` the cell consumes steps T..1, and the returned
    hidden states are re-aligned so row ``t`` is the state after reading
    ``x_t``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise DimensionMismatch(f"expected (batch, time, features), got {X.shape}")
    B, T, D = X.shape
    if T < 1:
        raise EmptySequence("sequence has no time steps")
    H = p.hidden_size
    if D != p.input_size:
        raise DimensionMismatch(f"cell expects input {p.input_size}, got {D}")
    W, U, b = p.stacked()
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    Hs = np.empty((B, T, H))
    steps = []
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        x = X[:, t]
        h_prev, c_prev = h, c
        h, c, acts = _step(p, x, h_prev, c_prev, W, U, b)
        Hs[:, t] = h
        steps.append((t, x, h_prev, c_prev, acts))
    return Hs, (p, steps, (W, U))


def lstm_sequence_backward(cache, dHs):
    """Backpropagate ``dHs`` (batch, time, hidden) through a cell run.

    Returns ``(grads, dX)`` with ``grads`` keyed like ``LstmCellParams.to_dict``.
    """
    p, steps, (W, U) = cache
    H = p.hidden_size
    B, T = dHs.shape[0], dHs.shape[1]
    gates = p.gates
    G = len(gates)
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(G * H)
    dv = np.zeros(H) if p.attention_gated else None
    dw = np.zeros(H) if p.attention_gated else None
    dX = np.zeros((B, T, p.input_size))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t, x, h_prev, c_prev, (i, f, o, g, tc, s) in reversed(steps):
        dh = dHs[:, t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_prev = dc * f
        dzi = di * i * (1.0 - i)
        dzo = do * o * (1.0 - o)
        dzg = dg * (1.0 - g * g)
        dzf = df * f * (1.0 - f)
        if p.attention_gated:
            dz = np.concatenate([dzi, dzo, dzg], axis=1)
            dv += np.sum(dzf * s, axis=0)
            da = dzf * p.attn.v_f * (1.0 - s * s)
            dw += np.sum(da * c_prev, axis=0)
            dc_prev = dc_prev + da * p.attn.w_f
        else:
            dz = np.concatenate([dzi, dzf, dzo, dzg], axis=1)
        dW += dz.T @ x
        dU += dz.T @ h_prev
        db += dz.sum(axis=0)
        dX[:, t] = dz @ W
        dh_next = dz @ U
        dc_next = dc_prev
    grads = {}
    for n, k in enumerate(gates):
        sl = slice(n * H, (n + 1) * H)
        grads[f"W_{k}"] = dW[sl]
        grads[f"U_{k}"] = dU[sl]
        grads[f"b_{k}"] = db[sl]
    if p.attention_gated:
        grads["v_f"] = dv
        grads["w_f"] = dw
    return grads, dX


def bilstm_forward(fwd: LstmCellParams, bwd: LstmCellParams, sequence):
    """Concatenate forward and backward hidden states at every step.

    Accepts ``(time, input)`` or ``(batch, time, input)``; returns the same
    leading shape with ``2 * hidden`` features.
    """
    X = np.asarray(sequence, dtype=np.float64)
    squeeze = X.ndim == 2
    if squeeze:
        X = X[np.newaxis]
    if X.ndim != 3 or X.shape[1] == 0:
        raise EmptySequence("bilstm_forward needs at least one time step")
    hf, _ = lstm_sequence_forward(fwd, X)
    hb, _ = lstm_sequence_forward(bwd, X, reverse=True)
    out = np.concatenate([hf, hb], axis=-1)
    return out[0] if squeeze else out
