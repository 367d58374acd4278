"""Adam with bias correction, plus global-norm gradient clipping."""

import numpy as np


def init_adam_state(params):
    return {"m": {k: np.zeros_like(v) for k, v in params.items()},
            "v": {k: np.zeros_like(v) for k, v in params.items()}}


def adam_step(params, grads, state, t, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update at step ``t >= 1``. Returns new ``(params, state)``.

    Parameters without a gradient entry are passed through unchanged.
    """
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    new_p, m_out, v_out = {}, {}, {}
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            new_p[k] = p
            m_out[k] = state["m"].get(k, np.zeros_like(p))
            v_out[k] = state["v"].get(k, np.zeros_like(p))
            continue
        m = beta1 * state["m"][k] + (1.0 - beta1) * g
        v = beta2 * state["v"][k] + (1.0 - beta2) * g * g
        new_p[k] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        m_out[k], v_out[k] = m, v
    return new_p, {"m": m_out, "v": v_out}


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads, max_norm):
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm
