from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> tuple[dict, AdamState]:
    """Bias-corrected Adam update. Inputs are not modified."""
    t = state.t + 1
    new_params, m_out, v_out = {}, {}, {}
    for key, p in params.items():
        g = grads[key]
        m = beta1 * state.m.get(key, np.zeros_like(p)) + (1 - beta1) * g
        v = beta2 * state.v.get(key, np.zeros_like(p)) + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        new_params[key] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        m_out[key], v_out[key] = m, v
    return new_params, AdamState(m_out, v_out, t)
