"""
Gradient clipping and Adam over named numpy tensors
Parameters are updated in place.
"""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

Tensors = Dict[str, np.ndarray]


def global_norm(grads: Tensors) -> float:
    return float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))


def clip_gradients(grads: Tensors, threshold: float = 10.0) -> Tuple[Tensors, float]:
    """Rescale all gradients by threshold / norm when the global L2 norm exceeds threshold"""
    norm = global_norm(grads)
    if norm <= threshold:
        return grads, norm
    scale = threshold / norm
    return {name: g * scale for name, g in grads.items()}, norm


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Tensors = field(default_factory=dict)
    v: Tensors = field(default_factory=dict)


def adam_step(state: AdamState, params: Tensors, grads: Tensors, lr: float) -> Tuple[AdamState, Tensors]:
    state.t += 1
    bias1 = 1.0 - state.beta1 ** state.t
    bias2 = 1.0 - state.beta2 ** state.t
    for name, param in params.items():
        grad = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * grad
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * grad ** 2
        m_hat = state.m[name] / bias1
        v_hat = state.v[name] / bias2
        param -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state, params
