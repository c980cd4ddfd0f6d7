"""Adaptive-moment parameter updates with global-norm gradient clipping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0
    step: int = 0
    skipped: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def optimizer_step(model, grads: dict[str, np.ndarray], state: AdamState) -> bool:
    """Apply one update in place; returns False (and skips) on non-finite gradients."""
    for name, g in grads.items():
        if g.shape != model.params[name].shape:
            raise ContractError(f"gradient for {name} has shape {g.shape}, expected {model.params[name].shape}")
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if not np.isfinite(norm):
        state.skipped += 1
        log.warning("non-finite gradient at step %d; update skipped", state.step)
        return False
    scale = min(1.0, state.clip_norm / norm) if norm > 0 else 1.0
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        g = g * scale
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        model.params[name].value -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return True
