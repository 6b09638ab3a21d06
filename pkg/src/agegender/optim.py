"""Bias-corrected ADAM over the trainable parameters of a model."""

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class TrainState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    epoch: int = 0
    best_dev_score: float = float("-inf")
    best_epoch: int = 0
    rejected_steps: int = 0


def adam_step(params, grads, trainable, state, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=None):
    """One in-place update; returns False (and changes nothing) on a non-finite gradient.

    ``params`` maps names to tensors, ``grads`` names to arrays (missing or
    None means zero), ``trainable`` names to booleans.  Frozen parameters are
    never touched and get no moment buffers.
    """
    names = [n for n in params if trainable.get(n, False)]
    gs = {}
    for n in names:
        g = grads.get(n)
        g = np.zeros_like(params[n].data) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != params[n].data.shape:
            raise ValueError(f"{n}: gradient shape {g.shape} != parameter shape {params[n].data.shape}")
        if not np.all(np.isfinite(g)):
            log.warning("rejected ADAM step %d: non-finite gradient in %s", state.step + 1, n)
            state.rejected_steps += 1
            return False
        gs[n] = g
    if clip_norm is not None:
        total = np.sqrt(sum(float(np.sum(g * g)) for g in gs.values()))
        if total > clip_norm:
            gs = {n: g * (clip_norm / total) for n, g in gs.items()}
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for n in names:
        g = gs[n]
        if n not in state.m:
            state.m[n] = np.zeros_like(g)
            state.v[n] = np.zeros_like(g)
        m, v = state.m[n], state.v[n]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params[n].data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return True
