from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import DimensionError, Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(state: AdamState, grads, params: list[Tensor]) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place.

    ``grads`` is either a mapping keyed by the parameter tensors (as returned
    by :func:`backward`) or a list aligned with ``params``. Parameters missing
    from a mapping are treated as having zero gradient.
    """
    if isinstance(grads, dict):
        glist = [grads.get(p) for p in params]
        glist = [np.zeros_like(p.data) if g is None else g for p, g in zip(params, glist)]
    else:
        glist = list(grads)
    if len(glist) != len(params):
        raise DimensionError(f"{len(glist)} gradients for {len(params)} parameters")
    for p, g in zip(params, glist):
        if np.shape(g) != p.shape:
            raise DimensionError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    elif len(state.m) != len(params) or any(m.shape != p.shape for m, p in zip(state.m, params)):
        raise DimensionError("Adam moments do not match the parameter set")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, glist, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state
