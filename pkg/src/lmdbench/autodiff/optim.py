"""Adam with bias correction. Complex parameters are updated as (re, im) pairs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError


def _real_view(a):
    return a.view(np.float64) if np.iscomplexobj(a) else a


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state):
    """One in-place Adam update of ``params`` (Tensors) given matching grads.

    A ``None`` gradient leaves the parameter and its moments unchanged.
    """
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros(_real_view(p.data).shape) for p in params]
        state.v = [np.zeros(_real_view(p.data).shape) for p in params]
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.data.shape}")
        gr = _real_view(np.ascontiguousarray(g, dtype=p.data.dtype))
        m *= state.beta1
        m += (1.0 - state.beta1) * gr
        v *= state.beta2
        v += (1.0 - state.beta2) * gr * gr
        _real_view(p.data)[...] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


class Adam:
    """Convenience wrapper holding the parameter list and its AdamState."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr, beta1, beta2, eps)

    def step(self):
        adam_step(self.params, [p.grad for p in self.params], self.state)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
