"""Central finite-difference gradient checker."""

from __future__ import annotations

import numpy as np

from .core import backward, new_tape, no_grad


def _real_view(a):
    return a.view(np.float64) if np.iscomplexobj(a) else a


def gradcheck(fn, inputs, h=1e-6, n_samples=None, rng=None):
    """Max relative error between backward and central differences.

    ``fn(*inputs)`` must return a scalar Tensor. Every input with
    requires_grad is checked; complex entries are perturbed in re and im
    separately. Relative error is ||analytic - numeric||_inf / ||numeric||_inf
    over the checked entries. With ``n_samples`` a random subset of the
    real coordinates (pooled over all inputs) is checked.
    """
    targets = [t for t in inputs if t.requires_grad]
    for t in targets:
        t.grad = None
    new_tape()
    backward(fn(*inputs))
    coords = [(k, i) for k, t in enumerate(targets) for i in range(_real_view(t.data).size)]
    if n_samples is not None and n_samples < len(coords):
        rng = rng or np.random.default_rng(0)
        pick = rng.choice(len(coords), size=n_samples, replace=False)
        coords = [coords[i] for i in sorted(pick)]
    analytic = np.empty(len(coords))
    numeric = np.empty(len(coords))
    with no_grad():
        for n, (k, i) in enumerate(coords):
            t = targets[k]
            flat = _real_view(t.data).reshape(-1)
            g = t.grad if t.grad is not None else np.zeros_like(t.data)
            analytic[n] = _real_view(np.ascontiguousarray(g, dtype=t.data.dtype)).reshape(-1)[i]
            old = flat[i]
            flat[i] = old + h
            fp = float(np.real(fn(*inputs).data))
            flat[i] = old - h
            fm = float(np.real(fn(*inputs).data))
            flat[i] = old
            numeric[n] = (fp - fm) / (2.0 * h)
    scale = np.max(np.abs(numeric))
    err = np.max(np.abs(analytic - numeric))
    return float(err / scale) if scale > 0 else float(err)
