"""Tensors and the single-use tape that records differentiable ops.

Gradients of complex tensors follow the convention g = dL/dRe + i dL/dIm,
so a complex tensor is differentiated as a pair of independent reals.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import TapeError


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_tape", "name")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data)
        if not np.iscomplexobj(arr):
            arr = arr.astype(np.float64, copy=False)
        else:
            arr = arr.astype(np.complex128, copy=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._tape = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_complex(self):
        return np.iscomplexobj(self.data)

    @property
    def tracked(self):
        return self.requires_grad or self._tape is not None

    def numpy(self):
        return self.data

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"


class Tape:
    """Ordered record of ops; backward replays it once in reverse."""

    def __init__(self):
        self.nodes = []
        self.consumed = False

    def record(self, out, inputs, backward_fn):
        if self.consumed:
            raise TapeError("cannot record on a consumed tape")
        out._tape = self
        self.nodes.append((out, inputs, backward_fn))


_state = {"tape": Tape(), "enabled": True}


def current_tape():
    return _state["tape"]


def new_tape():
    """Discard the current tape (if any) and start a fresh one."""
    _state["tape"] = Tape()
    return _state["tape"]


@contextlib.contextmanager
def no_grad():
    """Run ops without recording (inference)."""
    prev = _state["enabled"]
    _state["enabled"] = False
    try:
        yield
    finally:
        _state["enabled"] = prev


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data, inputs, backward_fn):
    """Wrap an op output and record it if any input is tracked."""
    out = Tensor(data)
    if not _state["enabled"]:
        return out
    tape = _state["tape"]
    live = False
    for t in inputs:
        if t._tape is not None and t._tape is not tape:
            raise TapeError("input was produced on a different (consumed) tape")
        live = live or t.tracked
    if live:
        tape.record(out, inputs, backward_fn)
    return out


def _fit(g, like):
    """Cast an incoming gradient to the dtype of the tensor it belongs to."""
    if not np.iscomplexobj(like.data) and np.iscomplexobj(g):
        return g.real
    return g


def backward(loss):
    """Populate ``.grad`` of every requires_grad tensor that feeds ``loss``.

    The tape that produced ``loss`` is consumed; a fresh tape becomes current.
    """
    tape = loss._tape
    if tape is None:
        raise TapeError("loss was not produced on a live tape")
    if tape.consumed:
        raise TapeError("tape already consumed by a previous backward pass")
    if loss.data.size != 1:
        raise TapeError("backward needs a scalar loss")
    tape.consumed = True
    if _state["tape"] is tape:
        new_tape()
    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for out, inputs, fn in reversed(tape.nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        in_grads = fn(g)
        for t, gi in zip(inputs, in_grads):
            if gi is None or not t.tracked:
                continue
            gi = _fit(gi, t)
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
            if t.requires_grad:
                leaves[key] = t
    for key, t in leaves.items():
        if t._tape is None:
            t.grad = grads.get(key)
    tape.nodes.clear()
