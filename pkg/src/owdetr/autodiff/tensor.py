"""Reverse-mode autodiff tensor core.

A Tensor wraps a float64 numpy array. Every differentiable operation
records a node on the thread-local active tape (define-by-run), so the
tape is rebuilt on every forward pass. ``backward(loss)`` sweeps the
recorded nodes once, in reverse creation order, which is a valid
topological order because an operation can only consume tensors that
already exist.

Broadcasting is restricted to leading-dimension expansion: two shapes
are compatible when they are equal or when one is a trailing suffix of
the other. Anything else raises ShapeError.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

from ..errors import ContractError, ShapeError

_state = threading.local()


def _tls():
    if not hasattr(_state, "tape"):
        _state.tape = Tape()
        _state.grad_enabled = True
    return _state


class TapeNode:
    """One recorded operation: inputs, output and its backward rule."""

    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of operations from the current forward pass."""

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def record(self, inputs, output, backward_fn):
        node = TapeNode(inputs, output, backward_fn)
        node_index = len(self.nodes)
        self.nodes.append(node)
        output.node = node
        output._node_index = node_index

    def clear(self):
        self.nodes.clear()

    def __len__(self):
        return len(self.nodes)


def active_tape() -> Tape:
    return _tls().tape


def reset_tape():
    """Drop all recorded operations; leaf tensors keep their grads."""
    _tls().tape = Tape()


def grad_enabled() -> bool:
    return _tls().grad_enabled


@contextmanager
def no_grad():
    tls = _tls()
    prev = tls.grad_enabled
    tls.grad_enabled = False
    try:
        yield
    finally:
        tls.grad_enabled = prev


class Tensor:
    """Float64 n-dimensional array participating in autodiff."""

    __slots__ = ("data", "requires_grad", "grad", "node", "_node_index")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node: TapeNode | None = None
        self._node_index = -1

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; the actual rules live in ops.py.
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops

        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops

        return ops.mul(self, other)

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _is_scalar_shape(shape: tuple) -> bool:
    return int(np.prod(shape, dtype=np.intp)) == 1


def broadcast_result_shape(a: tuple, b: tuple) -> tuple:
    """Shapes must be equal, one a trailing suffix of the other, or scalar."""
    if a == b:
        return a
    if _is_scalar_shape(a):
        return b
    if _is_scalar_shape(b):
        return a
    if len(a) < len(b):
        short, long = a, b
    else:
        short, long = b, a
    if long[len(long) - len(short):] == short:
        return long
    raise ShapeError(f"incompatible shapes {a} and {b}")


def reduce_to_shape(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the leading axes added by broadcasting."""
    if grad.shape == shape:
        return grad
    if _is_scalar_shape(shape):
        return np.asarray(grad.sum()).reshape(shape)
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    if grad.shape != shape:
        raise ShapeError(f"cannot reduce grad {grad.shape} to {shape}")
    return grad


def record(inputs, out_data, backward_fn) -> Tensor:
    """Create the op output, recording it when grads are live."""
    out = Tensor(out_data)
    if grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        active_tape().record(list(inputs), out, backward_fn)
    return out


def backward(loss: Tensor):
    """Accumulate d(loss)/d(t) into t.grad for every requires_grad tensor.

    Repeated calls without zeroing grads accumulate. Each recorded node
    is visited exactly once per call.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad or loss.node is None:
        raise ContractError("loss is not connected to the active tape")

    tape = active_tape()
    if loss._node_index >= len(tape.nodes) or tape.nodes[loss._node_index] is not loss.node:
        raise ContractError("loss was recorded on a tape that has been reset")

    # Per-call gradient map so repeated backward() calls add one clean
    # d(loss)/dx contribution each time.
    flow: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    holders: dict[int, Tensor] = {id(loss): loss}

    for node in reversed(tape.nodes[: loss._node_index + 1]):
        g_out = flow.pop(id(node.output), None)
        if g_out is None:
            continue
        holders.pop(id(node.output), None)
        if node.output.requires_grad:
            _accumulate(node.output, g_out)
        input_grads = node.backward_fn(g_out)
        for inp, g in zip(node.inputs, input_grads):
            if g is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in flow:
                flow[key] = flow[key] + g
            else:
                flow[key] = g
                holders[key] = inp

    # Whatever is left belongs to leaves (tensors with no recorded node).
    for key, g in flow.items():
        _accumulate(holders[key], g)


def _accumulate(t: Tensor, g: np.ndarray):
    g = np.asarray(g, dtype=np.float64)
    if g.shape != t.data.shape:
        g = g.reshape(t.data.shape)
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad = t.grad + g
