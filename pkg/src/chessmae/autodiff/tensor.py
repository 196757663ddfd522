"""Dense tensor with a reverse-mode gradient tape.

Every differentiable op records a :class:`Node` holding its inputs and a
closure that maps the output gradient to input gradients. Nodes carry a
monotonically increasing sequence number, so sorting the reachable nodes by
that number gives a valid topological order without a DFS-based sort.
"""

from __future__ import annotations

import contextlib
import itertools
import threading
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from ..errors import GraphReleasedError, NumericError, ShapeError

_state = threading.local()
_seq = itertools.count()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


def default_dtype() -> np.dtype:
    return getattr(_state, "dtype", np.dtype(np.float32))


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording inside the block (inference)."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextlib.contextmanager
def float64_mode() -> Iterator[None]:
    """Create new tensors in float64. Used by gradient checks only."""
    prev = default_dtype()
    _state.dtype = np.dtype(np.float64)
    try:
        yield
    finally:
        _state.dtype = prev


class Node:
    """One recorded op on the tape."""

    __slots__ = ("seq", "op", "inputs", "backward_fn", "released")

    def __init__(self, op: str, inputs: Sequence["Tensor"], backward_fn: Callable):
        self.seq = next(_seq)
        self.op = op
        self.inputs = tuple(inputs)
        self.backward_fn = backward_fn
        self.released = False

    def release(self) -> None:
        self.backward_fn = None
        self.released = True


class Tensor:
    """n-dimensional float array that can take part in backpropagation.

    Args:
        data: array-like values in ``dtype`` or, when omitted, the current
            default dtype (float32 unless inside :func:`float64_mode`). A
            contiguous array that already has the dtype is used without a copy.
        requires_grad: whether ``grad`` should be populated by backward.
        dtype: explicit storage dtype.
    """

    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str = ""):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = default_dtype()
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[Node] = None
        self.name = name

    @classmethod
    def _from_op(cls, data: np.ndarray, op: str, inputs: Sequence["Tensor"], backward_fn) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = ""
        needs = _grad_enabled() and any(t.requires_grad for t in inputs)
        out.requires_grad = needs
        out.node = Node(op, inputs, backward_fn) if needs else None
        return out

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # -- backward ---------------------------------------------------------
    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Populate ``grad`` on every reachable tensor that requires it.

        The graph's saved buffers are freed afterwards; a second call on the
        same graph raises :class:`GraphReleasedError`.
        """
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a seed gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        if self.node is None:
            if not self.requires_grad:
                raise RuntimeError("tensor does not require grad and has no recorded graph")
            self._accumulate(np.asarray(grad, dtype=self.dtype))
            return

        nodes = {}
        stack = [self]
        while stack:
            t = stack.pop()
            n = t.node
            if n is None or id(n) in nodes:
                continue
            if n.released:
                raise GraphReleasedError("backward() through a graph that has already been released; "
                                         "run a fresh forward pass first")
            nodes[id(n)] = (n, t)
            stack.extend(n.inputs)

        seed = np.asarray(grad, dtype=self.dtype)
        grads = {id(self): seed}
        # creation order is a topological order; walk it backwards
        for n, t in sorted(nodes.values(), key=lambda p: p[0].seq, reverse=True):
            g = grads.pop(id(t), None)
            if g is None:
                n.release()
                continue
            in_grads = n.backward_fn(g)
            n.release()
            for inp, ig in zip(n.inputs, in_grads):
                if ig is None or not inp.requires_grad:
                    continue
                if inp.node is None:
                    inp._accumulate(ig)
                else:
                    key = id(inp)
                    if key in grads:
                        grads[key] = grads[key] + ig
                    else:
                        grads[key] = ig
        # d(loss)/d(loss) = seed, kept for inspection
        self.grad = np.array(seed, copy=True)

    def _accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            g = np.broadcast_to(g, self.data.shape)
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    # -- arithmetic sugar -------------------------------------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def sum(self):
        from . import ops
        return ops.sum(self)

    def mean(self):
        from . import ops
        return ops.mean(self)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def permute(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.permute(self, axes)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def check_finite(t: Tensor, what: str = "tensor") -> Tensor:
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"non-finite values in {what}")
    return t
