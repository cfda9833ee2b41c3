"""Reverse-mode tensor with an explicit tape.

Every op result keeps references to its parents and a closure mapping the
output gradient to one gradient per parent. ``backward`` walks the graph in
reverse topological order and accumulates into leaves that require grad.
Shapes must match exactly (or one side is a Python scalar); there is no
general broadcasting.
"""
from contextlib import contextmanager
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import NonFiniteValue, ShapeMismatch

_default_dtype = np.float32
_grad_enabled = True


def get_default_dtype():
    return _default_dtype


@contextmanager
def precision(dtype):
    """Create tensors in ``dtype`` inside the block (float64 for grad checks)."""
    global _default_dtype
    previous = _default_dtype
    _default_dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _default_dtype = previous


@contextmanager
def no_grad():
    """Skip taping; results carry no parents."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    __array_ufunc__ = None  # ndarray (op) Tensor defers to Tensor

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=_default_dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None
        self._op = ""

    # -- construction -------------------------------------------------
    @staticmethod
    def result(data: np.ndarray, parents: Sequence["Tensor"], backward: BackwardFn, op: str) -> "Tensor":
        """Wrap an op output, taping it when any parent needs gradients."""
        if not np.all(np.isfinite(data)):
            raise NonFiniteValue(f"{op} produced non-finite values")
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.name = op
        out._op = op
        needs = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        out._parents = tuple(parents) if needs else ()
        out._backward = backward if needs else None
        return out

    # -- properties ----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op or 'leaf'})"

    # -- autodiff ------------------------------------------------------
    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if grad is None:
            if self.size != 1:
                raise ShapeMismatch("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = self._topological_order()
        grads = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad

    def _topological_order(self):
        order, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        from src.autodiff import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from src.autodiff import ops
        return ops.add(self, ops.neg(other) if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other):
        from src.autodiff import ops
        return ops.add(ops.neg(self), other)

    def __neg__(self):
        from src.autodiff import ops
        return ops.neg(self)

    def __mul__(self, other):
        from src.autodiff import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from src.autodiff import ops
        if isinstance(other, Tensor):
            raise ShapeMismatch("division by a tensor is not supported")
        return ops.mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __getitem__(self, key):
        from src.autodiff import ops
        return ops.getitem(self, key)

    def sum(self):
        from src.autodiff import ops
        return ops.total(self)

    def mean(self):
        from src.autodiff import ops
        return ops.mean(self)

    def reshape(self, *shape):
        from src.autodiff import ops
        return ops.reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


class Parameter(Tensor):
    """Trainable tensor with its Adam moments."""

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True, name=name)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step_count = 0

    def __repr__(self):
        return f"Parameter({self.name or '?'}, shape={self.shape}, steps={self.step_count})"


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)
