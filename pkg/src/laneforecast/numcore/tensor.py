"""Dense fp64 tensors with tape-based reverse-mode differentiation.

Operations executed while a :class:`Tape` is active are recorded together
with a closure that maps the output gradient to input gradients.  Outside a
tape nothing is recorded, which makes inference cheap.

    >>> w = Tensor([[1.0, 2.0]], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = (w * w).sum()
    >>> _ = backward(loss, tape)
    >>> w.grad.tolist()
    [[2.0, 4.0]]
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(RuntimeError):
    """An operation was called outside its contract."""


_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class BranchProbe:
    """Collects the branch taken by every piecewise op evaluated inside it.

    Finite-difference checks use this to tell when the two sides of a central
    difference fall on different pieces (a ReLU sign flip, say), where the
    difference quotient does not estimate the derivative.
    """

    def __init__(self):
        self.patterns: list[np.ndarray] = []

    def __enter__(self) -> "BranchProbe":
        _local.probe = self
        return self

    def __exit__(self, *exc) -> None:
        _local.probe = None

    def same_branches(self, other: "BranchProbe") -> bool:
        return len(self.patterns) == len(other.patterns) and all(
            a.shape == b.shape and np.array_equal(a, b)
            for a, b in zip(self.patterns, other.patterns))


def note_branch(pattern) -> None:
    """Record a piecewise op's branch selection when a probe is listening."""
    probe = getattr(_local, "probe", None)
    if probe is not None:
        probe.patterns.append(np.array(pattern, copy=True))


class Tensor:
    """An n-dimensional fp64 array that can take part in differentiation."""

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class _Record:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered log of differentiable operations executed inside ``with``."""

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        return backward(loss, self)


def result(data: np.ndarray, inputs: Sequence[Tensor], grad_fn) -> Tensor:
    """Wrap an op output and record it when any input needs a gradient."""
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.records.append(_Record(out, tuple(inputs), grad_fn))
    return out


def backward(loss: Tensor, tape: Tape) -> dict[Tensor, np.ndarray]:
    """Replay ``tape`` in reverse from scalar ``loss``.

    Gradients are accumulated into ``.grad`` of every leaf tensor that
    requires one; the returned mapping holds the gradient from this call.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = {id(rec.out) for rec in tape.records}
    leaves: dict[int, Tensor] = {}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.out), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key not in produced:
                leaves[key] = inp
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    out = {}
    for key, leaf in leaves.items():
        g = grads[key]
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
        out[leaf] = g
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def grad_fn(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return result(a.data @ b.data, (a, b), grad_fn)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    note_branch(mask)
    return result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return result(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), grad_fn)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / max(int(count), 1))


def reshape(x: Tensor, shape) -> Tensor:
    return result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return result(np.concatenate([p.data for p in parts], axis=axis), parts, grad_fn)


def getitem(x: Tensor, index) -> Tensor:
    def grad_fn(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return result(x.data[index], (x,), grad_fn)


def _check_indices(indices: np.ndarray, size: int, what: str) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= size):
        raise IndexError(f"{what}: index out of range for axis of size {size}")
    return indices


def index_select(x: Tensor, indices) -> Tensor:
    """Gather rows ``x[indices]``; the gradient scatters back with summation."""
    indices = _check_indices(indices, x.shape[0], "index_select")

    def grad_fn(g):
        full = np.zeros_like(x.data)
        np.add.at(full, indices, g)
        return (full,)

    return result(x.data[indices], (x,), grad_fn)


def scatter_add(src: Tensor, indices, size: int) -> Tensor:
    """Sum rows of ``src`` into a zero tensor with ``size`` rows at ``indices``."""
    indices = _check_indices(indices, size, "scatter_add")
    if len(indices) != src.shape[0]:
        raise ShapeError(f"scatter_add: {len(indices)} indices for {src.shape[0]} rows")
    out = np.zeros((size,) + src.shape[1:])
    np.add.at(out, indices, src.data)
    return result(out, (src,), lambda g: (g[indices],))


def smooth_l1(x: Tensor) -> Tensor:
    """Elementwise 0.5 x^2 where |x| < 1, |x| - 0.5 elsewhere."""
    ax = np.abs(x.data)
    inner = ax < 1.0
    note_branch(inner)
    out = np.where(inner, 0.5 * x.data * x.data, ax - 0.5)
    slope = np.where(inner, x.data, np.sign(x.data))
    return result(out, (x,), lambda g: (g * slope,))
