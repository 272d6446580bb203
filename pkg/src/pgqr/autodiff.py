"""Reverse-mode automatic differentiation over dense float64 matrices.

Every operation on a :class:`Tensor` appends a node to the :class:`Tape` that
owns it. ``Tape.backward`` walks the nodes in reverse recording order, which is
a valid reverse topological order because a node can only be built from nodes
that already exist.

    tape = Tape()
    x = tape.leaf([[3.0]])
    y = x * x
    grads = tape.backward(y)
    grads[x]  # array([[6.]])
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not conform to a primitive."""


def _as_matrix(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ShapeError(f"tensors are 2-D matrices, got ndim={arr.ndim}")
    return arr


def stable_softplus(x: np.ndarray) -> np.ndarray:
    """``log(1 + exp(x))`` without overflow for large ``|x|``."""
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


class Tensor:
    """A node on a tape: a value matrix plus how to push gradients to parents."""

    __slots__ = ("tape", "index", "value", "parents", "backward_fn", "op")

    def __init__(self, tape: "Tape", value: np.ndarray, parents=(), backward_fn=None, op="leaf"):
        self.tape = tape
        self.value = value
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.op = op
        self.index = tape._append(self)

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape})"

    def _lift(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            if other.tape is not self.tape:
                raise ValueError("operands belong to different tapes")
            return other
        return self.tape.constant(other)

    def __add__(self, other):
        return add(self, self._lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, self._lift(other))

    def __rsub__(self, other):
        return sub(self._lift(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return scale(self, float(other))
        return mul(self, self._lift(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, self._lift(other))


class Tape:
    """Ordered record of primitive operations.

    A tape is single-owner: build it, call :meth:`backward` once or more, then
    discard it. Separate tapes share nothing and may be used from separate
    threads.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def _append(self, node: Tensor) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def leaf(self, values) -> Tensor:
        value = _as_matrix(values)
        _check_finite(value, "leaf")
        return Tensor(self, value)

    def constant(self, values) -> Tensor:
        value = _as_matrix(values)
        _check_finite(value, "constant")
        return Tensor(self, value, op="const")

    def backward(self, root: Tensor) -> dict[Tensor, np.ndarray]:
        """Gradients of the scalar ``root`` with respect to every leaf.

        The returned mapping is keyed by leaf tensor; leaves that do not
        influence ``root`` get all-zero gradients.
        """
        if root.tape is not self:
            raise ValueError("root is not recorded on this tape")
        if root.shape != (1, 1):
            raise ShapeError(f"backward needs a 1x1 root, got {root.shape}")
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[root.index] = np.ones((1, 1))
        for node in reversed(self.nodes[: root.index + 1]):
            g = grads[node.index]
            if g is None or node.backward_fn is None:
                continue
            for parent, contrib in zip(node.parents, node.backward_fn(g)):
                if contrib is None:
                    continue
                if grads[parent.index] is None:
                    grads[parent.index] = contrib
                else:
                    grads[parent.index] = grads[parent.index] + contrib
        out = {}
        for node in self.nodes:
            if node.op != "leaf":
                continue
            g = grads[node.index]
            out[node] = np.zeros_like(node.value) if g is None else g
        return out


def _check_finite(value: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite value produced by {op}")


def _record(op: str, value: np.ndarray, parents: Sequence[Tensor],
            backward_fn: Callable[[np.ndarray], tuple]) -> Tensor:
    _check_finite(value, op)
    return Tensor(parents[0].tape, value, parents, backward_fn, op)


def _same_tape(*tensors: Tensor) -> None:
    tape = tensors[0].tape
    for t in tensors[1:]:
        if t.tape is not tape:
            raise ValueError("operands belong to different tapes")


def _broadcast_kind(a: Tensor, b: Tensor, op: str) -> str:
    """How ``b`` lines up against ``a`` for elementwise binary ops."""
    if a.shape == b.shape:
        return "same"
    if b.shape == (1, 1):
        return "scalar"
    if b.shape == (1, a.shape[1]):
        return "row"
    raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, kind: str) -> np.ndarray:
    if kind == "same":
        return g
    if kind == "scalar":
        return g.sum().reshape(1, 1)
    return g.sum(axis=0, keepdims=True)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _same_tape(a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    av, bv = a.value, b.value

    def backward(g):
        return g @ bv.T, av.T @ g

    return _record("matmul", av @ bv, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """``a + b``; ``b`` may be a 1x1 scalar or a 1xcols bias row."""
    _same_tape(a, b)
    if a.shape != b.shape and a.shape in ((1, 1), (1, b.shape[1])):
        a, b = b, a
    kind = _broadcast_kind(a, b, "add")

    def backward(g):
        return g, _reduce_to(g, kind)

    return _record("add", a.value + b.value, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_tape(a, b)
    if a.shape != b.shape and a.shape == (1, 1):
        kind = _broadcast_kind(b, a, "sub")

        def backward_left(g):
            return _reduce_to(g, kind), -g

        return _record("sub", a.value - b.value, (a, b), backward_left)
    kind = _broadcast_kind(a, b, "sub")

    def backward(g):
        return g, -_reduce_to(g, kind)

    return _record("sub", a.value - b.value, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of equal shapes, or tensor times a 1x1 tensor."""
    _same_tape(a, b)
    if a.shape != b.shape and a.shape == (1, 1):
        a, b = b, a
    kind = _broadcast_kind(a, b, "mul")
    if kind == "row":
        raise ShapeError(f"mul: cannot combine shapes {a.shape} and {b.shape}")
    av, bv = a.value, b.value

    def backward(g):
        return g * bv, _reduce_to(g * av, kind)

    return _record("mul", av * bv, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    def backward(g):
        return (g * c,)

    return _record("scale", a.value * c, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)

    def backward(g):
        return (g * (1.0 - out * out),)

    return _record("tanh", out, (a,), backward)


def relu(a: Tensor) -> Tensor:
    # derivative at exactly 0 is 0
    mask = (a.value > 0).astype(np.float64)

    def backward(g):
        return (g * mask,)

    return _record("relu", a.value * mask, (a,), backward)


def softplus(a: Tensor) -> Tensor:
    av = a.value

    def backward(g):
        return (g * sigmoid(av),)

    return _record("softplus", stable_softplus(av), (a,), backward)


def absolute(a: Tensor) -> Tensor:
    # np.sign(0) == 0 gives the symmetric subgradient at the origin
    sign = np.sign(a.value)

    def backward(g):
        return (g * sign,)

    return _record("abs", np.abs(a.value), (a,), backward)


def log(a: Tensor) -> Tensor:
    av = a.value
    if np.any(av <= 0):
        raise ValueError("log: argument must be strictly positive")

    def backward(g):
        return (g / av,)

    return _record("log", np.log(av), (a,), backward)


def mean(a: Tensor) -> Tensor:
    av = a.value
    n = av.size
    if n == 0:
        raise ShapeError("mean of an empty tensor")

    def backward(g):
        return (np.full_like(av, g[0, 0] / n),)

    return _record("mean", np.array([[av.mean()]]), (a,), backward)


def check_loss(residual: Tensor, tau: Tensor) -> Tensor:
    """Elementwise pinball loss ``u * (tau - 1{u < 0})``.

    Written as ``|u|/2 + (tau - 1/2) u`` so that no indicator appears on the
    tape; the two forms agree for every ``u``.
    """
    if residual.shape != tau.shape:
        raise ShapeError(f"check_loss: residual {residual.shape} vs tau {tau.shape}")
    half_abs = scale(absolute(residual), 0.5)
    return add(half_abs, mul(residual, tau - 0.5))


ACTIVATIONS = {"tanh": tanh, "relu": relu}
