"""Reverse-mode differentiation of scalar losses w.r.t. a flat parameter vector.

The engine is deliberately small: float64 numpy arrays as values, a `Tape`
holding all trainable parameters contiguously, and `Node` objects recording
the forward computation so a single backward sweep fills `tape.adjoints`
with the exact gradient. Only the operations needed for MLP-shaped graphs
are provided; derivatives are taken w.r.t. parameters, never inputs.
"""

from __future__ import annotations

import numpy as np


class Tape:
    """Flat float64 parameter vector plus same-length adjoint storage.

    Parameters are registered once at construction, each as a (offset, shape)
    slot viewing into `values`. In-place updates of `values` (e.g. an
    optimizer step) are visible through every slot view.
    """

    def __init__(self, inits):
        arrays = [np.ascontiguousarray(a, dtype=np.float64) for a in inits]
        self.values = (
            np.concatenate([a.ravel() for a in arrays]) if arrays else np.zeros(0)
        )
        self.adjoints = np.zeros_like(self.values)
        self.slots = []
        off = 0
        for a in arrays:
            self.slots.append((off, a.shape))
            off += a.size
        if not np.isfinite(self.values).all():
            raise ValueError("Tape: non-finite initial parameters")

    @property
    def size(self) -> int:
        return self.values.size

    def view(self, i: int) -> np.ndarray:
        """Writable ndarray view of slot i (shares memory with `values`)."""
        off, shape = self.slots[i]
        n = int(np.prod(shape)) if shape else 1
        return self.values[off : off + n].reshape(shape)

    def leaf(self, i: int) -> "Node":
        """Fresh leaf node for slot i; backward accumulates into adjoints."""
        off, shape = self.slots[i]
        node = Node(self.view(i))
        node._param = (self, off)
        return node

    def zero_adjoints(self):
        self.adjoints[:] = 0.0


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient `g` down to `shape` (inverse of numpy broadcasting)."""
    g = np.asarray(g)
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Node:
    """One value in the recorded computation; holds parents and a vjp."""

    __slots__ = ("value", "parents", "vjp", "grad", "_param")

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.vjp = vjp  # vjp(g) -> tuple of per-parent gradients
        self.grad = None
        self._param = None

    @property
    def shape(self):
        return self.value.shape

    # operator sugar; constants (ndarray / float) are lifted automatically
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(np.asarray(x, dtype=np.float64))


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def neg(a) -> Node:
    a = as_node(a)
    return Node(-a.value, (a,), lambda g: (-g,))


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(
        a.value @ b.value,
        (a, b),
        lambda g: (g @ b.value.T, a.value.T @ g),
    )


def square(a) -> Node:
    a = as_node(a)
    return Node(a.value * a.value, (a,), lambda g: (2.0 * a.value * g,))


def silu(a) -> Node:
    """x * sigmoid(x); smooth enough for divergence probing downstream."""
    a = as_node(a)
    sig = 1.0 / (1.0 + np.exp(-a.value))
    return Node(
        a.value * sig,
        (a,),
        lambda g: (g * sig * (1.0 + a.value * (1.0 - sig)),),
    )


def relu(a) -> Node:
    a = as_node(a)
    mask = a.value > 0.0
    return Node(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def vsum(a, axis=None) -> Node:
    a = as_node(a)
    out = a.value.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return Node(out, (a,), vjp)


def vmean(a) -> Node:
    a = as_node(a)
    n = a.value.size
    return Node(
        a.value.mean(),
        (a,),
        lambda g: (np.broadcast_to(g / n, a.shape).copy(),),
    )


def _topo(root: Node):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(tape: Tape, loss: Node) -> np.ndarray:
    """Fill `tape.adjoints` with d(loss)/d(theta) and return it.

    `loss` must be a scalar node of a forward pass recorded on this tape.
    Parameters the loss never touched keep adjoint zero; that is a
    diagnostic state, not an error.
    """
    if loss.value.shape != ():
        raise ValueError("backward: loss must be scalar")
    tape.zero_adjoints()
    order = _topo(loss)
    for node in order:
        node.grad = None
    loss.grad = np.asarray(1.0)
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        if node._param is not None:
            t, off = node._param
            t.adjoints[off : off + node.value.size] += np.asarray(g).ravel()
        if node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if parent.grad is None:
                parent.grad = pg
            else:
                parent.grad = parent.grad + pg
    return tape.adjoints
