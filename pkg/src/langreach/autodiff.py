"""Dense float64 tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array plus the closure needed to push gradients to
its parents. Graphs are built eagerly during the forward pass and torn down
by ``backward()``: after a backward call the intermediate nodes drop their
parent links, so calling backward twice on the same graph raises.

Only the operations the reach agent and the instruction generator need are
implemented: 2-D matmul, elementwise arithmetic with bias-style
broadcasting, the usual pointwise nonlinearities, reductions, concatenation,
elementwise minimum, clamping, embedding lookup and a fused softmax
cross-entropy. No GPU, no convolutions.
"""

from __future__ import annotations

import numpy as np


class GraphError(RuntimeError):
    """Backward called on a detached or already-consumed graph."""


class DimensionError(ValueError):
    """Operand shapes incompatible for the requested op."""


_grad_enabled = True


class no_grad:
    """Context manager that suppresses graph recording (rollouts, targets)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_consumed")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward_fn = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        # g may alias an upstream grad; topological order guarantees it is
        # never mutated afterwards, so aliasing on first assignment is safe.
        self.grad = g if self.grad is None else self.grad + g

    def backward(self):
        """Reverse-mode sweep from this scalar; frees the graph afterwards."""
        if self.data.size != 1:
            raise GraphError("backward requires a scalar loss")
        if self._consumed:
            raise GraphError("backward already ran on this graph; re-run the forward pass")
        if self._backward_fn is None and not self._parents:
            raise GraphError("backward on a detached tensor (no recorded forward ops)")

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)
            # Tear down: leaves (parameters) keep their accumulated grads and
            # stay reusable; interior nodes are single-shot.
            if node._parents or node._backward_fn is not None:
                node._parents = ()
                node._backward_fn = None
                node._consumed = True

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _make(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._parents or p._backward_fn for p in parents):
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum-reduce g over the axes broadcasting added relative to shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# -- arithmetic ----------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def bwd(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def bwd(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(-g, b.data.shape))

    return _make(data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def bwd(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def bwd(g):
        a._accumulate(_unbroadcast(g / b.data, a.data.shape))
        b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(data, (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def bwd(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    return _make(data, (a, b), bwd)


# -- pointwise nonlinearities ---------------------------------------------

def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def bwd(g):
        a._accumulate(g * data)

    return _make(data, (a,), bwd)


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def bwd(g):
        a._accumulate(g / a.data)

    return _make(data, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def bwd(g):
        a._accumulate(g * (1.0 - data * data))

    return _make(data, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    data = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        a._accumulate(g * data * (1.0 - data))

    return _make(data, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def bwd(g):
        a._accumulate(g * (a.data > 0.0))

    return _make(data, (a,), bwd)


def square(a: Tensor) -> Tensor:
    data = a.data * a.data

    def bwd(g):
        a._accumulate(g * 2.0 * a.data)

    return _make(data, (a,), bwd)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Hard clip; gradient is zero outside [lo, hi]."""
    data = np.clip(a.data, lo, hi)

    def bwd(g):
        a._accumulate(g * ((a.data >= lo) & (a.data <= hi)))

    return _make(data, (a,), bwd)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; ties route the gradient to a."""
    data = np.minimum(a.data, b.data)

    def bwd(g):
        take_a = a.data <= b.data
        a._accumulate(_unbroadcast(g * take_a, a.data.shape))
        b._accumulate(_unbroadcast(g * ~take_a, b.data.shape))

    return _make(data, (a, b), bwd)


# -- reductions / reshaping ------------------------------------------------

def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape).copy() if np.ndim(g) else np.full_like(a.data, g))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gg, a.data.shape).copy())

    return _make(data, (a,), bwd)


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), Tensor(1.0 / n))


def concat(tensors, axis=1) -> Tensor:
    parts = [t.data for t in tensors]
    data = np.concatenate(parts, axis=axis)
    splits = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def bwd(g):
        for t, gpart in zip(tensors, np.split(g, splits, axis=axis)):
            t._accumulate(gpart)

    return _make(data, tuple(tensors), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def bwd(g):
        a._accumulate(g.reshape(a.data.shape))

    return _make(data, (a,), bwd)


def slice_cols(a: Tensor, lo: int, hi: int) -> Tensor:
    """Column slice of a 2-D tensor; backward zero-pads."""
    if a.data.ndim != 2:
        raise DimensionError("slice_cols expects a 2-D tensor")
    data = a.data[:, lo:hi]

    def bwd(g):
        full = np.zeros_like(a.data)
        full[:, lo:hi] = g
        a._accumulate(full)

    return _make(data, (a,), bwd)


# -- lookup / classification ------------------------------------------------

def embedding_lookup(table: Tensor, indices) -> Tensor:
    """Rows of table selected by an int array; grads scatter-add into rows."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise DimensionError("embedding_lookup expects a 1-D index array")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise IndexError(f"embedding index out of range for table of {table.data.shape[0]} rows")
    data = table.data[idx]

    def bwd(g):
        scattered = np.zeros_like(table.data)
        np.add.at(scattered, idx, g)
        table._accumulate(scattered)

    return _make(data, (table,), bwd)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax of a plain array (no graph)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Summed -log softmax(logits)[target] over the batch.

    logits: [B, V] (or [V] with a scalar target). Gradient is the usual
    softmax-minus-onehot.
    """
    squeeze = logits.data.ndim == 1
    lg = logits.data[None, :] if squeeze else logits.data
    tg = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if lg.ndim != 2 or tg.ndim != 1 or tg.shape[0] != lg.shape[0]:
        raise DimensionError("softmax_cross_entropy expects [B, V] logits and [B] targets")
    if tg.size and (tg.min() < 0 or tg.max() >= lg.shape[1]):
        raise IndexError(f"target index out of range for {lg.shape[1]} classes")

    z = lg - lg.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    loss = float((lse - z[np.arange(tg.shape[0]), tg]).sum())
    probs = softmax(lg)

    def bwd(g):
        grad = probs.copy()
        grad[np.arange(tg.shape[0]), tg] -= 1.0
        grad *= g
        logits._accumulate(grad[0] if squeeze else grad)

    return _make(np.float64(loss), (logits,), bwd)


def assert_finite(arr: np.ndarray, what: str = "tensor"):
    # sum() of anything containing NaN/Inf is itself non-finite; one pass,
    # no boolean temporary.
    if not np.isfinite(arr.sum()):
        raise FloatingPointError(f"non-finite values in {what}")
