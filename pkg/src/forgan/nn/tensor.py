"""Array-valued reverse-mode automatic differentiation.

Every operation on :class:`Tensor` objects that require gradients records a
closure on the output node.  :meth:`Tensor.backward` walks the recorded graph
in reverse topological order and accumulates ``d loss / d node`` into each
node's ``grad`` buffer.  All values are stored as float64 numpy arrays.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from ..exceptions import ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference, target networks)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- graph plumbing ------------------------------------------------
    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Populate ``grad`` on every tensor that contributed to this scalar."""
        if self.data.size != 1:
            raise ShapeError(
                f"backward() requires a scalar loss, got shape {self.shape}"
            )
        if not self.requires_grad:
            raise ShapeError("backward() called on a tensor that does not require grad")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    # interior node: its gradient is no longer needed
                    node.grad = None

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    track = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = track
    if track:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise binary ------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


# -- linear algebra ------------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward)


def linear(x, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Batched affine map ``x @ weight.T + bias`` with ``weight`` stored [out, in]."""
    x = as_tensor(x)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"linear: input width {x.shape[-1] if x.ndim else None} does not match "
            f"weight of shape {weight.shape}"
        )
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ weight.data)
        if weight.requires_grad:
            weight._accumulate(g.T @ x.data)
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=0))

    return _make(out, parents, backward)


# -- activations ---------------------------------------------------------
def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # tanh form never overflows
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def backward(g):
        x._accumulate(g * s * (1.0 - s))

    return _make(s, (x,), backward)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)

    def backward(g):
        x._accumulate(g * (1.0 - t * t))

    return _make(t, (x,), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        x._accumulate(g * mask)

    return _make(np.where(mask, x.data, 0.0), (x,), backward)


def identity(x) -> Tensor:
    return as_tensor(x)


def log(x, eps: float = 0.0) -> Tensor:
    """Natural log of ``x + eps``."""
    x = as_tensor(x)
    shifted = x.data + eps

    def backward(g):
        x._accumulate(g / shifted)

    return _make(np.log(shifted), (x,), backward)


def sqrt(x, eps: float = 0.0) -> Tensor:
    x = as_tensor(x)
    r = np.sqrt(x.data + eps)

    def backward(g):
        x._accumulate(g * 0.5 / r)

    return _make(r, (x,), backward)


def square(x) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        x._accumulate(2.0 * g * x.data)

    return _make(x.data * x.data, (x,), backward)


# -- reductions and reshaping -------------------------------------------
def sum_all(x) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        x._accumulate(np.broadcast_to(g, x.shape))

    return _make(np.array(x.data.sum()), (x,), backward)


def mean_all(x) -> Tensor:
    x = as_tensor(x)
    n = x.data.size

    def backward(g):
        x._accumulate(np.broadcast_to(g / n, x.shape))

    return _make(np.array(x.data.mean()), (x,), backward)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    original = x.shape

    def backward(g):
        x._accumulate(g.reshape(original))

    return _make(x.data.reshape(shape), (x,), backward)


def getitem(x, index) -> Tensor:
    x = as_tensor(x)
    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(p, (slice, int, type(Ellipsis))) or p is None for p in parts)

    def backward(g):
        full = np.zeros_like(x.data)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        x._accumulate(full)

    return _make(x.data[index], (x,), backward)


def concat(tensors: Iterable, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty list")
    sizes = [t.shape[axis] for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                t._accumulate(np.take(g, np.arange(lo, hi), axis=axis))

    return _make(out, tensors, backward)


# -- fused recurrent step ------------------------------------------------
def lstm_step(x, h, c, W: Sequence[Tensor], U: Sequence[Tensor],
              b: Sequence[Tensor]) -> Tensor:
    """One LSTM step as a single tape node.

    ``W``, ``U`` and ``b`` hold the input, forget, cell and output gate parameters
    in that order.  Returns ``[h', c']`` stacked along the feature axis, so the
    result has shape [B, 2H].
    """
    x, h, c = as_tensor(x), as_tensor(h), as_tensor(c)
    H = h.shape[1]
    Wc = np.concatenate([w.data for w in W])
    Uc = np.concatenate([u.data for u in U])
    z = x.data @ Wc.T + h.data @ Uc.T + np.concatenate([v.data for v in b])
    act = 0.5 * (1.0 + np.tanh(0.5 * z))
    act[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
    i, f, g, o = act[:, :H], act[:, H:2 * H], act[:, 2 * H:3 * H], act[:, 3 * H:]
    c_new = f * c.data + i * g
    tc = np.tanh(c_new)
    params = (*W, *U, *b)

    def backward(grad):
        gh, gc = grad[:, :H], grad[:, H:]
        dc = gc + gh * o * (1.0 - tc * tc)
        dz = np.empty_like(z)
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c.data * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H:] = gh * tc * o * (1.0 - o)
        if x.requires_grad:
            x._accumulate(dz @ Wc)
        if h.requires_grad:
            h._accumulate(dz @ Uc)
        if c.requires_grad:
            c._accumulate(dc * f)
        dW, dU, db = dz.T @ x.data, dz.T @ h.data, dz.sum(axis=0)
        for k in range(4):
            rows = slice(k * H, (k + 1) * H)
            for p, d in ((W[k], dW), (U[k], dU), (b[k], db)):
                if p.requires_grad:
                    p._accumulate(d[rows])

    return _make(np.concatenate([o * tc, c_new], axis=1), (x, h, c, *params), backward)
