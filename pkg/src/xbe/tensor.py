"""Small dense tensor engine with reverse-mode autodiff.

Everything is float64 numpy underneath.  Broadcasting is deliberately narrow:
a binary op accepts operands of equal shape, a python scalar, or a right
operand whose shape is a trailing suffix of the left one (row bias, position
table).  ``matmul`` additionally accepts a 2-D right operand against a batched
left operand (a shared weight matrix).
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

DTYPE = np.float64

_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (inference only)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.array(data, dtype=DTYPE)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None
        self.op = "leaf"
        self.name = name

    # ---- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{tag})"

    # ---- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)) if not _is_scalar(other) else -other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if _is_scalar(other):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def backward(self) -> None:
        backward(self)


def _is_scalar(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.op = op
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _check_finite(arr: np.ndarray, op: str) -> None:
    if np.isnan(arr).any():
        raise FloatingPointError(f"{op}: NaN in input")


def _sum_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient over leading axes down to a trailing-suffix shape."""
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    return g.sum(axis=tuple(range(lead)))


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape:
        return
    if b.ndim <= a.ndim and a.shape[a.ndim - b.ndim:] == b.shape:
        return
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


# ---- elementwise ----------------------------------------------------------
def add(a: Tensor, b) -> Tensor:
    if _is_scalar(b):
        c = float(b)
        return _make(a.data + c, (a,), lambda g: (g,), "add_scalar")
    b = _as_tensor(b)
    if a.ndim < b.ndim:
        a, b = b, a
    _binary_shapes(a, b, "add")
    bshape = b.shape
    return _make(a.data + b.data, (a, b), lambda g: (g, _sum_to(g, bshape)), "add")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, neg(_as_tensor(b)))


def mul(a: Tensor, b) -> Tensor:
    """Hadamard product (``b`` may be a constant array of the same shape)."""
    b = _as_tensor(b)
    if a.ndim < b.ndim:
        a, b = b, a
    _binary_shapes(a, b, "hadamard")
    ad, bd, bshape = a.data, b.data, b.shape
    return _make(ad * bd, (a, b), lambda g: (g * bd, _sum_to(g * ad, bshape)), "mul")


hadamard = mul


def dropout(a: Tensor, rate: float, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout; identity when ``rate`` is 0, ``rng`` is None or grads are off."""
    if rate <= 0.0 or rng is None or not _GRAD_ENABLED:
        return a
    if not rate < 1.0:
        raise ValueError(f"tensor-core: dropout rate {rate} must lie in [0, 1)")
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, keep)


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0.0)
    return _make(y, (a,), lambda g: (g * (y > 0),), "relu")


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _make(y, (a,), lambda g: (g * y,), "exp")


def log(a: Tensor) -> Tensor:
    x = a.data
    return _make(np.log(x), (a,), lambda g: (g / x,), "log")


def elementwise(kind: str, x: Tensor, y=None) -> Tensor:
    """Dispatch by name: sigmoid, relu, add, hadamard, scale."""
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "relu":
        return relu(x)
    if kind == "add":
        return add(x, y)
    if kind == "hadamard":
        return mul(x, y)
    if kind == "scale":
        return scale(x, float(y))
    raise ValueError(f"unknown elementwise kind {kind!r}")


# ---- linear algebra -------------------------------------------------------
def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: need rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ for {a.shape} and {b.shape}")
    shared = b.ndim == 2 and a.ndim > 2
    if not shared and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dimensions differ for {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    k, n = bd.shape[-2], bd.shape[-1]

    def bw(g):
        if shared:
            # flatten the batch so each product is a single 2-D BLAS call
            g2 = g.reshape(-1, n)
            return (g2 @ bd.T).reshape(ad.shape), ad.reshape(-1, k).T @ g2
        return g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g

    out = (ad.reshape(-1, k) @ bd).reshape(ad.shape[:-1] + (n,)) if shared else ad @ bd
    return _make(out, (a, b), bw, "matmul")


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    """Permute axes; default swaps the last two."""
    if axes is None:
        axes = list(range(a.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    ax = axis % tensors[0].ndim
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make(np.concatenate([t.data for t in tensors], axis=ax), tensors, bw, "concat")


def getitem(a: Tensor, key) -> Tensor:
    shape = a.shape

    def bw(g):
        full = np.zeros(shape, dtype=DTYPE)
        np.add.at(full, key, g)
        return (full,)

    return _make(np.array(a.data[key], dtype=DTYPE), (a,), bw, "getitem")


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]``; ids may have any integer shape."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding: id out of range [0, {table.shape[0]})")
    shape = table.shape

    def bw(g):
        full = np.zeros(shape, dtype=DTYPE)
        np.add.at(full, ids, g)
        return (full,)

    return _make(table.data[ids], (table,), bw, "embedding")


# ---- reductions -----------------------------------------------------------
def sum(a: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001 - mirrors numpy
    shape = a.shape
    if axis is None:
        return _make(np.array(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),), "sum")
    ax = axis % a.ndim
    return _make(
        a.data.sum(axis=ax), (a,), lambda g: (np.broadcast_to(np.expand_dims(g, ax), shape).copy(),), "sum"
    )


def mean(a: Tensor) -> Tensor:
    return scale(sum(a), 1.0 / a.data.size)


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Max-shifted softmax.  ``mask`` (bool, broadcastable) marks kept entries."""
    _check_finite(x.data, "softmax")
    z = x.data if mask is None else np.where(mask, x.data, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (x,), bw, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_finite(x.data, "log_softmax")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse
    p = np.exp(y)

    def bw(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _make(y, (x,), bw, "log_softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalise over the last axis, then apply gain and bias."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias {gain.shape}/{bias.shape} vs width {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data

    def bw(g):
        dxhat = g * gd
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, _sum_to(g * xhat, (d,)), _sum_to(g, (d,))

    return _make(xhat * gd + bias.data, (x, gain, bias), bw, "layer_norm")


def pool(x: Tensor, kind: str, mask: Optional[np.ndarray] = None) -> Tensor:
    """Reduce over the sequence axis (-2) of ``x[..., N, d]``.

    ``mask[..., N]`` marks valid positions.  Max pooling sends the gradient to
    the first maximal index.
    """
    if x.ndim < 2 or x.shape[-2] == 0:
        raise ShapeError(f"pool: empty sequence in shape {x.shape}")
    n = x.shape[-2]
    m = np.ones(x.shape[:-1], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != x.shape[:-1]:
        raise ShapeError(f"pool: mask {m.shape} does not match {x.shape}")
    counts = m.sum(axis=-1, keepdims=True)
    if (counts == 0).any():
        raise ShapeError("pool: empty sequence (all positions masked)")
    if kind == "mean":
        w = m[..., None] / counts[..., None]
        w = np.broadcast_to(w, x.shape)
        return _make((x.data * w).sum(axis=-2), (x,), lambda g: (np.expand_dims(g, -2) * w,), "mean_pool")
    if kind == "max":
        z = np.where(m[..., None], x.data, -np.inf)
        arg = z.argmax(axis=-2)
        out = np.take_along_axis(z, arg[..., None, :], axis=-2)[..., 0, :]
        shape = x.shape

        def bw(g):
            full = np.zeros(shape, dtype=DTYPE)
            np.put_along_axis(full, arg[..., None, :], g[..., None, :], axis=-2)
            return (full,)

        return _make(out, (x,), bw, "max_pool")
    raise ValueError(f"unknown pool kind {kind!r} (n={n})")


# ---- graph ----------------------------------------------------------------
def toposort(root: Tensor) -> list:
    """Nodes reachable from ``root`` in topological order (inputs first)."""
    order: list = []
    seen: set = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every grad-requiring leaf."""
    if loss.data.size != 1 or loss.ndim != 0:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(toposort(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node._parents:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg


def parameters_zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
