"""Small reverse-mode autodiff over numpy arrays.

Only the operator set the joint model needs is implemented. Every value is a
64-bit float array; every op checks its result for NaN/Inf.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Build no backward graph inside the block (inference only)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class NonFiniteError(FloatingPointError):
    pass


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "name", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- construction helpers -------------------------------------------
    @classmethod
    def _make(cls, data: np.ndarray, parents: tuple, backward, op: str) -> "Tensor":
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(f"non-finite value produced by {op}")
        out = cls(data)
        if _GRAD_ENABLED and any(p._requires() for p in parents):
            out._parents = parents
            out._backward = backward
        return out

    def _requires(self) -> bool:
        return self._backward is not None or self.name is not None

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

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

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __len__(self):
        return len(self.data)

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            a._accum(_unbroadcast(g, a.shape))
            b._accum(_unbroadcast(g, b.shape))

        return Tensor._make(a.data + b.data, (a, b), backward, "add")

    __radd__ = __add__

    def __neg__(self):
        a = self
        return Tensor._make(-a.data, (a,), lambda g: a._accum(-g), "neg")

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            if a._requires():
                a._accum(_unbroadcast(g * b.data, a.shape))
            if b._requires():
                b._accum(_unbroadcast(g * a.data, b.shape))

        return Tensor._make(a.data * b.data, (a, b), backward, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self, other
        out_data = a.data / b.data

        def backward(g):
            if a._requires():
                a._accum(_unbroadcast(g / b.data, a.shape))
            if b._requires():
                b._accum(_unbroadcast(-g * out_data / b.data, b.shape))

        return Tensor._make(out_data, (a, b), backward, "div")

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        a = self

        def backward(g):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            a._accum(full)

        return Tensor._make(a.data[idx], (a,), backward, "getitem")

    # -- shape ops --------------------------------------------------------
    def reshape(self, *shape):
        a = self
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Tensor._make(
            a.data.reshape(shape), (a,), lambda g: a._accum(g.reshape(a.shape)), "reshape"
        )

    def transpose(self, *axes):
        a = self
        if not axes:
            axes = tuple(reversed(range(a.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = tuple(np.argsort(axes))
        return Tensor._make(
            a.data.transpose(axes), (a,), lambda g: a._accum(g.transpose(inv)), "transpose"
        )

    @property
    def T(self):
        return self.transpose()

    def swap_last(self):
        axes = list(range(self.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
        return self.transpose(tuple(axes))

    # -- reductions -------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        a = self

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accum(np.broadcast_to(g, a.shape))

        return Tensor._make(
            np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward, "sum"
        )

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- backward ---------------------------------------------------------
    def backward(self, seed: np.ndarray | None = None) -> None:
        order = _topological(self)
        for node in order:
            node.grad = None
        self._accum(np.ones_like(self.data) if seed is None else seed)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
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


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- elementwise ----------------------------------------------------------
def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor._make(out, (a,), lambda g: a._accum(g * out), "exp")


def log(a: Tensor) -> Tensor:
    return Tensor._make(np.log(a.data), (a,), lambda g: a._accum(g / a.data), "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return Tensor._make(out, (a,), lambda g: a._accum(g * 0.5 / out), "sqrt")


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return Tensor._make(out, (a,), lambda g: a._accum(g * out * (1.0 - out)), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor._make(out, (a,), lambda g: a._accum(g * (1.0 - out * out)), "tanh")


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    scale = np.where(a.data > 0, 1.0, slope)
    return Tensor._make(a.data * scale, (a,), lambda g: a._accum(g * scale), "leaky_relu")


def relu(a: Tensor) -> Tensor:
    return leaky_relu(a, 0.0)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return Tensor._make(
        np.clip(a.data, lo, hi), (a,), lambda g: a._accum(g * inside), "clip"
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# -- linear algebra -------------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul expects >=2-d operands, got {a.shape} and {b.shape}")

    def backward(g):
        if a._requires():
            a._accum(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b._requires():
            b._accum(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return Tensor._make(a.data @ b.data, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight.T (+ bias) for x of shape (..., d_in), weight (d_out, d_in)."""
    squeeze = x.ndim == 1
    if squeeze:
        x = x.reshape(1, -1)
    out = matmul(x, weight.swap_last())
    if bias is not None:
        out = out + bias
    return out.reshape(-1) if squeeze else out


# -- structural -----------------------------------------------------------
def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    ax = axis % parts[0].ndim
    bounds = np.cumsum([p.shape[ax] for p in parts])[:-1]

    def backward(g):
        for p, piece in zip(parts, np.split(g, bounds, axis=ax)):
            if p._requires():
                p._accum(piece)

    return Tensor._make(
        np.concatenate([p.data for p in parts], axis=ax), tuple(parts), backward, "concat"
    )


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]

    def backward(g):
        for i, p in enumerate(parts):
            if p._requires():
                p._accum(np.take(g, i, axis=axis))

    return Tensor._make(
        np.stack([p.data for p in parts], axis=axis), tuple(parts), backward, "stack"
    )


def take_rows(table: Tensor, ids) -> Tensor:
    """Embedding lookup: rows of ``table`` at integer ``ids``."""
    return table[np.asarray(ids, dtype=np.int64)]


# -- normalizations -------------------------------------------------------
def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        a._accum(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return Tensor._make(out, (a,), backward, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        a._accum(g - probs * g.sum(axis=axis, keepdims=True))

    return Tensor._make(out, (a,), backward, "log_softmax")


def masked_softmax(a: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax restricted to ``mask``; fully masked rows come out as zeros."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    z = np.where(mask, a.data, -np.inf)
    top = z.max(axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.where(mask, np.exp(np.where(mask, a.data, 0.0) - top), 0.0)
    denom = e.sum(axis=axis, keepdims=True)
    out = e / np.where(denom > 0, denom, 1.0)

    def backward(g):
        a._accum(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return Tensor._make(out, (a,), backward, "masked_softmax")


def l2_normalize(a: Tensor, axis: int = -1) -> Tensor:
    norm = sqrt((a * a).sum(axis=axis, keepdims=True))
    if np.any(norm.data == 0):
        raise ValueError("cannot normalize a zero-norm vector")
    return a / norm


# -- recurrent ------------------------------------------------------------
def lstm(
    x: Tensor, w_ih: Tensor, w_hh: Tensor, bias: Tensor, reverse: bool = False
) -> Tensor:
    """Unidirectional LSTM over the rows of ``x`` with zero initial state.

    Gate layout along the first weight axis is (input, forget, cell, output).
    Returns hidden states ordered like the input rows, also when ``reverse``.
    """
    n = x.shape[0]
    hdim = w_hh.shape[1]
    if w_ih.shape != (4 * hdim, x.shape[1]) or w_hh.shape != (4 * hdim, hdim):
        raise ValueError(
            f"LSTM weight shapes {w_ih.shape}, {w_hh.shape} do not fit input {x.shape}"
        )
    order = range(n - 1, -1, -1) if reverse else range(n)
    pre_x = x.data @ w_ih.data.T + bias.data
    W = w_hh.data
    hs = np.zeros((n, hdim))
    cs = np.zeros((n, hdim))
    gates = np.zeros((n, 4 * hdim))
    h = np.zeros(hdim)
    c = np.zeros(hdim)
    for t in order:
        z = pre_x[t] + W @ h
        i = _sigmoid(z[:hdim])
        f = _sigmoid(z[hdim : 2 * hdim])
        gg = np.tanh(z[2 * hdim : 3 * hdim])
        o = _sigmoid(z[3 * hdim :])
        c = f * c + i * gg
        h = o * np.tanh(c)
        gates[t] = np.concatenate([i, f, gg, o])
        hs[t] = h
        cs[t] = c

    def backward(g):
        dz_all = np.zeros((n, 4 * hdim))
        dh_next = np.zeros(hdim)
        dc_next = np.zeros(hdim)
        steps = list(order)
        for pos in range(n - 1, -1, -1):
            t = steps[pos]
            prev_t = steps[pos - 1] if pos > 0 else None
            c_prev = cs[prev_t] if prev_t is not None else np.zeros(hdim)
            i, f, gg, o = np.split(gates[t], 4)
            tc = np.tanh(cs[t])
            dh = g[t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            di = dc * gg
            dg = dc * i
            df = dc * c_prev
            dz = np.concatenate(
                [di * i * (1 - i), df * f * (1 - f), dg * (1 - gg * gg), do * o * (1 - o)]
            )
            dz_all[t] = dz
            dh_next = W.T @ dz
            dc_next = dc * f
        if x._requires():
            x._accum(dz_all @ w_ih.data)
        if w_ih._requires():
            w_ih._accum(dz_all.T @ x.data)
        if bias._requires():
            bias._accum(dz_all.sum(axis=0))
        if w_hh._requires():
            h_prev = np.zeros((n, hdim))
            for pos in range(1, n):
                h_prev[steps[pos]] = hs[steps[pos - 1]]
            w_hh._accum(dz_all.T @ h_prev)

    return Tensor._make(hs, (x, w_ih, w_hh, bias), backward, "lstm")


def grad_of(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradients of scalar ``loss`` for every named parameter.

    Parameters the loss does not reach get a zero array.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    for p in params.values():
        p.grad = None
    loss.backward()
    grads = {}
    for path, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {path!r}")
        grads[path] = g
    return grads


def detach(a: Tensor) -> np.ndarray:
    return np.array(a.data, copy=True)


def sum_all(items: Iterable[Tensor]) -> Tensor:
    total = None
    for item in items:
        total = item if total is None else total + item
    return total if total is not None else Tensor(0.0)
