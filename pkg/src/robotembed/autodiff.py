"""Reverse-mode automatic differentiation on a flat tape.

Every node on the tape holds a numpy value (0-d for scalars) together with
the vector-Jacobian products needed to push an upstream gradient back to
its inputs. Operations accept ``Var`` objects or plain numbers/arrays; when
no operand is a ``Var`` they simply compute the value, so the same network
code runs with or without a tape.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class ComputationError(ArithmeticError):
    """Invalid operation on the tape (division by zero, log of x <= 0, NaN)."""


class Tape:
    def __init__(self):
        self.values: list[np.ndarray] = []
        self.inputs: list[tuple] = []
        self.vjps: list[tuple] = []
        self.kinds: list[str] = []
        self.leaves: list[int] = []

    def __len__(self):
        return len(self.values)

    def _push(self, kind, value, inputs=(), vjps=()) -> "Var":
        idx = len(self.values)
        self.values.append(value)
        self.inputs.append(tuple(inputs))
        self.vjps.append(tuple(vjps))
        self.kinds.append(kind)
        return Var(self, idx)

    def var(self, value) -> "Var":
        """Register a leaf (an independent variable)."""
        v = self._push("leaf", np.array(value, dtype=float))
        self.leaves.append(v.index)
        return v


class Var:
    __slots__ = ("tape", "index")
    __array_priority__ = 1000

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.index]

    @property
    def shape(self):
        return self.value.shape

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Var({self.value!r})"

    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __rtruediv__(self, o): return div(o, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, o): return matmul(self, o)
    def __rmatmul__(self, o): return matmul(o, self)
    def __getitem__(self, idx): return take(self, idx)

    @property
    def T(self):
        return transpose(self)


def value(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _record(kind, out, operands, vjps):
    """Push ``out`` if any operand lives on a tape, else return the raw value."""
    tape = _tape_of(*operands)
    if tape is None:
        return out
    ins, fns = [], []
    for x, fn in zip(operands, vjps):
        if isinstance(x, Var):
            if x.tape is not tape:
                raise ComputationError("operands live on different tapes")
            ins.append(x.index)
            fns.append(fn)
    return tape._push(kind, out, ins, fns)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    av, bv = value(a), value(b)
    return _record("add", av + bv, (a, b),
                   (lambda g: _unbroadcast(g, av.shape), lambda g: _unbroadcast(g, bv.shape)))


def sub(a, b):
    av, bv = value(a), value(b)
    return _record("sub", av - bv, (a, b),
                   (lambda g: _unbroadcast(g, av.shape), lambda g: _unbroadcast(-g, bv.shape)))


def mul(a, b):
    av, bv = value(a), value(b)
    return _record("mul", av * bv, (a, b),
                   (lambda g: _unbroadcast(g * bv, av.shape),
                    lambda g: _unbroadcast(g * av, bv.shape)))


def div(a, b):
    av, bv = value(a), value(b)
    if np.any(bv == 0):
        raise ComputationError("division by zero")
    out = av / bv
    return _record("div", out, (a, b),
                   (lambda g: _unbroadcast(g / bv, av.shape),
                    lambda g: _unbroadcast(-g * out / bv, bv.shape)))


def neg(a):
    return _record("neg", -value(a), (a,), (lambda g: -g,))


def tanh(a):
    out = np.tanh(value(a))
    return _record("tanh", out, (a,), (lambda g: g * (1.0 - out * out),))


def sigmoid(a):
    av = value(a)
    # split by sign to avoid overflow in exp
    out = np.where(av >= 0, 1.0 / (1.0 + np.exp(-np.abs(av))),
                   np.exp(-np.abs(av)) / (1.0 + np.exp(-np.abs(av))))
    return _record("sigmoid", out, (a,), (lambda g: g * out * (1.0 - out),))


def exp(a):
    out = np.exp(value(a))
    return _record("exp", out, (a,), (lambda g: g * out,))


def log(a):
    av = value(a)
    if np.any(av <= 0):
        raise ComputationError("log of non-positive value")
    return _record("log", np.log(av), (a,), (lambda g: g / av,))


def abs(a):  # noqa: A001 - mirrors the op name
    av = value(a)
    # subgradient 0 at exactly 0
    return _record("abs", np.abs(av), (a,), (lambda g: g * np.sign(av),))


def maximum(a, b):
    av, bv = value(a), value(b)
    first = av >= bv  # ties go to the first argument
    return _record("max", np.where(first, av, bv), (a, b),
                   (lambda g: _unbroadcast(np.where(first, g, 0.0), av.shape),
                    lambda g: _unbroadcast(np.where(first, 0.0, g), bv.shape)))


def matmul(a, b):
    av, bv = value(a), value(b)

    def ga(g):
        if bv.ndim == 1:
            return np.multiply.outer(g, bv) if av.ndim == 2 else g * bv
        return g @ bv.T

    def gb(g):
        if av.ndim == 1:
            return np.multiply.outer(av, g) if bv.ndim == 2 else g * av
        return av.T @ g

    return _record("matmul", av @ bv, (a, b), (ga, gb))


def transpose(a):
    return _record("transpose", value(a).T, (a,), (lambda g: g.T,))


def reshape(a, shape):
    av = value(a)
    return _record("reshape", av.reshape(shape), (a,), (lambda g: g.reshape(av.shape),))


def sum(a, axis=None):  # noqa: A001
    av = value(a)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, av.shape).copy()

    return _record("sum", np.sum(av, axis=axis), (a,), (vjp,))


def mean(a, axis=None):
    av = value(a)
    n = av.size if axis is None else av.shape[axis]
    return mul(sum(a, axis), 1.0 / n)


def concat(xs: Sequence, axis=-1):
    vals = [value(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])

    def make(i):
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(bounds[i], bounds[i + 1])
        sl = tuple(sl)
        return lambda g: g[sl]

    return _record("concat", out, tuple(xs), tuple(make(i) for i in range(len(xs))))


def take(a, idx):
    """``a[idx]`` for integer arrays, slices or tuples thereof."""
    av = value(a)

    def vjp(g):
        out = np.zeros_like(av)
        np.add.at(out, idx, g)
        return out

    return _record("take", av[idx], (a,), (vjp,))


def set_rows(base, rows, new):
    """Copy of ``base`` with ``base[rows] = new``; ``rows`` must be unique."""
    bv, nv = value(base), value(new)
    out = bv.copy()
    out[rows] = nv

    def gbase(g):
        g = g.copy()
        g[rows] = 0.0
        return g

    return _record("set_rows", out, (base, new), (gbase, lambda g: g[rows]))


def backward(tape: Tape, output: Var) -> list[np.ndarray]:
    """Gradients of a scalar ``output`` w.r.t. every leaf, in creation order."""
    if output.value.size != 1:
        raise ValueError("backward needs a scalar output")
    grads: list = [None] * len(tape.values)
    grads[output.index] = np.ones_like(output.value)
    for i in range(output.index, -1, -1):
        g = grads[i]
        if g is None:
            continue
        for j, fn in zip(tape.inputs[i], tape.vjps[i]):
            contrib = fn(g)
            grads[j] = contrib if grads[j] is None else grads[j] + contrib
    return [np.zeros_like(tape.values[i]) if grads[i] is None else grads[i]
            for i in tape.leaves]


def grad(f: Callable, *args) -> list[np.ndarray]:
    """Gradient of scalar ``f(*vars)`` at the given points."""
    tape = Tape()
    xs = [tape.var(a) for a in args]
    out = f(*xs)
    if not isinstance(out, Var):
        return [np.zeros_like(np.asarray(a, dtype=float)) for a in args]
    return backward(tape, out)


def numerical_grad(f: Callable, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar ``f`` at ``x`` (no tape involved)."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = float(f(x))
        flat[i] = old - h
        fm = float(f(x))
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def check_close(analytic: Iterable, numeric: Iterable, abs_tol=1e-5, rel_tol=1e-4) -> bool:
    a = np.asarray(list(np.ravel(analytic)), dtype=float)
    n = np.asarray(list(np.ravel(numeric)), dtype=float)
    return bool(np.all(np.abs(a - n) <= np.maximum(abs_tol, rel_tol * np.abs(n))))
