"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A tape is a DAG of Node objects built on the fly by the op functions below.
Every op accepts Nodes, numpy arrays or plain numbers; if no argument is a
Node the op falls through to plain numpy, so the same formula can serve both
training (differentiable) and evaluation (fast, tape-free) code paths.

Tapes are single-threaded and rebuilt per training step; node values are
immutable after construction.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import digamma as _digamma
from scipy.special import gammaln as _gammaln


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class DomainError(ValueError):
    """An operand lies outside the op's mathematical domain."""


class Node:
    """One vertex of the tape: a value, its gradient, and a backward rule."""

    __slots__ = ("value", "grad", "parents", "_backward_rule")

    def __init__(self, value, parents=(), backward_rule=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = tuple(parents)
        self._backward_rule = backward_rule

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    # convenience operators so formulas read naturally
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        return f"Node(shape={self.value.shape})"


def tensor(values, check=True):
    """Wrap values as a leaf Node; checked mode rejects NaN/Inf."""
    arr = np.asarray(values, dtype=np.float64)
    if check and not np.all(np.isfinite(arr)):
        raise DomainError("non-finite values in tensor construction")
    return Node(arr)


def is_node(x):
    return isinstance(x, Node)


def _val(x):
    if isinstance(x, Node):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary(a, b, out_val, da, db):
    """Build a broadcasting binary op node; da/db map output grad to operand grad."""
    if not (isinstance(a, Node) or isinstance(b, Node)):
        return out_val
    parents = []
    rules = []
    for operand, dfun in ((a, da), (b, db)):
        if isinstance(operand, Node):
            parents.append(operand)
            rules.append((operand, dfun))
    out = Node(out_val, parents)

    def backward_rule(g):
        for operand, dfun in rules:
            operand._accumulate(_unbroadcast(dfun(g), operand.value.shape))

    out._backward_rule = backward_rule
    return out


def _unary(a, out_val, da):
    if not isinstance(a, Node):
        return out_val
    out = Node(out_val, (a,))

    def backward_rule(g):
        a._accumulate(_unbroadcast(da(g), a.value.shape))

    out._backward_rule = backward_rule
    return out


def _check_broadcast(av, bv, opname):
    try:
        np.broadcast_shapes(av.shape, bv.shape)
    except ValueError:
        raise ShapeError(
            f"{opname}: shapes {av.shape} and {bv.shape} are not broadcastable"
        ) from None


def add(a, b):
    av, bv = _val(a), _val(b)
    _check_broadcast(av, bv, "add")
    return _binary(a, b, av + bv, lambda g: g, lambda g: g)


def sub(a, b):
    av, bv = _val(a), _val(b)
    _check_broadcast(av, bv, "sub")
    return _binary(a, b, av - bv, lambda g: g, lambda g: -g)


def mul(a, b):
    av, bv = _val(a), _val(b)
    _check_broadcast(av, bv, "mul")
    return _binary(a, b, av * bv, lambda g: g * bv, lambda g: g * av)


def div(a, b):
    av, bv = _val(a), _val(b)
    _check_broadcast(av, bv, "div")
    return _binary(a, b, av / bv, lambda g: g / bv, lambda g: -g * av / (bv * bv))


def matmul(a, b):
    av, bv = _val(a), _val(b)
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul: shapes {av.shape} and {bv.shape} do not align")
    return _binary(a, b, av @ bv, lambda g: g @ bv.T, lambda g: av.T @ g)


def einsum(equation, a, b):
    """Two-operand einsum with swap-rule backward.

    Restriction: every subscript of each operand must also appear in the
    output or the other operand, and no operand may repeat a subscript.
    All equations used in this package satisfy this.
    """
    av, bv = _val(a), _val(b)
    lhs, out_sub = equation.split("->")
    a_sub, b_sub = lhs.split(",")
    out_val = np.einsum(equation, av, bv)

    def da(g):
        return np.einsum(f"{out_sub},{b_sub}->{a_sub}", g, bv)

    def db(g):
        return np.einsum(f"{out_sub},{a_sub}->{b_sub}", g, av)

    return _binary(a, b, out_val, da, db)


def sum_(a, axis=None):
    av = _val(a)
    out_val = av.sum(axis=axis)

    def da(g):
        if axis is None:
            return np.broadcast_to(g, av.shape)
        return np.broadcast_to(np.expand_dims(g, axis), av.shape)

    return _unary(a, out_val, da)


def mean(a, axis=None):
    av = _val(a)
    n = av.size if axis is None else av.shape[axis]
    s = sum_(a, axis=axis)
    return div(s, float(n))


def exp(a):
    out_val = np.exp(_val(a))
    return _unary(a, out_val, lambda g: g * out_val)


def log(a):
    av = _val(a)
    if np.any(av <= 0):
        raise DomainError("log: non-positive operand")
    return _unary(a, np.log(av), lambda g: g / av)


def log1p(a):
    av = _val(a)
    if np.any(av <= -1):
        raise DomainError("log1p: operand <= -1")
    return _unary(a, np.log1p(av), lambda g: g / (1.0 + av))


def sqrt(a):
    av = _val(a)
    if np.any(av < 0):
        raise DomainError("sqrt: negative operand")
    out_val = np.sqrt(av)
    return _unary(a, out_val, lambda g: g / (2.0 * out_val))


def square(a):
    av = _val(a)
    return _unary(a, av * av, lambda g: g * 2.0 * av)


def sin(a):
    av = _val(a)
    return _unary(a, np.sin(av), lambda g: g * np.cos(av))


def atan(a):
    av = _val(a)
    return _unary(a, np.arctan(av), lambda g: g / (1.0 + av * av))


def _sigmoid_val(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    av = np.atleast_1d(_val(a))
    out_val = _sigmoid_val(av).reshape(_val(a).shape)
    return _unary(a, out_val, lambda g: g * out_val * (1.0 - out_val))


def silu(a):
    av = _val(a)
    sig = _sigmoid_val(np.atleast_1d(av)).reshape(av.shape)
    out_val = av * sig
    return _unary(a, out_val, lambda g: g * (sig + av * sig * (1.0 - sig)))


def softplus(a):
    # stable form max(x,0) + log1p(exp(-|x|)); gradient is sigmoid(x)
    av = _val(a)
    out_val = np.maximum(av, 0.0) + np.log1p(np.exp(-np.abs(av)))
    sig = _sigmoid_val(np.atleast_1d(av)).reshape(av.shape)
    return _unary(a, out_val, lambda g: g * sig)


def lgamma(a):
    av = _val(a)
    if np.any(av <= 0):
        raise DomainError("lgamma: non-positive operand")
    return _unary(a, _gammaln(av), lambda g: g * _digamma(av))


def clamp(a, lo, hi):
    # subgradient convention: identity inside [lo, hi] (boundary inclusive)
    av = _val(a)
    out_val = np.clip(av, lo, hi)
    inside = (av >= lo) & (av <= hi)
    return _unary(a, out_val, lambda g: g * inside)


def broadcast(a, shape):
    av = _val(a)
    _check_broadcast(av, np.empty(shape), "broadcast")
    return _unary(a, np.broadcast_to(av, shape).copy(), lambda g: g)


def custom(value, parents, backward_rule):
    """Escape hatch for primitives with hand-written backward rules."""
    return Node(value, parents, backward_rule)


def backward(root):
    """Accumulate d(root)/d(node) into every reachable node's grad."""
    if root.value.size != 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.value.shape}")
    order = []
    seen = set()
    stack = [(root, False)]
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
            stack.append((p, False))
    root._accumulate(np.ones_like(root.value))
    for node in reversed(order):
        if node._backward_rule is not None and node.grad is not None:
            node._backward_rule(node.grad)


def zero_gradients(nodes):
    for node in nodes:
        node.grad = None


LOG_2PI = math.log(2.0 * math.pi)
