"""Reverse-mode tape and second-order input jets.

Two kinds of derivative are needed to train a PINN:

* derivatives of network outputs with respect to network *inputs*
  (gradients and the diagonal of the Hessian), which enter the PDE
  residuals and Neumann/flux conditions, and
* the derivative of the scalar loss with respect to every trainable
  parameter, including the paths that go through the input derivatives.

Input derivatives are propagated forward as jets (value, per-input tangent,
per-input second tangent).  The parameter gradient is obtained by a reverse
sweep over everything that was computed, recorded on a small tape of
:class:`Var` nodes.  Cross derivatives such as d2u/dxdy are not available.

All arithmetic is float64.  Every op also accepts plain ndarrays, in which
case no tape is recorded and the same numpy calls produce bit-identical
values; this is how loss-only evaluations stay cheap.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, NumericError

__all__ = [
    "Var", "Jet", "Jet2", "value_of", "backward", "square", "vsum", "vmean",
    "evaluate_jet", "loss_gradient",
]


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    ndiff = g.ndim - len(shape)
    if ndiff > 0:
        g = g.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Var:
    """A node on the tape: a float64 array plus how to pull gradients back.

    ``parents`` is a tuple of ``(parent, vjp)`` pairs where ``vjp`` maps the
    gradient of this node to the gradient contribution for ``parent``.
    """

    __slots__ = ("value", "parents")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    def __add__(self, other):
        return _add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _add(self, _neg(other))

    def __rsub__(self, other):
        return _add(other, _neg(self))

    def __mul__(self, other):
        return _mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _div(self, other)

    def __rtruediv__(self, other):
        return _div(other, self)

    def __neg__(self):
        return _neg(self)

    def __pow__(self, p):
        if p == 2:
            return square(self)
        raise NotImplementedError("only integer power 2 is taped")

    def __getitem__(self, idx):
        shape = self.value.shape

        def vjp(g):
            out = np.zeros(shape)
            out[idx] += g
            return out

        return Var(self.value[idx], ((self, vjp),))


def value_of(x):
    return x.value if isinstance(x, Var) else x


def _add(a, b):
    av, bv = value_of(a), value_of(b)
    out = av + bv
    if not isinstance(a, Var) and not isinstance(b, Var):
        return out
    parents = []
    if isinstance(a, Var):
        sa = av.shape
        parents.append((a, lambda g: _unbroadcast(g, sa)))
    if isinstance(b, Var):
        sb = bv.shape
        parents.append((b, lambda g: _unbroadcast(g, sb)))
    return Var(out, tuple(parents))


def _neg(a):
    if not isinstance(a, Var):
        return -a
    return Var(-a.value, ((a, lambda g: -g),))


def _mul(a, b):
    av, bv = value_of(a), value_of(b)
    out = av * bv
    if not isinstance(a, Var) and not isinstance(b, Var):
        return out
    parents = []
    if isinstance(a, Var):
        sa = av.shape
        parents.append((a, lambda g: _unbroadcast(g * bv, sa)))
    if isinstance(b, Var):
        sb = bv.shape
        parents.append((b, lambda g: _unbroadcast(g * av, sb)))
    return Var(out, tuple(parents))


def _div(a, b):
    av, bv = value_of(a), value_of(b)
    out = av / bv
    if not isinstance(a, Var) and not isinstance(b, Var):
        return out
    parents = []
    if isinstance(a, Var):
        sa = av.shape
        parents.append((a, lambda g: _unbroadcast(g / bv, sa)))
    if isinstance(b, Var):
        sb = bv.shape
        parents.append((b, lambda g: _unbroadcast(-g * out / bv, sb)))
    return Var(out, tuple(parents))


def square(a):
    if not isinstance(a, Var):
        return a * a
    av = a.value
    return Var(av * av, ((a, lambda g: 2.0 * av * g),))


def vsum(a):
    """Sum of all entries (numpy pairwise order, deterministic)."""
    if not isinstance(a, Var):
        return np.sum(a)
    shape = a.value.shape
    return Var(np.sum(a.value), ((a, lambda g: np.broadcast_to(g, shape)),))


def vmean(a):
    if not isinstance(a, Var):
        return np.mean(a)
    shape = a.value.shape
    n = a.value.size
    return Var(np.mean(a.value), ((a, lambda g: np.broadcast_to(g / n, shape)),))


def backward(root: Var, leaves: Sequence[Var]) -> list:
    """Gradients of the scalar ``root`` with respect to each leaf."""
    order = []
    seen = set()
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
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    grads = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node.parents:
            grads[id(node)] = g
            continue
        for parent, vjp in node.parents:
            contrib = vjp(g)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + contrib
            else:
                grads[key] = contrib
    return [np.asarray(grads.get(id(leaf), np.zeros_like(leaf.value)), dtype=np.float64)
            for leaf in leaves]


class Jet:
    """Batched jet of one output channel over N points.

    ``grad[i]`` and ``diag2[i]`` hold d/dx and d2/dx2 with respect to the
    i-th differentiated input (the order of ``dims`` used to build it).
    Entries are ndarrays of shape (N,) or :class:`Var`.
    """

    __slots__ = ("value", "grad", "diag2")

    def __init__(self, value, grad=(), diag2=()):
        self.value = value
        self.grad = tuple(grad)
        self.diag2 = tuple(diag2)

    def dn(self, normal):
        """Directional derivative along ``normal`` (first two inputs)."""
        out = self.grad[0] * normal[0]
        for k in range(1, len(normal)):
            if normal[k] != 0.0:
                out = out + self.grad[k] * normal[k]
        return out

    def laplacian(self, ndim=2):
        out = self.diag2[0]
        for k in range(1, ndim):
            out = out + self.diag2[k]
        return out


@dataclass(frozen=True)
class Jet2:
    """Value, gradient and diagonal second derivatives at a single point."""

    value: float
    grad: tuple
    diag2: tuple


def evaluate_jet(field, point: Sequence[float]) -> list[Jet2]:
    """Exact value, gradient and d2/dx_k2 of every output channel of ``field``.

    ``field`` is any object exposing ``input_dim``, ``channels`` and
    ``jets(points, dims, order)``: a network or an analytic test field.
    """
    x = np.asarray(point, dtype=np.float64).reshape(-1)
    if x.size != field.input_dim:
        raise ContractError(
            f"point has {x.size} coordinates, field expects {field.input_dim}")
    dims = tuple(range(field.input_dim))
    jets = field.jets(x[None, :], dims=dims, order=2)
    out = []
    for name in field.channels:
        j = jets[name]
        v = float(value_of(j.value)[0])
        g = tuple(float(value_of(a)[0]) for a in j.grad)
        h = tuple(float(value_of(a)[0]) for a in j.diag2)
        if not (np.isfinite(v) and np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
            raise NumericError(f"non-finite jet at point {x.tolist()}", where=x.tolist())
        out.append(Jet2(v, g, h))
    return out


def loss_gradient(problem, theta) -> tuple[float, np.ndarray]:
    """Composite loss and its exact gradient with respect to ``theta``."""
    loss, grad, _ = problem.evaluate(theta, with_grad=True)
    return loss, grad


def finite_difference_gradient(f: Callable[[np.ndarray], float], theta, step=1e-6):
    """Central differences of a scalar function; used only as a test oracle."""
    theta = np.asarray(theta, dtype=np.float64)
    g = np.empty_like(theta)
    for i in range(theta.size):
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += step
        tm[i] -= step
        g[i] = (f(tp) - f(tm)) / (2.0 * step)
    return g
