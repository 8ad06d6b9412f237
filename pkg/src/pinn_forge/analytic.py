"""Closed-form fields with exact derivatives, for verification.

Expressions are given as sympy expressions or strings in the input
variables; derivatives are taken symbolically and compiled with
``sympy.lambdify``.
"""
from __future__ import annotations

import numpy as np
import sympy as sp

from .autodiff import Jet
from .errors import ContractError


class AnalyticField:
    """A differentiable field defined by formulas, one per channel."""

    def __init__(self, exprs: dict, variables=("x", "y")):
        self.variables = tuple(variables)
        self.symbols = sp.symbols(self.variables)
        self.channels = tuple(exprs)
        self.exprs = {k: sp.sympify(v, locals=dict(zip(self.variables, self.symbols)))
                      for k, v in exprs.items()}
        self._fns = {}
        for name, e in self.exprs.items():
            self._fns[name] = (
                sp.lambdify(self.symbols, e, "numpy"),
                [sp.lambdify(self.symbols, sp.diff(e, s), "numpy") for s in self.symbols],
                [sp.lambdify(self.symbols, sp.diff(e, s, 2), "numpy") for s in self.symbols],
            )

    @property
    def input_dim(self) -> int:
        return len(self.symbols)

    def _call(self, fn, points):
        n = points.shape[0]
        out = fn(*(points[:, k] for k in range(self.input_dim)))
        return np.array(np.broadcast_to(np.asarray(out, dtype=np.float64), (n,)))

    def jets(self, points, dims=(0, 1), order=2) -> dict:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != self.input_dim:
            raise ContractError(f"points must have shape (N, {self.input_dim})")
        out = {}
        for name, (f, g, h) in self._fns.items():
            value = self._call(f, points)
            grad = [self._call(g[d], points) for d in dims] if order >= 1 else []
            diag2 = [self._call(h[d], points) for d in dims] if order >= 2 else []
            out[name] = Jet(value, grad, diag2)
        return out

    def values(self, points) -> dict:
        return {k: j.value for k, j in self.jets(points, order=0).items()}
