"""Pointwise residual operators for the governing equations.

Each operator takes a bundle of :class:`~pinn_forge.autodiff.Jet` objects
keyed by channel name, the (N, d) array of points they were evaluated at,
and a coefficient record.  Input index 0 is x and 1 is y.  Values inside
the jets and the coefficients may be ndarrays or taped ``Var`` objects;
operators are written with plain arithmetic so both work.
"""
from __future__ import annotations

import numbers
from dataclasses import dataclass, fields as dc_fields
from typing import Callable

import numpy as np

from .autodiff import square, value_of
from .errors import ContractError, NumericError


def _check(name, value, ok, rule):
    if isinstance(value, numbers.Real) and not ok(value):
        raise ContractError(f"{name} must be {rule}, got {value}")


@dataclass(frozen=True)
class FluidCoefficients:
    rho: object = 1.0
    mu: object = 0.01
    beta: object = 0.0
    g: object = 0.0
    kf: object = 0.025
    cp: object = 1.0

    def __post_init__(self):
        _check("rho", self.rho, lambda v: v > 0, "> 0")
        _check("mu", self.mu, lambda v: v >= 0, ">= 0")
        _check("kf", self.kf, lambda v: v >= 0, ">= 0")
        _check("cp", self.cp, lambda v: v > 0, "> 0")


@dataclass(frozen=True)
class SolidCoefficients:
    ks: object = 1.0

    def __post_init__(self):
        _check("ks", self.ks, lambda v: v > 0, "> 0")


@dataclass(frozen=True)
class RansCoefficients:
    nu: object = 1.0 / 5100.0
    rho: object = 1.0

    def __post_init__(self):
        _check("nu", self.nu, lambda v: v > 0, "> 0")
        _check("rho", self.rho, lambda v: v > 0, "> 0")


@dataclass(frozen=True)
class PoissonCoefficients:
    """gamma * laplacian(u) + source = 0; ``source`` is an array or f(points)."""

    gamma: object = 1.0
    source: object = 0.0


def coefficient_fields(coeffs):
    return [f.name for f in dc_fields(coeffs)]


def _finite(residuals, points):
    for r in residuals:
        v = value_of(r)
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(np.broadcast_to(v, (points.shape[0],))))[0])
            raise NumericError(f"non-finite residual at point {points[bad].tolist()}",
                               where=points[bad].tolist())
    return residuals


def residual_ns_buoyancy(fields, points, coeffs: FluidCoefficients):
    """(continuity, momentum-x, momentum-y, energy) of steady incompressible
    Navier-Stokes with Boussinesq buoyancy; gravity acts along -y."""
    u, v, T, p = fields["u"], fields["v"], fields["T"], fields["p"]
    rho, mu = coeffs.rho, coeffs.mu
    nu = mu / rho
    alpha = coeffs.kf / (rho * coeffs.cp)
    cont = u.grad[0] + v.grad[1]
    mom_x = (u.value * u.grad[0] + v.value * u.grad[1] + p.grad[0] / rho
             - nu * (u.diag2[0] + u.diag2[1]))
    mom_y = (u.value * v.grad[0] + v.value * v.grad[1] + p.grad[1] / rho
             - nu * (v.diag2[0] + v.diag2[1]))
    if not (isinstance(coeffs.g, numbers.Real) and coeffs.g == 0.0):
        mom_y = mom_y - coeffs.beta * coeffs.g * T.value - coeffs.g
    energy = u.value * T.grad[0] + v.value * T.grad[1] - alpha * (T.diag2[0] + T.diag2[1])
    return _finite((cont, mom_x, mom_y, energy), points)


residual_ns_buoyancy.components = ("continuity", "momentum_x", "momentum_y", "energy")


def residual_ns_thermal(fields, points, coeffs: FluidCoefficients):
    """Same system without gravity (beta = g = 0)."""
    no_gravity = FluidCoefficients(coeffs.rho, coeffs.mu, 0.0, 0.0, coeffs.kf, coeffs.cp)
    return residual_ns_buoyancy(fields, points, no_gravity)


residual_ns_thermal.components = residual_ns_buoyancy.components


def residual_heat(fields, points, coeffs: SolidCoefficients):
    T = fields["T"]
    return _finite((coeffs.ks * (T.diag2[0] + T.diag2[1]),), points)


residual_heat.components = ("heat",)


def residual_rans(fields, points, coeffs: RansCoefficients):
    """(continuity, momentum-x, momentum-y) of the RANS equations with an
    eddy viscosity nu_t = nu_tilde**2.

    Convection is in conservative form, d(UU)/dx = 2 U U_x etc.  Diffusion
    d/dx((nu + nu_t) U_x) is expanded by the product rule so no cross
    derivative is needed.
    """
    U, V, P, s = fields["U"], fields["V"], fields["P"], fields["nu"]
    rho, nu = coeffs.rho, coeffs.nu
    nut = square(s.value)
    visc = nu + nut
    ds_x = 2.0 * s.value * s.grad[0]
    ds_y = 2.0 * s.value * s.grad[1]
    cont = U.grad[0] + V.grad[1]
    mom_x = (2.0 * U.value * U.grad[0] + U.grad[1] * V.value + U.value * V.grad[1]
             + P.grad[0] / rho
             - (ds_x * U.grad[0] + visc * U.diag2[0])
             - (ds_y * U.grad[1] + visc * U.diag2[1]))
    mom_y = (U.grad[0] * V.value + U.value * V.grad[0] + 2.0 * V.value * V.grad[1]
             + P.grad[1] / rho
             - (ds_x * V.grad[0] + visc * V.diag2[0])
             - (ds_y * V.grad[1] + visc * V.diag2[1]))
    return _finite((cont, mom_x, mom_y), points)


residual_rans.components = ("continuity", "momentum_x", "momentum_y")


def residual_poisson(fields, points, coeffs: PoissonCoefficients):
    u = fields["u"]
    src = coeffs.source(points) if callable(coeffs.source) else coeffs.source
    return _finite((coeffs.gamma * (u.diag2[0] + u.diag2[1]) + src,), points)


residual_poisson.components = ("poisson",)


def boussinesq_correlation(fields, points=None):
    """Reynolds shear stress u'v' = -nu_t (U_y + V_x)."""
    U, V, s = fields["U"], fields["V"], fields["nu"]
    return -square(s.value) * (U.grad[1] + V.grad[0])


def components_of(op) -> tuple:
    return getattr(op, "components", ())


class ManufacturedForcing:
    """Residual operator shifted so that ``analytic`` solves it exactly.

    ``r'(fields) = r(fields) - r(analytic)``.  With ``coeffs`` given the
    forcing uses those fixed (true) coefficients and is cached per points
    array; pass them whenever the runtime coefficients are trainable, since
    the forcing is always treated as a constant.
    """

    def __init__(self, op: Callable, analytic, coeffs=None, dims=(0, 1)):
        self.op = op
        self.analytic = analytic
        self.coeffs = coeffs
        self.dims = tuple(dims)
        self.components = components_of(op)
        self.__name__ = f"forced_{getattr(op, '__name__', 'residual')}"
        self._cache: list = []

    def forcing(self, points, coeffs=None):
        if self.coeffs is None:
            return self._evaluate(points, coeffs)
        for pts, f in self._cache:
            if pts is points:
                return f
        f = self._evaluate(points, self.coeffs)
        self._cache.append((points, f))
        if len(self._cache) > 16:
            self._cache.pop(0)
        return f

    def _evaluate(self, points, coeffs):
        jets = self.analytic.jets(points, dims=self.dims, order=2)
        n = points.shape[0]
        return tuple(np.broadcast_to(np.asarray(value_of(r), dtype=np.float64), (n,))
                     for r in self.op(jets, points, coeffs))

    def __call__(self, fields, points, coeffs):
        res = self.op(fields, points, coeffs)
        f = self.forcing(points, coeffs)
        return tuple(r - fi for r, fi in zip(res, f))


def manufactured_forcing(residual_op, analytic_fields, coeffs=None) -> ManufacturedForcing:
    return ManufacturedForcing(residual_op, analytic_fields, coeffs)
