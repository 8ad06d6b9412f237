"""Manufactured-solution problems with known answers.

* ``ns_thermal``: forced steady Navier-Stokes with heat transport on the
  unit square; a forward solve checked against the analytic fields.
* ``rans_twin``: the backward-facing-step assimilation problem with forcing
  chosen so a closed-form mean flow and eddy viscosity solve it exactly;
  eddy-viscosity recovery is scored against the formula.
* ``poisson_gamma``: an unknown diffusion coefficient recovered from a few
  observations of the solution.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import sympy as sp

from ..analytic import AnalyticField
from ..loss import DataTerm, DirichletTerm, NetworkSlot, PdeTerm, Trainable, TrainingProblem
from ..network import MlpSpec
from ..optim import Phase
from ..physics import (FluidCoefficients, PoissonCoefficients, RansCoefficients, manufactured_forcing,
                       residual_ns_thermal, residual_poisson, residual_rans)
from ..sampling import SamplingSet, Segment, boundary_sample, latin_hypercube
from .bfs import STANDARD_SECTIONS, BfsConfig, build_bfs_assimilation, synthetic_bfs_observations
from .common import input_map_for

UNIT_SQUARE = [[0.0, 1.0], [0.0, 1.0]]


def _square_sides():
    return [
        Segment("bottom", (0.0, 0.0), (1.0, 0.0), (0.0, -1.0)),
        Segment("right", (1.0, 0.0), (1.0, 1.0), (1.0, 0.0)),
        Segment("top", (1.0, 1.0), (0.0, 1.0), (0.0, 1.0)),
        Segment("left", (0.0, 1.0), (0.0, 0.0), (-1.0, 0.0)),
    ]


def _square_boundary(n_per_side: int) -> SamplingSet:
    sides = _square_sides()
    # each side keeps its start corner only
    pts = np.concatenate([boundary_sample(s, n_per_side + 1).points[:-1] for s in sides])
    return SamplingSet(pts, "boundary:square", np.array(UNIT_SQUARE))


def _channel(field, name):
    return lambda p: field.values(p)[name]


# ---------------------------------------------------------------- NS

NS_FIELDS = {
    "u": "sin(pi*x)*cos(pi*y)",
    "v": "-cos(pi*x)*sin(pi*y)",
    "T": "cos(pi*x)*cos(pi*y)/2 + x/2",
    "p": "sin(pi*x)*sin(pi*y)/2",
}


@dataclass(frozen=True)
class ManufacturedNsConfig:
    rho: float = 1.0
    mu: float = 0.05
    kf: float = 0.05
    cp: float = 1.0
    hidden: tuple = (30, 30, 30)
    activation: str = "tanh"
    n_interior: int = 1000
    n_boundary_per_side: int = 40
    schedule: tuple = (Phase("adam", 2000, lr=1e-3), Phase("bfgs", 2000))

    @property
    def coeffs(self) -> FluidCoefficients:
        return FluidCoefficients(rho=self.rho, mu=self.mu, kf=self.kf, cp=self.cp)


def ns_thermal_solution() -> AnalyticField:
    return AnalyticField(NS_FIELDS)


def build_manufactured_ns(config: ManufacturedNsConfig = ManufacturedNsConfig(), seed: int = 0) -> TrainingProblem:
    truth = ns_thermal_solution()
    interior = latin_hypercube(config.n_interior, UNIT_SQUARE, seed)
    boundary = _square_boundary(config.n_boundary_per_side)
    op = manufactured_forcing(residual_ns_thermal, truth, config.coeffs)
    net = NetworkSlot("net", MlpSpec((2,) + tuple(config.hidden) + (4,), config.activation),
                      ("u", "v", "T", "p"), input_map_for(UNIT_SQUARE))
    terms = [
        PdeTerm("L_PDE", "net", interior, op, config.coeffs),
        DirichletTerm("L_D", "net", boundary, ("u", "v", "T"), [_channel(truth, c) for c in ("u", "v", "T")]),
    ]
    return TrainingProblem([net], terms, samplings={"interior": interior, "boundary": boundary},
                           meta={"case": "manufactured:ns_thermal", "config": config, "truth": truth,
                                 "domains": {"net": UNIT_SQUARE}, "boundary_pieces": {"L_D": _square_sides()},
                                 "reference_provenance": "closed-form manufactured solution"})


# ----------------------------------------------------------- RANS twin

# Channel-like stream function with a recirculation bubble behind the
# step (centred at x = 6) and an eddy viscosity peaking in the shear layer.
# The slow streamwise modulation keeps the flow away from parallel flow,
# where the eddy viscosity is not identifiable from the mean velocity.
TWIN_STREAM = ("6/pi*(1 - cos(pi*y/6)) - a*exp(-((x - 6)/2.5)**2)*y**2*exp(-y)"
               " + 0.8*sin(pi*x/11)*sin(pi*y/6)**2")
TWIN_NU = "b + c*exp(-((x - 6)/3)**2 - ((y - 2)/2)**2)"
TWIN_PRESSURE = "-0.02*x"


def rans_twin_solution(bubble: float = 1.5, nu_base: float = 0.5, nu_peak: float = 0.3) -> AnalyticField:
    x, y = sp.symbols("x y")
    psi = sp.sympify(TWIN_STREAM, locals={"x": x, "y": y}).subs("a", bubble)
    nu = sp.sympify(TWIN_NU, locals={"x": x, "y": y}).subs({"b": nu_base, "c": nu_peak})
    return AnalyticField({"U": sp.diff(psi, y), "V": -sp.diff(psi, x),
                          "P": sp.sympify(TWIN_PRESSURE), "nu": nu})


@dataclass(frozen=True)
class RansTwinConfig:
    bfs: BfsConfig = BfsConfig(n_interior=2000, n_wall=500,
                               schedule=(Phase("adam", 1000, lr=1e-3), Phase("bfgs", 8000, on_stall="stop")))
    sections: tuple = STANDARD_SECTIONS
    n_per_section: int = 22
    sigma: float = 0.0


def build_rans_twin(config: RansTwinConfig = RansTwinConfig(), seed: int = 0) -> TrainingProblem:
    """BFS assimilation with manufactured forcing; wall targets are the
    analytic velocities (the closed-form flow does not satisfy no-slip)."""
    truth = rans_twin_solution()
    bfs = replace(config.bfs, sections=tuple(config.sections), n_per_section=config.n_per_section)
    obs = synthetic_bfs_observations(bfs, truth, sigma=config.sigma, seed=seed)
    coeffs = RansCoefficients(bfs.nu, bfs.rho)
    op = manufactured_forcing(residual_rans, truth, coeffs)
    problem = build_bfs_assimilation(
        bfs, obs, seed, residual_op=op,
        wall_targets=(_channel(truth, "U"), _channel(truth, "V")))
    problem.meta.update({"case": "manufactured:rans_twin", "truth": truth, "twin_config": config,
                         "reference_provenance": "closed-form manufactured mean flow"})
    return problem


# ------------------------------------------------------- Poisson gamma

@dataclass(frozen=True)
class PoissonGammaConfig:
    gamma_true: float = 1.5
    gamma_init: float = 0.5
    n_interior: int = 400
    n_boundary_per_side: int = 25
    n_observations: int = 20
    sigma: float = 0.0
    hidden: tuple = (20, 20, 20)
    activation: str = "tanh"
    schedule: tuple = (Phase("adam", 1000, lr=1e-3), Phase("bfgs", 1000, on_stall="stop"))


POISSON_SOLUTION = "sin(pi*x)*sin(pi*y)"


def poisson_source(gamma_true: float):
    """f with gamma_true * laplacian(u) + f = 0 for the closed-form u."""
    return lambda p: 2.0 * np.pi ** 2 * gamma_true * np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])


def build_poisson_gamma(config: PoissonGammaConfig = PoissonGammaConfig(), seed: int = 0) -> TrainingProblem:
    truth = AnalyticField({"u": POISSON_SOLUTION})
    interior = latin_hypercube(config.n_interior, UNIT_SQUARE, seed)
    boundary = _square_boundary(config.n_boundary_per_side)
    obs_pts = latin_hypercube(config.n_observations, [[0.05, 0.95], [0.05, 0.95]], seed + 7919).points
    obs_vals = truth.values(obs_pts)["u"]
    if config.sigma > 0:
        obs_vals = obs_vals + np.random.default_rng(seed).normal(0.0, config.sigma, obs_vals.shape)
    data = SamplingSet(obs_pts, "data", np.array(UNIT_SQUARE))
    coeffs = PoissonCoefficients(gamma=Trainable("gamma"), source=poisson_source(config.gamma_true))
    net = NetworkSlot("net", MlpSpec((2,) + tuple(config.hidden) + (1,), config.activation),
                      ("u",), input_map_for(UNIT_SQUARE))
    terms = [
        PdeTerm("L_PDE", "net", interior, residual_poisson, coeffs),
        DirichletTerm("L_D", "net", boundary, "u", 0.0),
        DataTerm("L_data", "net", data, "u", obs_vals),
    ]
    return TrainingProblem([net], terms, extras={"gamma": config.gamma_init},
                           samplings={"interior": interior, "boundary": boundary, "data": data},
                           meta={"case": "manufactured:poisson_gamma", "config": config, "truth": truth,
                                 "domains": {"net": UNIT_SQUARE}, "boundary_pieces": {"L_D": _square_sides()},
                                 "reference_provenance": "closed-form manufactured solution"})
