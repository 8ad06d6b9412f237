"""Differentially heated square cavity, parametric in viscosity and
fluid conductivity.

The network sees (x, y, mu, kf) and returns (u, v, T, p).  Interior points
are a Latin hypercube tensored with the parameter grid; wall points are
tensored with the same grid so every boundary condition holds for every
coefficient pair.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from ..loss import Column, DirichletTerm, NetworkSlot, NeumannTerm, PdeTerm, TrainingProblem
from ..network import MlpSpec
from ..optim import Phase
from ..physics import FluidCoefficients, residual_ns_buoyancy
from ..sampling import SamplingSet, Segment, boundary_sample, equidistributed, latin_hypercube, tensor_with_parameters
from .common import input_map_for

CHANNELS = ("u", "v", "T", "p")


@dataclass(frozen=True)
class CavityConfig:
    length: float = 2.0
    T_left: float = 1.0
    T_right: float = -1.0
    mu_range: tuple = (0.01, 0.1)
    kf_range: tuple = (0.01, 0.1)
    n_values: int = 4
    rho: float = 1.0
    beta: float = 0.1
    g: float = 1.0
    cp: float = 1.0
    hidden: tuple = (50, 50, 50)
    activation: str = "tanh"
    n_interior: int = 2500
    n_wall: int = 100
    schedule: tuple = (Phase("adam", 3000, lr=1e-3), Phase("lbfgs", 7000))

    def __post_init__(self):
        for name in ("mu_range", "kf_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ContractError(f"{name} must satisfy 0 <= lo <= hi, got {(lo, hi)}")
        if self.length <= 0:
            raise ContractError("length must be > 0")
        if self.n_wall < 0 or self.n_interior < 1:
            raise ContractError("need n_interior >= 1 and n_wall >= 0")
        if self.n_values < 1:
            raise ContractError("n_values must be >= 1")

    @property
    def mu_values(self) -> list:
        lo, hi = self.mu_range
        return [lo] if lo == hi else equidistributed(lo, hi, self.n_values)

    @property
    def kf_values(self) -> list:
        lo, hi = self.kf_range
        return [lo] if lo == hi else equidistributed(lo, hi, self.n_values)

    @property
    def bounds(self):
        L = self.length
        return [[0.0, L], [0.0, L], list(self.mu_range), list(self.kf_range)]

    @property
    def spec(self) -> MlpSpec:
        return MlpSpec((4,) + tuple(self.hidden) + (4,), self.activation)


def cavity_walls(L: float) -> dict:
    return {
        "left": Segment("left", (0.0, 0.0), (0.0, L), (-1.0, 0.0)),
        "right": Segment("right", (L, 0.0), (L, L), (1.0, 0.0)),
        "bottom": Segment("bottom", (0.0, 0.0), (L, 0.0), (0.0, -1.0)),
        "top": Segment("top", (0.0, L), (L, L), (0.0, 1.0)),
    }


def build_parametric_cavity(config: CavityConfig = CavityConfig(), seed: int = 0) -> TrainingProblem:
    """Terms: NS with buoyancy (L_NS), no-slip on all walls (L_W),
    lateral wall temperatures (L_T), adiabatic top and bottom (L_A)."""
    L = config.length
    grid = [config.mu_values, config.kf_values]
    spatial = latin_hypercube(config.n_interior, [[0, L], [0, L]], seed)
    interior = tensor_with_parameters(spatial, grid)
    walls = cavity_walls(L)
    if config.n_wall:
        # corners belong to the lateral (Dirichlet) walls
        sides = {name: boundary_sample(walls[name], config.n_wall, endpoints=name in ("left", "right"))
                 for name in walls}
        sets = {name: tensor_with_parameters(s, grid) for name, s in sides.items()}
    else:
        sets = {name: SamplingSet(np.empty((0, 4)), f"boundary:{name}", np.array(config.bounds))
                for name in walls}

    def stack(names, tag):
        pts = np.concatenate([sets[n].points for n in names])
        return SamplingSet(pts, tag, sets[names[0]].bounds)

    all_walls = stack(["left", "right", "bottom", "top"], "boundary:walls")
    lateral = stack(["left", "right"], "boundary:lateral")

    def t_target(points):
        return np.where(points[:, 0] < 0.5 * L, config.T_left, config.T_right)

    adiabatic_bottom, adiabatic_top = sets["bottom"], sets["top"]

    coeffs = FluidCoefficients(rho=config.rho, mu=Column(2), beta=config.beta, g=config.g,
                               kf=Column(3), cp=config.cp)
    net = NetworkSlot("net", config.spec, CHANNELS, input_map_for(config.bounds))
    terms = [PdeTerm("L_NS", "net", interior, residual_ns_buoyancy, coeffs)]
    if config.n_wall:
        terms += [
            DirichletTerm("L_W", "net", all_walls, ("u", "v"), 0.0),
            DirichletTerm("L_T", "net", lateral, "T", t_target),
            NeumannTerm("L_A_bottom", "net", adiabatic_bottom, "T", 0.0),
            NeumannTerm("L_A_top", "net", adiabatic_top, "T", 0.0),
        ]
    samplings = {"interior": interior, "walls": all_walls, "lateral": lateral,
                 "adiabatic_bottom": adiabatic_bottom, "adiabatic_top": adiabatic_top,
                 "interior_spatial": spatial}
    meta = {
        "case": "parametric_cavity", "config": config, "domains": {"net": [[0, L], [0, L]]},
        "boundary_pieces": {"L_W": list(walls.values()), "L_T": [walls["left"], walls["right"]],
                            "L_A_bottom": [walls["bottom"]], "L_A_top": [walls["top"]]},
        "report_rows": {"net": {
            "fields": ["T", "u", "v"],
            "bc": [("No-slip", ["L_W"]), ("Dirichlet", ["L_T"]), ("Adiabaticity", ["L_A_bottom", "L_A_top"])],
            "residual": [("Heat eq.", "L_NS", "energy"), ("Continuity eq.", "L_NS", "continuity"),
                         ("Momentum x eq.", "L_NS", "momentum_x"), ("Momentum y eq.", "L_NS", "momentum_y")],
        }},
    }
    return TrainingProblem([net], terms, samplings=samplings, meta=meta)
