"""Conjugate heat transfer: a channel flow heated through a solid block
underneath its downstream half, solved with two networks at once.

Geometry: fluid [0, 2] x [0, 0.5], solid [1, 2] x [-0.5, 0], interface
y = 0 for x in [1, 2].  The fluid network returns (u, v, T, p) and the
solid network returns T.  A conduction-only two-slab variant with a
closed-form answer is included for verification.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..analytic import AnalyticField
from ..errors import ContractError
from ..loss import (DirichletTerm, InterfaceFluxTerm, InterfaceValueTerm, MeanValueTerm, NetworkSlot,
                    NeumannTerm, PdeTerm, TrainingProblem)
from ..network import MlpSpec
from ..optim import Phase
from ..physics import FluidCoefficients, SolidCoefficients, residual_heat, residual_ns_thermal
from ..sampling import SamplingSet, Segment, boundary_sample, latin_hypercube
from .common import input_map_for

FLUID_CHANNELS = ("u", "v", "T", "p")
FLUID_RESIDUAL_ROWS = [("Heat eq.", "L_NS", "energy"), ("Continuity eq.", "L_NS", "continuity"),
                       ("Momentum x eq.", "L_NS", "momentum_x"), ("Momentum y eq.", "L_NS", "momentum_y")]
SOLID_ROWS = {"fields": ["T"],
              "bc": [("Dirichlet", ["L_hot"]), ("Adiabaticity", ["L_A_solid_left", "L_A_solid_right"])],
              "residual": [("Heat eq.", "L_HT", "heat")]}
SOLID_PIECES = {"L_hot": ["hot"], "L_A_solid_left": ["solid_left"], "L_A_solid_right": ["solid_right"],
                "L_c1": ["interface"], "L_c2": ["interface"]}
SOLID_CHANNELS = ("T",)
INTERFACE_NORMAL = (0.0, -1.0)


@dataclass(frozen=True)
class ConjugateConfig:
    fluid_length: float = 2.0
    fluid_height: float = 0.5
    solid_start: float = 1.0
    solid_depth: float = 0.5
    u_in: float = 1.0
    T_in: float = 0.2
    T_hot: float = 1.0
    rho: float = 1.0
    mu: float = 0.01
    kf: float = 0.025
    ks: float = 1.0
    cp: float = 1.0
    fluid_hidden: tuple = (50, 50, 50)
    solid_hidden: tuple = (20, 20, 20)
    activation: str = "tanh"
    n_fluid: int = 1600
    n_solid: int = 225
    n_inlet: int = 50
    n_outlet: int = 50
    n_top: int = 100
    n_bottom_left: int = 50
    n_interface: int = 50
    n_hot: int = 50
    n_solid_side: int = 25
    schedule: tuple = (Phase("adam", 50000, lr=1e-3), Phase("bfgs", 2000))

    def __post_init__(self):
        if not 0 < self.solid_start < self.fluid_length:
            raise ContractError("solid_start must lie inside the fluid channel")
        for name in ("fluid_length", "fluid_height", "solid_depth", "rho", "ks", "cp"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be > 0")

    @property
    def fluid_bounds(self):
        return [[0.0, self.fluid_length], [0.0, self.fluid_height]]

    @property
    def solid_bounds(self):
        return [[self.solid_start, self.fluid_length], [-self.solid_depth, 0.0]]

    @property
    def outlet_mean(self) -> float:
        """Mean of the parabolic inlet profile, carried to the outlet."""
        return 2.0 / 3.0 * self.u_in

    def inlet_profile(self, points):
        eta = 2.0 * points[:, 1] / self.fluid_height - 1.0
        return self.u_in * (1.0 - eta * eta)


def conjugate_segments(c: ConjugateConfig) -> dict:
    L, H, xs, D = c.fluid_length, c.fluid_height, c.solid_start, c.solid_depth
    return {
        "inlet": Segment("inlet", (0.0, 0.0), (0.0, H), (-1.0, 0.0)),
        "outlet": Segment("outlet", (L, 0.0), (L, H), (1.0, 0.0)),
        "top": Segment("top", (0.0, H), (L, H), (0.0, 1.0)),
        "bottom_left": Segment("bottom_left", (0.0, 0.0), (xs, 0.0), (0.0, -1.0)),
        "interface": Segment("interface", (xs, 0.0), (L, 0.0), INTERFACE_NORMAL),
        "hot": Segment("hot", (xs, -D), (L, -D), (0.0, -1.0)),
        "solid_left": Segment("solid_left", (xs, -D), (xs, 0.0), (-1.0, 0.0)),
        "solid_right": Segment("solid_right", (L, -D), (L, 0.0), (1.0, 0.0)),
    }


def _concat(sets, tag):
    pts = np.concatenate([s.points for s in sets])
    b = np.stack([pts.min(axis=0), pts.max(axis=0)], axis=1)
    return SamplingSet(pts, tag, b)


def _slots(c, fluid_bounds, solid_bounds):
    fluid = NetworkSlot("fluid", MlpSpec((2,) + tuple(c.fluid_hidden) + (4,), c.activation),
                        FLUID_CHANNELS, input_map_for(fluid_bounds))
    solid = NetworkSlot("solid", MlpSpec((2,) + tuple(c.solid_hidden) + (1,), c.activation),
                        SOLID_CHANNELS, input_map_for(solid_bounds))
    return fluid, solid


def _solid_and_coupling_terms(c, seg, seed, n_solid, n_interface, n_hot, n_side):
    solid_int = latin_hypercube(n_solid, c.solid_bounds, seed + 1)
    interface = boundary_sample(seg["interface"], n_interface)
    hot = boundary_sample(seg["hot"], n_hot)
    # solid corners at y = -D belong to the hot face, at y = 0 to the interface
    left = boundary_sample(seg["solid_left"], n_side, endpoints=False)
    right = boundary_sample(seg["solid_right"], n_side, endpoints=False)
    terms = [
        PdeTerm("L_HT", "solid", solid_int, residual_heat, SolidCoefficients(c.ks)),
        DirichletTerm("L_hot", "solid", hot, "T", c.T_hot),
        NeumannTerm("L_A_solid_left", "solid", left, "T", 0.0),
        NeumannTerm("L_A_solid_right", "solid", right, "T", 0.0),
        InterfaceValueTerm("L_c1", "fluid", "solid", interface),
        InterfaceFluxTerm("L_c2", "fluid", "solid", interface, c.kf, c.ks, INTERFACE_NORMAL),
    ]
    sets = {"solid_interior": solid_int, "interface": interface, "hot": hot,
            "solid_left": left, "solid_right": right}
    return terms, sets


def build_conjugate_heat(config: ConjugateConfig = ConjugateConfig(), seed: int = 0) -> TrainingProblem:
    """Fluid terms L_NS, L_W, L_u_in, L_q, L_T_in, L_A; solid terms L_HT,
    L_hot, L_A; coupling terms L_c1, L_c2.  One parameter vector holds
    both networks."""
    c = config
    seg = conjugate_segments(c)
    fluid_int = latin_hypercube(c.n_fluid, c.fluid_bounds, seed)
    inlet = boundary_sample(seg["inlet"], c.n_inlet)
    outlet = boundary_sample(seg["outlet"], c.n_outlet, endpoints=False)
    top = boundary_sample(seg["top"], c.n_top, endpoints=False)
    bottom_left = boundary_sample(seg["bottom_left"], c.n_bottom_left, endpoints=False)
    solid_terms, solid_sets = _solid_and_coupling_terms(
        c, seg, seed, c.n_solid, c.n_interface, c.n_hot, c.n_solid_side)
    walls = _concat([top, bottom_left, solid_sets["interface"]], "boundary:walls")
    adiabatic = [top, bottom_left]

    coeffs = FluidCoefficients(rho=c.rho, mu=c.mu, kf=c.kf, cp=c.cp)
    fluid, solid = _slots(c, c.fluid_bounds, c.solid_bounds)
    terms = [
        PdeTerm("L_NS", "fluid", fluid_int, residual_ns_thermal, coeffs),
        DirichletTerm("L_W", "fluid", walls, ("u", "v"), 0.0),
        DirichletTerm("L_u_in", "fluid", inlet, ("u", "v"), [c.inlet_profile, 0.0]),
        MeanValueTerm("L_q", "fluid", outlet, "u", c.outlet_mean),
        DirichletTerm("L_T_in", "fluid", inlet, "T", c.T_in),
        NeumannTerm("L_A_top", "fluid", adiabatic[0], "T", 0.0),
        NeumannTerm("L_A_bottom_left", "fluid", adiabatic[1], "T", 0.0),
    ] + solid_terms
    samplings = {"fluid_interior": fluid_int, "inlet": inlet, "outlet": outlet, "top": top,
                 "bottom_left": bottom_left, "walls": walls, **solid_sets}
    pieces = {"L_W": ["top", "bottom_left", "interface"], "L_u_in": ["inlet"], "L_T_in": ["inlet"],
              "L_q": ["outlet"], "L_A_top": ["top"], "L_A_bottom_left": ["bottom_left"], **SOLID_PIECES}
    meta = {
        "case": "conjugate_heat", "config": c,
        "domains": {"fluid": c.fluid_bounds, "solid": c.solid_bounds},
        "boundary_pieces": {k: [seg[n] for n in v] for k, v in pieces.items()},
        "report_rows": {
            "fluid": {"fields": ["T", "u", "v"],
                      "bc": [("No-slip", ["L_W"]), ("Inlet", ["L_u_in", "L_T_in"]), ("Outlet", ["L_q"]),
                             ("Adiabaticity", ["L_A_top", "L_A_bottom_left"])],
                      "residual": FLUID_RESIDUAL_ROWS},
            "solid": SOLID_ROWS,
        },
    }
    return TrainingProblem([fluid, solid], terms, samplings=samplings, meta=meta)


# ------------------------------------------------------ conduction slabs

@dataclass(frozen=True)
class SlabConfig:
    """Fluid at rest over [x0, x1] x [0, Lf] above a solid over
    [x0, x1] x [-Ls, 0]; heat flows from T_hot at the solid bottom to T_in
    at the fluid top through the interface."""

    x0: float = 1.0
    x1: float = 2.0
    fluid_depth: float = 0.5
    solid_depth: float = 0.5
    T_in: float = 0.2
    T_hot: float = 1.0
    rho: float = 1.0
    mu: float = 0.01
    kf: float = 0.025
    ks: float = 1.0
    cp: float = 1.0
    fluid_hidden: tuple = (20, 20)
    solid_hidden: tuple = (20, 20)
    activation: str = "tanh"
    n_fluid: int = 400
    n_solid: int = 225
    n_top: int = 40
    n_interface: int = 50
    n_hot: int = 40
    n_side: int = 20
    schedule: tuple = (Phase("adam", 1000, lr=1e-3), Phase("bfgs", 1500, on_stall="stop"))

    @property
    def fluid_bounds(self):
        return [[self.x0, self.x1], [0.0, self.fluid_depth]]

    @property
    def solid_bounds(self):
        return [[self.x0, self.x1], [-self.solid_depth, 0.0]]

    @property
    def interface_temperature(self) -> float:
        """Series thermal resistance of the two slabs."""
        gf, gs = self.kf / self.fluid_depth, self.ks / self.solid_depth
        return (gf * self.T_in + gs * self.T_hot) / (gf + gs)


def slab_solution(c: SlabConfig) -> tuple[AnalyticField, AnalyticField]:
    """Exact (fluid, solid) fields of the conduction-only problem."""
    Ti = c.interface_temperature
    Tf = f"{Ti!r} + ({c.T_in!r} - {Ti!r}) * y / {c.fluid_depth!r}"
    Ts = f"{Ti!r} + ({Ti!r} - {c.T_hot!r}) * y / {c.solid_depth!r}"
    fluid = AnalyticField({"u": "0", "v": "0", "T": Tf, "p": "0"})
    solid = AnalyticField({"T": Ts})
    return fluid, solid


def build_conduction_slabs(config: SlabConfig = SlabConfig(), seed: int = 0) -> TrainingProblem:
    """Conduction-only reduction of the coupled case: velocities are pinned
    to zero by a Dirichlet term on every fluid point and the inlet/outlet
    terms are dropped."""
    c = config
    seg = {
        "top": Segment("top", (c.x0, c.fluid_depth), (c.x1, c.fluid_depth), (0.0, 1.0)),
        "fluid_left": Segment("fluid_left", (c.x0, 0.0), (c.x0, c.fluid_depth), (-1.0, 0.0)),
        "fluid_right": Segment("fluid_right", (c.x1, 0.0), (c.x1, c.fluid_depth), (1.0, 0.0)),
        "interface": Segment("interface", (c.x0, 0.0), (c.x1, 0.0), INTERFACE_NORMAL),
        "hot": Segment("hot", (c.x0, -c.solid_depth), (c.x1, -c.solid_depth), (0.0, -1.0)),
        "solid_left": Segment("solid_left", (c.x0, -c.solid_depth), (c.x0, 0.0), (-1.0, 0.0)),
        "solid_right": Segment("solid_right", (c.x1, -c.solid_depth), (c.x1, 0.0), (1.0, 0.0)),
    }
    fluid_int = latin_hypercube(c.n_fluid, c.fluid_bounds, seed)
    top = boundary_sample(seg["top"], c.n_top)
    f_left = boundary_sample(seg["fluid_left"], c.n_side, endpoints=False)
    f_right = boundary_sample(seg["fluid_right"], c.n_side, endpoints=False)
    solid_terms, solid_sets = _solid_and_coupling_terms(
        c, seg, seed, c.n_solid, c.n_interface, c.n_hot, c.n_side)
    everywhere = _concat([fluid_int, top, f_left, f_right, solid_sets["interface"]], "boundary:pinned")

    coeffs = FluidCoefficients(rho=c.rho, mu=c.mu, kf=c.kf, cp=c.cp)
    fluid, solid = _slots(c, c.fluid_bounds, c.solid_bounds)
    terms = [
        PdeTerm("L_NS", "fluid", fluid_int, residual_ns_thermal, coeffs),
        DirichletTerm("L_rest", "fluid", everywhere, ("u", "v"), 0.0),
        DirichletTerm("L_T_in", "fluid", top, "T", c.T_in),
        NeumannTerm("L_A_left", "fluid", f_left, "T", 0.0),
        NeumannTerm("L_A_right", "fluid", f_right, "T", 0.0),
    ] + solid_terms
    samplings = {"fluid_interior": fluid_int, "top": top, "fluid_left": f_left,
                 "fluid_right": f_right, **solid_sets}
    pieces = {"L_T_in": ["top"], "L_A_left": ["fluid_left"], "L_A_right": ["fluid_right"], **SOLID_PIECES}
    meta = {
        "case": "conduction_slabs", "config": c,
        "domains": {"fluid": c.fluid_bounds, "solid": c.solid_bounds},
        "boundary_pieces": {k: [seg[n] for n in v] for k, v in pieces.items()},
        "report_rows": {
            "fluid": {"fields": ["T", "u", "v"],
                      "bc": [("Rest", ["L_rest"]), ("Dirichlet", ["L_T_in"]),
                             ("Adiabaticity", ["L_A_left", "L_A_right"])],
                      "residual": FLUID_RESIDUAL_ROWS},
            "solid": SOLID_ROWS,
        },
        "reference_provenance": "closed-form two-slab conduction solution",
    }
    return TrainingProblem([fluid, solid], terms, samplings=samplings, meta=meta)
