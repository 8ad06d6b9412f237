"""Backward-facing step: infer the eddy viscosity of a RANS mean flow from
velocity profiles.

Lengths are in step heights.  The channel spans x in [0, 23], y in [0, 6];
the step is the solid block [0, 3] x [0, 1], so the inlet section x = 0
sits upstream of the step edge.  Only U is observed, on vertical sections.
No inlet or outlet condition is imposed: the data plays that role.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from ..loss import DataTerm, DirichletTerm, NetworkSlot, PdeTerm, TrainingProblem
from ..network import MlpSpec
from ..optim import Phase
from ..physics import RansCoefficients, residual_rans
from ..sampling import SamplingSet, Segment, boundary_sample, latin_hypercube_masked
from .common import Observations, generate_synthetic_observations, input_map_for

CHANNELS = ("U", "V", "P", "nu")
STANDARD_SECTIONS = (0.0, 7.0, 13.0, 22.0)
# no section inside the recirculation zone 3 < x < 9
SPARSE_RECIRCULATION_SECTIONS = (0.0, 10.0, 13.0, 22.0)
HELD_OUT_SECTIONS = (9.0, 18.0)


@dataclass(frozen=True)
class BfsConfig:
    length: float = 23.0
    height: float = 6.0
    step_x: float = 3.0
    step_h: float = 1.0
    nu: float = 1.0 / 5100.0
    rho: float = 1.0
    hidden: tuple = (8, 16, 32, 16, 8)
    activation: str = "tanh"
    n_interior: int = 8000
    n_wall: int = 2750
    sections: tuple = STANDARD_SECTIONS
    n_per_section: int = 22
    schedule: tuple = (Phase("adam", 5000, lr=1e-3), Phase("bfgs", 15000))

    def __post_init__(self):
        if not (0 < self.step_x < self.length and 0 < self.step_h < self.height):
            raise ContractError("step must lie inside the channel")
        if self.nu <= 0:
            raise ContractError("nu must be > 0")

    @property
    def bounds(self):
        return [[0.0, self.length], [0.0, self.height]]

    @property
    def spec(self) -> MlpSpec:
        return MlpSpec((2,) + tuple(self.hidden) + (4,), self.activation)

    def in_flow(self, points, tol=1e-12) -> np.ndarray:
        """True for points in the closed flow region (walls included)."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        x, y = p[:, 0], p[:, 1]
        in_box = (x >= -tol) & (x <= self.length + tol) & (y >= -tol) & (y <= self.height + tol)
        in_step = (x < self.step_x - tol) & (y < self.step_h - tol)
        return in_box & ~in_step

    def flow_interval(self, x: float) -> tuple:
        return (self.step_h if x < self.step_x else 0.0, self.height)


def bfs_walls(c: BfsConfig) -> dict:
    return {
        "step_top": Segment("step_top", (0.0, c.step_h), (c.step_x, c.step_h), (0.0, 1.0)),
        "step_face": Segment("step_face", (c.step_x, c.step_h), (c.step_x, 0.0), (1.0, 0.0)),
        "bottom": Segment("bottom", (c.step_x, 0.0), (c.length, 0.0), (0.0, -1.0)),
        "top": Segment("top", (0.0, c.height), (c.length, c.height), (0.0, 1.0)),
    }


def split_counts(total: int, lengths) -> list:
    """Integer counts proportional to ``lengths`` summing to ``total``
    (largest remainders get the leftovers)."""
    lengths = np.asarray(lengths, dtype=np.float64)
    raw = total * lengths / lengths.sum()
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: total - counts.sum()]:
        counts[i] += 1
    return counts.tolist()


def wall_sampling(c: BfsConfig) -> SamplingSet:
    walls = bfs_walls(c)
    counts = split_counts(c.n_wall, [w.length for w in walls.values()])
    # the step face owns both of its corners; the top wall owns its own
    with_ends = {"step_face", "top"}
    parts = [boundary_sample(seg, n, endpoints=name in with_ends and n >= 2)
             for (name, seg), n in zip(walls.items(), counts) if n > 0]
    pts = np.concatenate([p.points for p in parts])
    return SamplingSet(pts, "boundary:walls", np.array(c.bounds))


def interior_sampling(c: BfsConfig, seed: int) -> SamplingSet:
    return latin_hypercube_masked(c.n_interior, c.bounds, seed,
                                  lambda p: ~((p[:, 0] < c.step_x) & (p[:, 1] < c.step_h)))


def check_observations(c: BfsConfig, obs: Observations) -> None:
    bad = np.flatnonzero(~c.in_flow(obs.points))
    if bad.size:
        raise ContractError(f"observations outside the flow region at rows {bad.tolist()}")


def build_bfs_assimilation(config: BfsConfig, observations: Observations, seed: int = 0,
                           residual_op=None, wall_targets=(0.0, 0.0)) -> TrainingProblem:
    """Terms: RANS residual (L_RANS), no-slip on every solid wall (L_W) and
    the U misfit on the observations (L_data).

    ``residual_op`` and ``wall_targets`` let a manufactured twin swap in a
    forced operator and its analytic wall velocities.
    """
    c = config
    check_observations(c, observations)
    interior = interior_sampling(c, seed)
    walls = wall_sampling(c)
    data = observations.sampling()
    net = NetworkSlot("net", c.spec, CHANNELS, input_map_for(c.bounds))
    op = residual_op or residual_rans
    terms = [
        PdeTerm("L_RANS", "net", interior, op, RansCoefficients(c.nu, c.rho)),
        DirichletTerm("L_W", "net", walls, ("U", "V"), list(wall_targets)),
        DataTerm("L_data", "net", data, observations.channel, observations.values),
    ]
    return TrainingProblem([net], terms, samplings={"interior": interior, "walls": walls, "data": data},
                           meta={"case": "bfs_assimilation", "config": c, "domains": {"net": c.bounds},
                                 "in_domain": c.in_flow, "observations": observations,
                                 "boundary_pieces": {"L_W": list(bfs_walls(c).values())}})


def synthetic_bfs_observations(config: BfsConfig, truth, sections=None, n_per_section=None,
                               sigma=0.0, seed=0) -> Observations:
    return generate_synthetic_observations(
        truth, sections if sections is not None else config.sections,
        n_per_section or config.n_per_section, sigma, seed, config.flow_interval, "U")
