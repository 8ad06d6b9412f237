"""Scenario builders: each returns a TrainingProblem ready for run_schedule."""
from .bfs import BfsConfig, build_bfs_assimilation, synthetic_bfs_observations
from .cavity import CavityConfig, build_parametric_cavity
from .common import (FieldGrid, Observations, generate_synthetic_observations, predict_grid,
                     read_observations, write_observations)
from .conjugate import ConjugateConfig, SlabConfig, build_conduction_slabs, build_conjugate_heat, slab_solution
from .manufactured import (ManufacturedNsConfig, PoissonGammaConfig, RansTwinConfig, build_manufactured_ns,
                           build_poisson_gamma, build_rans_twin, ns_thermal_solution, rans_twin_solution)

__all__ = [
    "BfsConfig", "CavityConfig", "ConjugateConfig", "FieldGrid", "ManufacturedNsConfig", "Observations",
    "PoissonGammaConfig", "RansTwinConfig", "SlabConfig", "build_bfs_assimilation", "build_conduction_slabs",
    "build_conjugate_heat", "build_manufactured_ns", "build_parametric_cavity", "build_poisson_gamma",
    "build_rans_twin", "generate_synthetic_observations", "ns_thermal_solution", "predict_grid",
    "rans_twin_solution", "read_observations", "slab_solution", "synthetic_bfs_observations",
    "write_observations",
]
