"""Cross-relaxation induced polarisation of nuclear spin baths by a shallow NV probe."""

__version__ = "0.1.0"

from .kernels import BACKEND
from .spins import (
    CouplingModel,
    FullSpace,
    HalfSpaceAboveSurface,
    NvProbe,
    Slab,
    SpinSpecies,
    TargetEnsemble,
    get_species,
    register_species,
    resonance_field,
    thermal_polarization,
)
from .grids import CartesianGrid, PolarizationField, RadialGrid, init_field
from .pde import CripProblem, SolverConfig, evolve, steady_state, step
from .observables import cross_relaxation_rate, hyperfine_variance, spectrum, total_rate
from .config import ConfigError, parse_config

__all__ = [
    "BACKEND", "CartesianGrid", "ConfigError", "CouplingModel", "CripProblem", "FullSpace",
    "HalfSpaceAboveSurface", "NvProbe", "PolarizationField", "RadialGrid", "Slab", "SolverConfig",
    "SpinSpecies", "TargetEnsemble", "cross_relaxation_rate", "evolve", "get_species", "hyperfine_variance",
    "init_field", "parse_config", "register_species", "resonance_field", "spectrum", "steady_state", "step",
    "thermal_polarization", "total_rate",
]
