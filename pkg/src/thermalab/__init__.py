"""Spin-chain thermalization laboratory for the mixed-field Ising ring.

Symmetry-resolved Krylov time evolution of product-state quenches,
canonical-ensemble references from full diagonalization, and the analysis
layer tying the two together: equilibrium averages, ETH deviation scaling,
entropy area-law terms, and exponential relaxation times.
"""

from .analysis import (
    EquilibriumStats,
    RelaxationFit,
    equilibrium_stats,
    eth_deviation_fit,
    fit_relaxation_time,
    fluctuation_scaling,
    heisenberg_scan,
    smoothed_deviation,
)
from .basis import SectorVector, SymmetryBasis, build_sector_basis, get_basis
from .bloch import build_bloch_state, catalog_entry, load_catalog
from .errors import (
    ConfigurationError,
    DomainError,
    NumericalError,
    ResourceError,
    ThermalabError,
    UsageError,
)
from .krylov import KrylovConfig, TrajectoryRecord, evolve_and_measure
from .model import BENCHMARK_PARAMS, HamiltonianParams, SectorSpec
from .observables import (
    page_entropy_asymptotic,
    page_entropy_exact,
    page_mutual_information_exact,
    parse_observable,
)
from .runner import RunConfig, RunManifest, load_run_config, plan_and_execute
from .thermal import (
    SpectrumTable,
    full_diagonalize,
    solve_beta,
    thermal_curve,
    thermal_expectation,
    thermal_mutual_information,
    thermal_second_derivative,
)

__version__ = "0.1.0"

__all__ = [
    "BENCHMARK_PARAMS",
    "ConfigurationError",
    "DomainError",
    "EquilibriumStats",
    "HamiltonianParams",
    "KrylovConfig",
    "NumericalError",
    "RelaxationFit",
    "ResourceError",
    "RunConfig",
    "RunManifest",
    "SectorSpec",
    "SectorVector",
    "SpectrumTable",
    "SymmetryBasis",
    "ThermalabError",
    "TrajectoryRecord",
    "UsageError",
    "build_bloch_state",
    "build_sector_basis",
    "catalog_entry",
    "equilibrium_stats",
    "eth_deviation_fit",
    "evolve_and_measure",
    "fit_relaxation_time",
    "fluctuation_scaling",
    "full_diagonalize",
    "get_basis",
    "heisenberg_scan",
    "load_catalog",
    "load_run_config",
    "page_entropy_asymptotic",
    "page_entropy_exact",
    "page_mutual_information_exact",
    "parse_observable",
    "plan_and_execute",
    "smoothed_deviation",
    "solve_beta",
    "thermal_curve",
    "thermal_expectation",
    "thermal_mutual_information",
    "thermal_second_derivative",
]
