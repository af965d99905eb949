"""Damped driven level systems and their rate-equation limits.

The package integrates the scaled Bloch dynamics of a finite level
system under a quasi-periodic wave, builds the averaged and resonant
transition-rate tables that govern the populations in the small-eps
limit, analyses the induced time-layers and equilibria, and checks the
small-divisor conditions the averaging rests on.
"""

from .bloch_solver import (
    BlochTrajectory,
    ConservationReport,
    SolverConfig,
    bloch_rhs,
    conservation_diagnostics,
    integrate_bloch,
)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .diophantine import (
    DiophParams,
    DiophReport,
    GenericityTable,
    check_dioph,
    check_speed,
    estimate_C_eta,
    genericity_experiment,
    perturbed_threshold,
    perturbed_violations,
)
from .model import (
    LevelSystem,
    QuasiPeriodicField,
    Scaling,
    ValidationReport,
    field_value,
    validate_system,
    well_prepared_state,
)
from .rate_solver import (
    LayerFit,
    LayeredRun,
    LevelFamily,
    ProjectorSet,
    RateTrajectory,
    TruncationReport,
    build_projectors,
    choose_N,
    integrate_rate,
    limit_system,
    solve_layered,
    spectral_gap_c,
    timelayer_analysis,
    truncate,
)
from .rates import (
    RegimeInfo,
    ResonanceSet,
    average_oracle,
    b_limit,
    coupling_table,
    psi_app,
    psi_averaged,
    psi_dominant,
    psi_time_dependent,
    psi_time_series,
    regime_classify,
    resonance_set,
    split_AB,
    w_mod,
)
from .sharp_ops import (
    SharpOperator,
    SpectralReport,
    apply_sharp,
    equilibrium_state,
    evolve_sharp,
    kernel_basis,
    mixed_norm,
    schur_apply,
    sharpen,
    spectral_check,
    stable_blocks,
    thermodynamic_equilibrium,
)

__all__ = [
    "BlochTrajectory",
    "ConservationReport",
    "SolverConfig",
    "bloch_rhs",
    "conservation_diagnostics",
    "integrate_bloch",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "DiophParams",
    "DiophReport",
    "GenericityTable",
    "check_dioph",
    "check_speed",
    "estimate_C_eta",
    "genericity_experiment",
    "perturbed_threshold",
    "perturbed_violations",
    "LevelSystem",
    "QuasiPeriodicField",
    "Scaling",
    "ValidationReport",
    "field_value",
    "validate_system",
    "well_prepared_state",
    "LayerFit",
    "LayeredRun",
    "LevelFamily",
    "ProjectorSet",
    "RateTrajectory",
    "TruncationReport",
    "build_projectors",
    "choose_N",
    "integrate_rate",
    "limit_system",
    "solve_layered",
    "spectral_gap_c",
    "timelayer_analysis",
    "truncate",
    "RegimeInfo",
    "ResonanceSet",
    "average_oracle",
    "b_limit",
    "coupling_table",
    "psi_app",
    "psi_averaged",
    "psi_dominant",
    "psi_time_dependent",
    "psi_time_series",
    "regime_classify",
    "resonance_set",
    "split_AB",
    "w_mod",
    "SharpOperator",
    "SpectralReport",
    "apply_sharp",
    "equilibrium_state",
    "evolve_sharp",
    "kernel_basis",
    "mixed_norm",
    "schur_apply",
    "sharpen",
    "spectral_check",
    "stable_blocks",
    "thermodynamic_equilibrium",
]
