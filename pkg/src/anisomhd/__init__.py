"""Pseudo-spectral solver and diagnostics for 3D MHD with mixed partial dissipation."""
from __future__ import annotations

from .errors import ContractError, PreconditionError, SolverFault
from .experiments import (
    BootstrapMonitor, ExperimentConfig, SweepResult, export_plots, generate_initial_data,
    run_stability_experiment, sweep_epsilon,
)
from .inequalities import (
    InequalityReport, TrialFunction, agmon_1d, check_lemma12, estimate_constant, minkowski_check,
)
from .norms import (
    DiagnosticsRecord, EnergyLedger, NormSpec, I1_value, l2_balance_residual, norm,
    substitution_residual,
)
from .solver import MHDState, SolverConfig, load_checkpoint, run, save_checkpoint, step
from .spectral import Grid, SpectralField, VectorField, leray_project

__version__ = "0.1.0"

__all__ = [
    "BootstrapMonitor", "ContractError", "DiagnosticsRecord", "EnergyLedger", "ExperimentConfig",
    "Grid", "I1_value", "InequalityReport", "MHDState", "NormSpec", "PreconditionError",
    "SolverConfig", "SolverFault", "SpectralField", "SweepResult", "TrialFunction", "VectorField",
    "agmon_1d", "check_lemma12", "estimate_constant", "export_plots", "generate_initial_data",
    "l2_balance_residual", "leray_project", "load_checkpoint", "minkowski_check", "norm", "run",
    "run_stability_experiment", "save_checkpoint", "step", "substitution_residual", "sweep_epsilon",
]
