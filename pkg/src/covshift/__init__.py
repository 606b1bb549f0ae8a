"""Covariate significance tests and dependence measures for spatial point patterns."""

from .depmeasure import (
    DependenceResult,
    SamplingPoints,
    adaptive_bandwidth,
    cwr,
    kendall_tau,
    mean_covariate_T,
    tau_hat,
    tau_partial,
)
from .geom import PointPattern, Window, default_shift_radius
from .loglin import LogLinFit, fit_loglinear, wald_test
from .models import CATALOG, ModelSpec, get_model, simulate_model
from .pointsim import Interaction, simulate_gibbs, simulate_poisson
from .randfield import GaussFieldSpec, simulate_grf
from .raster import Grid, ScalarField, integrate, lookup, read_ascii_grid, write_ascii_grid
from .residual import fit_intensity, residual_measure, smoothed_residual_field
from .rhohat import RhoEstimate, fit_rho
from .select import SelectionTrace, backward_select
from .shifttest import ShiftTestConfig, ShiftTestResult, run_shift_test
from .smooth import KernelSpec, kernel_intensity

__version__ = "0.1.0"

__all__ = [
    "CATALOG",
    "DependenceResult",
    "GaussFieldSpec",
    "Grid",
    "Interaction",
    "KernelSpec",
    "LogLinFit",
    "ModelSpec",
    "PointPattern",
    "RhoEstimate",
    "SamplingPoints",
    "ScalarField",
    "SelectionTrace",
    "ShiftTestConfig",
    "ShiftTestResult",
    "Window",
    "adaptive_bandwidth",
    "backward_select",
    "cwr",
    "default_shift_radius",
    "fit_intensity",
    "fit_loglinear",
    "fit_rho",
    "get_model",
    "integrate",
    "kendall_tau",
    "kernel_intensity",
    "lookup",
    "mean_covariate_T",
    "read_ascii_grid",
    "residual_measure",
    "run_shift_test",
    "simulate_gibbs",
    "simulate_grf",
    "simulate_model",
    "simulate_poisson",
    "smoothed_residual_field",
    "tau_hat",
    "tau_partial",
    "wald_test",
    "write_ascii_grid",
]
