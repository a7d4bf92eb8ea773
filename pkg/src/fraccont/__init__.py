"""Fractional calculus toolkit with order-continuity experiments."""

from __future__ import annotations

from fraccont.abel import (
    AbelProblem,
    GronwallCertificate,
    KernelSpec,
    first_kind_apply,
    gronwall_certificate,
    order_sensitivity,
    relaxation_problem,
    solve_first_kind,
    solve_linear_resolvent,
    solve_second_kind,
)
from fraccont.contlab import (
    ContinuityReport,
    RandomOrderConfig,
    SweepConfig,
    convolution_continuity,
    monte_carlo_orders,
    sweep_orders,
)
from fraccont.errors import FracContError, SolverError, ValidationError
from fraccont.fracgrid import (
    GridFn,
    SequentialOrders,
    TimeGrid,
    caputo_derivative,
    frac_integral,
    rl_derivative,
    sequential_derivative,
)
from fraccont.illposed import (
    InstabilityWitness,
    abel_halfline_instability,
    exp_multiplier_instability,
)
from fraccont.mlf import MLQuery, ml_deriv_z, ml_eval, ml_partials, mittag_leffler
from fraccont.seqfde import SequentialProblem, reduce_to_abel, solve_sequential
from fraccont.specdiff import (
    ModeTrajectory,
    ModeVector,
    SpectralOperator,
    dirichlet_laplacian_1d,
    forced_exponent,
    hs_norm,
    predicted_exponent,
    solve_forced,
    solve_homogeneous,
)

__version__ = "0.1.0"

__all__ = [
    "AbelProblem",
    "ContinuityReport",
    "FracContError",
    "GridFn",
    "GronwallCertificate",
    "InstabilityWitness",
    "KernelSpec",
    "MLQuery",
    "ModeTrajectory",
    "ModeVector",
    "RandomOrderConfig",
    "SequentialOrders",
    "SequentialProblem",
    "SolverError",
    "SpectralOperator",
    "SweepConfig",
    "TimeGrid",
    "ValidationError",
    "abel_halfline_instability",
    "caputo_derivative",
    "convolution_continuity",
    "dirichlet_laplacian_1d",
    "exp_multiplier_instability",
    "first_kind_apply",
    "forced_exponent",
    "frac_integral",
    "gronwall_certificate",
    "hs_norm",
    "mittag_leffler",
    "ml_deriv_z",
    "ml_eval",
    "ml_partials",
    "monte_carlo_orders",
    "order_sensitivity",
    "predicted_exponent",
    "reduce_to_abel",
    "relaxation_problem",
    "rl_derivative",
    "sequential_derivative",
    "solve_first_kind",
    "solve_forced",
    "solve_homogeneous",
    "solve_linear_resolvent",
    "solve_second_kind",
    "solve_sequential",
    "sweep_orders",
]
