"""Optimistic bi-level stochastic linear programs with a finite integer follower.

The follower solves ``min d^T y s.t. W y <= t`` over an explicit list of integer
points, with ``t = T x + z`` set by the leader's decision ``x`` and random noise
``z``.  The package partitions the parameter space into regions where the
follower's response is fixed, evaluates risk-averse leader objectives exactly
or by Monte Carlo, optimizes the decision, and runs stability experiments.
"""

from .feasibility import FeasibilityVerdict, fz_contains, fz_grid_scan
from .instance_io import Problem, load_instance, load_problem
from .lower_level import ArgminReport, evaluate_at, phi, phi_curve, psi
from .measures import BoxUniform, Discrete, Mixture, SamplerOnly, dirac, region_probability, sample, support_bounds
from .model import FollowerProblem, LeaderInstance, ObjectiveBounds, ValidationError, objective_bounds
from .optimize import LocalizedReport, SolveReport, localized, solve_grid, solve_pattern
from .regions import RegionPartition, ResourceGuardError, build_partition, region_of_stability
from .risk import (
    InfeasibleDecisionError,
    OutcomeDistribution,
    RiskSpec,
    evaluate_risk,
    outcome_distribution,
    q_rho,
    q_rho_mc,
)
from .stability import clm_check, contaminate, continuity_diagnostic, empirical_measure, holder_fit

__all__ = [
    "ArgminReport",
    "BoxUniform",
    "Discrete",
    "FeasibilityVerdict",
    "FollowerProblem",
    "InfeasibleDecisionError",
    "LeaderInstance",
    "LocalizedReport",
    "Mixture",
    "ObjectiveBounds",
    "OutcomeDistribution",
    "Problem",
    "RegionPartition",
    "ResourceGuardError",
    "RiskSpec",
    "SamplerOnly",
    "SolveReport",
    "ValidationError",
    "build_partition",
    "clm_check",
    "contaminate",
    "continuity_diagnostic",
    "dirac",
    "empirical_measure",
    "evaluate_at",
    "evaluate_risk",
    "fz_contains",
    "fz_grid_scan",
    "holder_fit",
    "load_instance",
    "load_problem",
    "localized",
    "objective_bounds",
    "outcome_distribution",
    "phi",
    "phi_curve",
    "psi",
    "q_rho",
    "q_rho_mc",
    "region_of_stability",
    "region_probability",
    "sample",
    "solve_grid",
    "solve_pattern",
    "support_bounds",
]
