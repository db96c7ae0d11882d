"""Empirical checks of continuity and stability of the risk-averse objective.

These routines perturb the noise law (empirical measures, contamination) or the
decision (coordinate probes) and report how far the objective, the localized
optimal value and the localized solution set move.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .measures import (
    Discrete,
    Measure,
    Mixture,
    exact_capable,
    has_bounded_density,
    sample,
)
from .model import LeaderInstance, to_rational, to_vector
from .optimize import DEFAULT_MC_COUNT, LocalizedReport, localized
from .regions import RegionPartition, discontinuity_mass_bound
from .risk import InfeasibleDecisionError, RiskSpec, q_rho, q_rho_mc


@dataclass(frozen=True)
class PerturbationSequence:
    """Measures approaching ``base``; ``labels`` pair a kind with ``n`` or ``eps``."""

    base: Measure
    elements: tuple[Measure, ...]
    labels: tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class ContinuityRow:
    label: tuple[str, float]
    q_deviation: float
    xi_deviation: float | None = None
    solution_excess: float | None = None


@dataclass(frozen=True)
class ContinuityTable:
    """One row per sequence element; ``warnings`` flags uncertified hypotheses."""

    q_base: float
    rows: tuple[ContinuityRow, ...]
    warnings: tuple[str, ...] = field(default=())


def empirical_measure(measure: Measure, n: int, seed: int = 0) -> Discrete:
    """Uniform weights ``1/n`` on ``n`` seeded draws (duplicates keep separate atoms)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    points = sample(measure, n, seed).points
    atoms = [tuple(v if isinstance(v, Fraction) else Fraction(float(v)) for v in row) for row in points]
    return Discrete(atoms=atoms, weights=[Fraction(1, n)] * n)


def contaminate(base: Measure, noise: Measure, eps) -> Measure:
    """``(1 - eps) base + eps noise``; the endpoints return the pure laws."""
    eps = to_rational(eps)
    if not 0 <= eps <= 1:
        raise ValueError("eps must lie in [0, 1]")
    if eps == 0:
        return base
    if eps == 1:
        return noise
    return Mixture(components=(base, noise), weights=(1 - eps, eps))


def empirical_sequence(base: Measure, sizes: Sequence[int], seed: int = 0) -> PerturbationSequence:
    # each size draws from its own stream so the sequence members are independent
    elements = tuple(empirical_measure(base, n, seed=seed * 1_000_003 + k) for k, n in enumerate(sizes))
    return PerturbationSequence(base, elements, tuple(("empirical", float(n)) for n in sizes))


def contamination_sequence(base: Measure, noise: Measure, epsilons: Sequence) -> PerturbationSequence:
    elements = tuple(contaminate(base, noise, e) for e in epsilons)
    return PerturbationSequence(base, elements, tuple(("contamination", float(to_rational(e))) for e in epsilons))


def _q(instance, partition, measure, x, spec, mc_count, seed) -> float:
    if exact_capable(measure):
        return q_rho(instance, partition, measure, x, spec)
    return q_rho_mc(instance, measure, x, spec, mc_count, seed)[0]


def _excess(points: Sequence, targets: Sequence) -> float:
    """``sup_a dist(a, targets)`` in the Euclidean norm; 0 for an empty ``points``."""
    if not points:
        return 0.0
    if not targets:
        return math.inf
    a = np.array([[float(v) for v in p] for p in points])
    b = np.array([[float(v) for v in p] for p in targets])
    return float(np.max(np.min(np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2), axis=1)))


def continuity_diagnostic(
    instance: LeaderInstance,
    partition: RegionPartition,
    spec: RiskSpec,
    x: Sequence,
    sequence: PerturbationSequence,
    mc_count: int = DEFAULT_MC_COUNT,
    seed: int = 0,
    V: Sequence[Sequence] | None = None,
    resolution: int = 41,
) -> ContinuityTable:
    """Deviation of ``Q(x, mu_n)`` from ``Q(x, mu)`` along the sequence.

    With ``V`` given, also compares the localized optimal value and reports the
    excess of the perturbed localized solution set over the base one.

    Raises:
        InfeasibleDecisionError: naming the first element for which ``x`` is infeasible.
    """
    x = to_vector(x)
    warnings = []
    labelled = [(("base", 0.0), sequence.base)] + list(zip(sequence.labels, sequence.elements))
    for label, measure in labelled:
        try:
            if discontinuity_mass_bound(partition, instance, x, measure) > 0:
                warnings.append(f"{label[0]} {label[1]:g}: noise mass on a jump of phi at x")
        except ValueError:
            warnings.append(f"{label[0]} {label[1]:g}: jump set mass not certified")

    def q_of(label, measure, k):
        try:
            return _q(instance, partition, measure, x, spec, mc_count, seed + k)
        except InfeasibleDecisionError as exc:
            raise InfeasibleDecisionError(f"{label[0]} {label[1]:g}: {exc}", exc.witness) from exc

    q_base = q_of(("base", 0.0), sequence.base, 0)
    base_local: LocalizedReport | None = None
    if V is not None:
        base_local = localized(
            instance,
            partition,
            sequence.base,
            spec,
            V,
            resolution,
            None if exact_capable(sequence.base) else mc_count,
            seed,
        )
    rows = []
    for k, (label, measure) in enumerate(zip(sequence.labels, sequence.elements), start=1):
        xi_deviation = solution_excess = None
        if base_local is not None:
            local = localized(
                instance,
                partition,
                measure,
                spec,
                V,
                resolution,
                None if exact_capable(measure) else mc_count,
                seed + k,
            )
            both_finite = math.isfinite(local.xi_V) and math.isfinite(base_local.xi_V)
            xi_deviation = abs(local.xi_V - base_local.xi_V) if both_finite else math.inf
            solution_excess = _excess(local.Xi_V, base_local.Xi_V)
        q_deviation = abs(q_of(label, measure, k) - q_base)
        rows.append(ContinuityRow(label, q_deviation, xi_deviation, solution_excess))
    return ContinuityTable(q_base=q_base, rows=tuple(rows), warnings=tuple(warnings))


@dataclass(frozen=True)
class HolderFit:
    """Least-squares fit of ``log dQ(r) = log C + exponent log r``.

    ``exponent`` and ``constant`` are None when fewer than two radii give a
    positive modulus.  ``table`` lists ``(r, dQ(r))``.
    """

    exponent: float | None
    constant: float | None
    table: tuple[tuple[float, float], ...]
    bounded_density: bool


def holder_fit(
    instance: LeaderInstance,
    partition: RegionPartition,
    measure: Measure,
    spec: RiskSpec,
    x0: Sequence,
    radii: Sequence,
    mc_count: int | None = None,
    seed: int = 0,
) -> HolderFit:
    """Estimate the local Hölder exponent of ``Q`` at ``x0`` from coordinate probes.

    ``dQ(r) = max_j max_{+/-} |Q(x0 +/- r e_j) - Q(x0)|``.  The exact path is used
    when available; otherwise all probes share one seed.

    Raises:
        InfeasibleDecisionError: if ``x0`` or a probe is outside the induced feasible set.
    """
    x0 = to_vector(x0)
    radii = [to_rational(r) for r in radii]
    if len(radii) < 2 or any(r <= 0 for r in radii) or any(b >= a for a, b in itertools.pairwise(radii)):
        raise ValueError("radii must be at least two strictly decreasing positive numbers")
    count = mc_count or DEFAULT_MC_COUNT

    def q(x):
        if mc_count is None and exact_capable(measure):
            return q_rho(instance, partition, measure, x, spec)
        return q_rho_mc(instance, measure, x, spec, count, seed)[0]

    centre = q(x0)
    table = []
    for r in radii:
        moduli = [
            abs(q(x0[:j] + (x0[j] + sign * r,) + x0[j + 1 :]) - centre) for j in range(len(x0)) for sign in (1, -1)
        ]
        table.append((float(r), max(moduli)))
    positive = [(r, d) for r, d in table if d > 0]
    if len(positive) < 2:
        return HolderFit(None, None, tuple(table), has_bounded_density(measure))
    slope, intercept = np.polyfit(np.log([r for r, _ in positive]), np.log([d for _, d in positive]), 1)
    return HolderFit(float(slope), float(math.exp(intercept)), tuple(table), has_bounded_density(measure))


def clm_check(
    instance: LeaderInstance,
    partition: RegionPartition,
    measure: Measure,
    spec: RiskSpec,
    V: Sequence[Sequence],
    resolution: int = 41,
    mc_count: int | None = None,
    seed: int = 0,
) -> bool:
    """Whether the grid minimizers over ``cl V`` all lie strictly inside ``V``."""
    return localized(instance, partition, measure, spec, V, resolution, mc_count, seed).is_CLM
