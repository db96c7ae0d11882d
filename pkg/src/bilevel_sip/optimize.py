"""Derivative-free minimization of the leader's risk-averse objective.

The objective is piecewise constant in ``T x`` composed with a CDF, so it is
neither convex nor smooth.  Grid search and compass search both treat points
outside ``X`` or the induced feasible set as rejected (value ``+inf``).
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from fractions import Fraction

from .feasibility import grid_points
from .measures import Measure, exact_capable
from .model import INF, LeaderInstance, ValidationError, to_rational, to_vector
from .regions import RegionPartition
from .risk import InfeasibleDecisionError, RiskSpec, q_rho, q_rho_mc

ARGMIN_TOLERANCE = 1e-9
DEFAULT_MC_COUNT = 10**5

Point = tuple[Fraction, ...]
Objective = Callable[[Point], float]


@dataclass(frozen=True)
class SolveReport:
    """Best point found; ``status`` is converged, budget_exhausted or infeasible."""

    best_x: Point | None
    best_value: float
    evaluations: int
    trace: list[tuple[Point, float]]
    status: str


@dataclass(frozen=True)
class LocalizedReport:
    """Grid approximation of the localized optimal value and solution set on ``cl V``."""

    V: tuple[tuple[Fraction, Fraction], ...]
    xi_V: float
    Xi_V: list[Point]
    is_CLM: bool
    evaluations: int


def make_objective(
    instance: LeaderInstance,
    partition: RegionPartition,
    measure: Measure,
    spec: RiskSpec,
    mc_count: int | None = None,
    seed: int = 0,
) -> Objective:
    """``x -> Q(x)``, with ``+inf`` outside ``X`` or the induced feasible set.

    The exact path is used when the measure allows it and ``mc_count`` is None.
    Otherwise every call reuses ``seed``, so different ``x`` share random numbers.
    """
    exact = mc_count is None and exact_capable(measure)
    count = mc_count or DEFAULT_MC_COUNT

    def objective(x: Sequence) -> float:
        x = to_vector(x)
        if not instance.in_X(x):
            return INF
        try:
            if exact:
                return q_rho(instance, partition, measure, x, spec)
            return q_rho_mc(instance, measure, x, spec, count, seed)[0]
        except InfeasibleDecisionError:
            return INF

    return objective


def _parse_box(box: Sequence[Sequence]) -> tuple[tuple[Fraction, Fraction], ...]:
    parsed = tuple(tuple(to_vector(b)) for b in box)
    if any(len(b) != 2 or b[0] > b[1] for b in parsed):
        raise ValidationError("box must be a list of (lo, hi) pairs with lo <= hi")
    return parsed


def grid_search(objective: Objective, box: Sequence[Sequence], resolution: int) -> SolveReport:
    """Evaluate on a uniform grid and keep the first point of least value."""
    trace = [(x, objective(x)) for x in grid_points(_parse_box(box), resolution)]
    best_x, best_value = None, INF
    for x, value in trace:
        if value < best_value:
            best_x, best_value = x, value
    status = "infeasible" if best_x is None else "converged"
    return SolveReport(best_x=best_x, best_value=best_value, evaluations=len(trace), trace=trace, status=status)


def solve_grid(
    instance: LeaderInstance,
    partition: RegionPartition,
    measure: Measure,
    spec: RiskSpec,
    box: Sequence[Sequence],
    resolution: int,
    mc_count: int | None = None,
    seed: int = 0,
) -> SolveReport:
    if len(box) != instance.n:
        raise ValidationError(f"box has {len(box)} axes, expected n={instance.n}")
    objective = make_objective(instance, partition, measure, spec, mc_count, seed)
    return grid_search(objective, box, resolution)


def pattern_search(
    objective: Objective,
    x0: Sequence,
    step0,
    shrink=Fraction(1, 2),
    budget: int = 10**4,
    min_step_ratio: float = 1e-9,
) -> SolveReport:
    """Compass search: poll ``x +/- step e_j``, move on strict improvement, shrink otherwise.

    Steps and iterates stay rational.  ``budget`` limits the number of polls;
    the starting point is always evaluated.

    Raises:
        InfeasibleDecisionError: if ``objective(x0)`` is infinite.
    """
    x = to_vector(x0)
    step, shrink = to_rational(step0), to_rational(shrink)
    if step <= 0:
        raise ValidationError("step0 must be positive")
    if not 0 < shrink < 1:
        raise ValidationError("shrink must lie in (0, 1)")
    value = objective(x)
    evaluations = 1
    if not math.isfinite(value):
        raise InfeasibleDecisionError(f"starting point {tuple(map(str, x))} is infeasible")
    trace = [(x, value)]
    stop = step * to_rational(min_step_ratio)
    while step >= stop:
        improved = False
        for j in range(len(x)):
            for sign in (1, -1):
                if evaluations - 1 >= budget:
                    return SolveReport(x, value, evaluations, trace, "budget_exhausted")
                candidate = x[:j] + (x[j] + sign * step,) + x[j + 1 :]
                candidate_value = objective(candidate)
                evaluations += 1
                if candidate_value < value:
                    x, value = candidate, candidate_value
                    trace.append((x, value))
                    improved = True
                    break
            if improved:
                break
        if not improved:
            step *= shrink
    return SolveReport(x, value, evaluations, trace, "converged")


def solve_pattern(
    instance: LeaderInstance,
    partition: RegionPartition,
    measure: Measure,
    spec: RiskSpec,
    x0: Sequence,
    step0,
    shrink=Fraction(1, 2),
    budget: int = 10**4,
    mc_count: int | None = None,
    seed: int = 0,
) -> SolveReport:
    objective = make_objective(instance, partition, measure, spec, mc_count, seed)
    return pattern_search(objective, x0, step0, shrink, budget)


def localize(objective: Objective, V: Sequence[Sequence], resolution: int) -> LocalizedReport:
    """Grid estimate of ``inf Q`` over ``cl V`` and of its minimizers.

    Infeasible grid points count as ``+inf``.  The minimizers form a complete
    local minimizing set when there are some and none lies on the boundary of
    ``V``.
    """
    box = _parse_box(V)
    if any(lo >= hi for lo, hi in box):
        raise ValidationError("V must be a nonempty open box")
    values = [(x, objective(x)) for x in grid_points(box, resolution)]
    xi = min(v for _, v in values)
    minimizers = [] if xi == INF else [x for x, v in values if v <= xi + ARGMIN_TOLERANCE]
    interior = all(lo < c < hi for x in minimizers for c, (lo, hi) in zip(x, box))
    return LocalizedReport(
        V=box, xi_V=xi, Xi_V=minimizers, is_CLM=bool(minimizers) and interior, evaluations=len(values)
    )


def localized(
    instance: LeaderInstance,
    partition: RegionPartition,
    measure: Measure,
    spec: RiskSpec,
    V: Sequence[Sequence],
    resolution: int,
    mc_count: int | None = None,
    seed: int = 0,
) -> LocalizedReport:
    if len(V) != instance.n:
        raise ValidationError(f"V has {len(V)} axes, expected n={instance.n}")
    objective = make_objective(instance, partition, measure, spec, mc_count, seed)
    return localize(objective, V, resolution)
