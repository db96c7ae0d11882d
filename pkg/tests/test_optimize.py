import itertools
import math
from fractions import Fraction

import pytest

from bilevel_sip.catalog import sqrt_threshold_problem, threshold_problem
from bilevel_sip.feasibility import grid_points
from bilevel_sip.model import INF, ValidationError
from bilevel_sip.optimize import (
    grid_search,
    localize,
    localized,
    make_objective,
    pattern_search,
    solve_grid,
    solve_pattern,
)
from bilevel_sip.regions import build_partition
from bilevel_sip.risk import InfeasibleDecisionError, RiskSpec


@pytest.fixture(scope="module")
def sqrt_problem():
    problem = sqrt_threshold_problem()
    return problem, build_partition(problem.instance.follower)


def derived_objective(x: float) -> float:
    return -x + 1 - math.sqrt(1 - x)


def test_objective_matches_closed_form(sqrt_problem):
    problem, p = sqrt_problem
    f = make_objective(problem.instance, p, problem.measure, problem.risk)
    for x in ("0", "0.1", "0.5", "0.75", "0.99", "1"):
        assert f([Fraction(x)]) == pytest.approx(derived_objective(float(Fraction(x))), abs=1e-12)


def test_objective_is_infinite_outside(sqrt_problem):
    problem, p = sqrt_problem
    f = make_objective(problem.instance, p, problem.measure, problem.risk)
    assert f(["-0.01"]) == INF  # outside X and F_Z
    assert f(["1.01"]) == INF  # outside X only


def test_objective_mc_path(sqrt_problem):
    problem, p = sqrt_problem
    f = make_objective(problem.instance, p, problem.measure, problem.risk, mc_count=200_000, seed=3)
    assert f(["0.75"]) == pytest.approx(-0.25, abs=0.005)


def test_pattern_search_reaches_minimizer(sqrt_problem):
    problem, p = sqrt_problem
    report = solve_pattern(problem.instance, p, problem.measure, problem.risk, x0=["0.1"], step0="0.1")
    assert report.status == "converged"
    assert float(report.best_x[0]) == pytest.approx(0.75, abs=1e-3)
    assert report.best_value == pytest.approx(-0.25, abs=1e-3)
    assert report.evaluations < 10**4
    values = [v for _, v in report.trace]
    assert all(b < a for a, b in itertools.pairwise(values))


def test_pattern_search_on_quadratic():
    target = (Fraction(1, 3), Fraction(-2))

    def f(x):
        return float(sum((a - b) ** 2 for a, b in zip(x, target)))

    report = pattern_search(f, (0, 0), 1)
    assert report.status == "converged"
    assert all(abs(float(a - b)) < 1e-8 for a, b in zip(report.best_x, target))


def test_pattern_search_budget():
    report = pattern_search(lambda x: float(x[0]) ** 2, [10], 1, budget=5)
    assert report.status == "budget_exhausted"
    assert report.evaluations == 6


def test_pattern_search_rejects(sqrt_problem):
    with pytest.raises(InfeasibleDecisionError):
        pattern_search(lambda x: INF, [0], 1)
    with pytest.raises(ValidationError):
        pattern_search(lambda x: 0.0, [0], 0)
    with pytest.raises(ValidationError):
        pattern_search(lambda x: 0.0, [0], 1, shrink=1)


def test_grid_refinement_never_worse(sqrt_problem):
    problem, p = sqrt_problem
    f = make_objective(problem.instance, p, problem.measure, problem.risk)
    for r in (3, 5, 9, 17):
        coarse, fine = grid_search(f, [(0, 1)], r), grid_search(f, [(0, 1)], 2 * r - 1)
        assert set(grid_points([(0, 1)], r)) <= set(grid_points([(0, 1)], 2 * r - 1))
        assert fine.best_value <= coarse.best_value
    assert fine.best_x == (Fraction(3, 4),)
    assert fine.best_value == pytest.approx(-0.25, abs=1e-15)


def test_grid_reports_infeasible():
    problem = threshold_problem()
    p = build_partition(problem.instance.follower)
    report = solve_grid(problem.instance, p, problem.measure, problem.risk, [(-2, "-0.5")], 5)
    assert report.status == "infeasible" and report.best_x is None


def test_grid_dimension_check(sqrt_problem):
    problem, p = sqrt_problem
    with pytest.raises(ValidationError):
        solve_grid(problem.instance, p, problem.measure, problem.risk, [(0, 1), (0, 1)], 3)


def test_localized_interior_and_boundary(sqrt_problem):
    problem, p = sqrt_problem
    inner = localized(problem.instance, p, problem.measure, problem.risk, [("0.5", "0.9")], 41)
    assert inner.is_CLM and inner.Xi_V == [(Fraction(3, 4),)]
    assert inner.xi_V == pytest.approx(-0.25)
    edge = localized(problem.instance, p, problem.measure, problem.risk, [("0.75", "0.9")], 16)
    assert not edge.is_CLM
    assert edge.Xi_V == [(Fraction(3, 4),)]


def test_localize_all_infeasible():
    report = localize(lambda x: INF, [(0, 1)], 5)
    assert report.xi_V == INF and report.Xi_V == [] and not report.is_CLM


def test_localize_ties_within_tolerance():
    report = localize(lambda x: 0.0 if Fraction(1, 4) <= x[0] <= Fraction(3, 4) else 1.0, [(0, 1)], 5)
    assert report.Xi_V == [(Fraction(1, 4),), (Fraction(1, 2),), (Fraction(3, 4),)]
    assert report.is_CLM


def test_localize_rejects_degenerate_box():
    with pytest.raises(ValidationError):
        localize(lambda x: 0.0, [(1, 1)], 3)


def test_cvar_objective_is_solved_too():
    problem = threshold_problem(c=-1, unit_interval=True, risk=RiskSpec("cvar", alpha=0.5))
    p = build_partition(problem.instance.follower)
    report = solve_grid(problem.instance, p, problem.measure, problem.risk, [(0, 1)], 11)
    # phi(x+Z) is 1 with probability x; CVaR_0.5 is 2x up to x = 1/2 and 1 above,
    # so the objective is x, then 1 - x: both ends tie at 0 and the first is kept
    expected = [float(x) if x <= Fraction(1, 2) else float(1 - x) for x in (Fraction(k, 10) for k in range(11))]
    assert [v for _, v in report.trace] == pytest.approx(expected, abs=1e-12)
    assert report.best_x == (Fraction(0),)
