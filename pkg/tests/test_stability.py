import math
from fractions import Fraction

import pytest

from bilevel_sip.catalog import sqrt_threshold_problem, threshold_problem
from bilevel_sip.measures import BoxUniform, Discrete, Mixture, dirac
from bilevel_sip.regions import build_partition
from bilevel_sip.risk import InfeasibleDecisionError, RiskSpec
from bilevel_sip.stability import (
    clm_check,
    contaminate,
    contamination_sequence,
    continuity_diagnostic,
    empirical_measure,
    empirical_sequence,
    holder_fit,
)


@pytest.fixture(scope="module")
def uniform_problem():
    problem = threshold_problem()
    return problem, build_partition(problem.instance.follower)


def test_empirical_measure_shape():
    mu = empirical_measure(BoxUniform([0], [1]), 50, seed=3)
    assert isinstance(mu, Discrete) and len(mu.atoms) == 50
    assert set(mu.weights) == {Fraction(1, 50)}
    assert mu == empirical_measure(BoxUniform([0], [1]), 50, seed=3)


def test_empirical_sequence_members_differ():
    seq = empirical_sequence(BoxUniform([0], [1]), [10, 10], seed=1)
    assert seq.labels == (("empirical", 10.0), ("empirical", 10.0))
    assert seq.elements[0] != seq.elements[1]


def test_contamination_endpoints():
    base, noise = BoxUniform([0], [1]), dirac(["0.5"])
    assert contaminate(base, noise, 0) is base
    assert contaminate(base, noise, 1) is noise
    mix = contaminate(base, noise, "0.1")
    assert isinstance(mix, Mixture) and mix.weights == (Fraction(9, 10), Fraction(1, 10))
    with pytest.raises(ValueError):
        contaminate(base, noise, 2)


def test_contamination_deviation_is_linear(uniform_problem):
    # Q(x, (1-e) U + e delta_{0.9}) at x = 0.5 is (1-e)/2 + e, so the deviation is e/2
    problem, p = uniform_problem
    seq = contamination_sequence(problem.measure, dirac(["0.9"]), ["0.2", "0.1", "0.05"])
    table = continuity_diagnostic(problem.instance, p, RiskSpec(), ["0.5"], seq)
    assert [row.q_deviation for row in table.rows] == pytest.approx([0.1, 0.05, 0.025])
    assert table.warnings == ()


def test_empirical_deviations_shrink(uniform_problem):
    problem, p = uniform_problem
    seq = empirical_sequence(problem.measure, [100, 1000, 10000], seed=2)
    table = continuity_diagnostic(problem.instance, p, RiskSpec(), ["0.5"], seq)
    assert table.q_base == 0.5
    for row in table.rows:
        assert row.q_deviation <= 4 / math.sqrt(row.label[1])


def test_jump_mass_warning(uniform_problem):
    problem, p = uniform_problem
    seq = contamination_sequence(problem.measure, dirac(["0.5"]), ["0.5"])
    table = continuity_diagnostic(problem.instance, p, RiskSpec(), ["0.5"], seq)
    assert any("jump" in w for w in table.warnings)


def test_localized_columns(uniform_problem):
    problem, p = uniform_problem
    seq = contamination_sequence(problem.measure, dirac([0]), ["0.5"])
    table = continuity_diagnostic(problem.instance, p, RiskSpec(), ["0.5"], seq, V=[(0, 1)], resolution=5)
    row = table.rows[0]
    assert row.xi_deviation is not None and row.solution_excess is not None


def test_infeasible_member_is_named(uniform_problem):
    problem, p = uniform_problem
    seq = contamination_sequence(problem.measure, dirac(["-0.9"]), ["0.5"])
    with pytest.raises(InfeasibleDecisionError, match="contamination"):
        continuity_diagnostic(problem.instance, p, RiskSpec(), ["0.5"], seq)


def test_holder_exponents():
    sqrt_problem = threshold_problem(measure=sqrt_threshold_problem().measure)
    p = build_partition(sqrt_problem.instance.follower)
    radii = ["0.16", "0.08", "0.04", "0.02"]
    fit = holder_fit(sqrt_problem.instance, p, sqrt_problem.measure, RiskSpec(), [1], radii)
    assert fit.exponent == pytest.approx(0.5, abs=1e-9)
    assert not fit.bounded_density
    uniform = threshold_problem()
    lipschitz = holder_fit(uniform.instance, p, uniform.measure, RiskSpec(), ["0.4"], radii)
    assert lipschitz.exponent == pytest.approx(1.0, abs=1e-9)
    assert lipschitz.bounded_density


def test_holder_flat_objective(uniform_problem):
    problem, p = uniform_problem
    # with x far above 1 every draw gives the same follower choice
    fit = holder_fit(problem.instance, p, problem.measure, RiskSpec(), [5], ["0.5", "0.25"])
    assert fit.exponent is None and fit.table == ((0.5, 0.0), (0.25, 0.0))


def test_holder_rejects_radii(uniform_problem):
    problem, p = uniform_problem
    with pytest.raises(ValueError):
        holder_fit(problem.instance, p, problem.measure, RiskSpec(), [1], ["0.1"])
    with pytest.raises(ValueError):
        holder_fit(problem.instance, p, problem.measure, RiskSpec(), [1], ["0.1", "0.2"])


def test_clm_check():
    problem = sqrt_threshold_problem()
    p = build_partition(problem.instance.follower)
    assert clm_check(problem.instance, p, problem.measure, problem.risk, [("0.5", "0.9")])
    assert not clm_check(problem.instance, p, problem.measure, problem.risk, [("0.1", "0.5")])


def test_contamination_within_one_region_is_invisible(uniform_problem):
    problem, p = uniform_problem
    seq = contamination_sequence(dirac(["0.8"]), dirac(["0.9"]), ["0.2", "0.1", "0.05"])
    table = continuity_diagnostic(problem.instance, p, RiskSpec(), ["0.5"], seq)
    assert [row.q_deviation for row in table.rows] == [0.0, 0.0, 0.0]


def test_holder_linear_on_coarse_radii(uniform_problem):
    problem, p = uniform_problem
    fit = holder_fit(problem.instance, p, problem.measure, RiskSpec(), ["0.4"], ["0.2", "0.1", "0.05"])
    assert fit.exponent == pytest.approx(1.0, abs=0.05)
