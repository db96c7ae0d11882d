import math
import random
from fractions import Fraction

import numpy as np
import pytest

from bilevel_sip.catalog import leader
from bilevel_sip.lower_level import evaluate_at
from bilevel_sip.measures import BoxUniform, Discrete
from bilevel_sip.model import INF, FollowerProblem, matvec
from bilevel_sip.regions import (
    Cell,
    ResourceGuardError,
    build_partition,
    cells_pairwise_disjoint,
    discontinuity_mass_bound,
    dom_phi_contains,
    merge_cells,
    phi_via_partition,
    psi_via_partition,
    region_ids,
    region_of_stability,
    same_point_set,
)

from .conftest import random_follower, random_parameter


def box(*intervals) -> Cell:
    """``box((lo, hi), ...)`` with ``None`` meaning an unbounded upper end."""
    lo = tuple(Fraction(a) for a, _ in intervals)
    hi = tuple(INF if b is None else Fraction(b) for _, b in intervals)
    return Cell(lo, hi)


def in_region_by_definition(fp: FollowerProblem, active: frozenset, t) -> bool:
    """Membership from the defining formula: exactly the points of ``active`` satisfy ``W y <= t``."""
    for i, y in enumerate(fp.points):
        fits = all(a <= b for a, b in zip(matvec(fp.W, y), t))
        if fits != (i in active):
            return False
    return True


def test_single_row_regions(six_sum):
    p = build_partition(six_sum)
    got = [merge_cells(r.cells) for r in p.regions]
    expected = [[box((2, 4))], [box((4, 5))], [box((5, 6))], [box((6, None))]]
    assert len(got) == 4
    for cells, want in zip(got, expected):
        assert same_point_set(cells, want)


def test_two_row_regions(six_split):
    p = build_partition(six_split)
    expected = [
        box((-4, -3), (2, None)),
        box((-3, -1), (1, 2)),
        box((-3, -1), (2, 3)),
        box((-3, -2), (3, None)),
        box((-2, -1), (3, None)),
        box((-1, None), (1, 2)),
        box((-1, None), (2, 3)),
        box((-1, None), (3, None)),
    ]
    merged = [merge_cells(r.cells) for r in p.regions]
    assert len(merged) == 8
    assert all(len(m) == 1 for m in merged)
    assert {m[0] for m in merged} == set(expected)


@pytest.mark.parametrize(
    ("index", "expected"),
    [(4, [box((2, 5))]), (0, [box((5, None))]), (5, [])],
)
def test_stability_regions_single_row(six_sum, index, expected):
    p = build_partition(six_sum)
    assert same_point_set(region_of_stability(p, six_sum, index), expected)


@pytest.mark.parametrize(
    ("index", "expected"),
    [
        (3, box((-4, -3), (2, None))),
        (5, box((-3, -1), (1, 2))),
        (2, box((-3, -1), (2, 3))),
        (1, box((-3, -2), (3, None))),
        (0, box((-2, None), (3, None))),
        (4, box((-1, None), (1, 3))),
    ],
)
def test_stability_regions_two_rows(six_split, index, expected):
    # point order: (2,3), (3,3), (3,2), (4,2), (1,1), (3,1)
    p = build_partition(six_split)
    assert same_point_set(region_of_stability(p, six_split, index), [expected])


def test_region_of_stability_bad_index(six_sum):
    with pytest.raises(IndexError):
        region_of_stability(build_partition(six_sum), six_sum, 6)


def test_regions_match_defining_formula():
    rng = random.Random(21)
    for _ in range(8):
        fp = random_follower(rng, s=rng.randint(1, 3), N=rng.randint(1, 20), rational_W=True)
        p = build_partition(fp)
        for _ in range(300):
            t = random_parameter(rng, fp)
            region = p.region_of(t)
            if region is None:
                assert not any(all(a <= b for a, b in zip(img, t)) for img in fp.images)
                continue
            assert in_region_by_definition(fp, region.active_set, t)
            report = evaluate_at(fp, t)
            assert region.kappa_psi == report.psi
            assert region.kappa_phi == report.phi
            assert region.optimal_set == frozenset(report.argmin)


def test_regions_are_disjoint_and_cover_the_domain():
    rng = random.Random(8)
    fp = random_follower(rng, s=2, N=12)
    p = build_partition(fp)
    cells = [c for r in p.regions for c in r.cells]
    assert cells_pairwise_disjoint(cells)
    assert len(cells) + len(p.empty_cells()) == p.grid.cell_count
    assert len({r.active_set for r in p.regions}) == len(p.regions)


def test_stability_region_matches_argmin():
    rng = random.Random(4)
    for _ in range(5):
        fp = random_follower(rng, s=2, N=10)
        p = build_partition(fp)
        stable = {i: region_of_stability(p, fp, i) for i in range(fp.N)}
        for _ in range(200):
            t = random_parameter(rng, fp)
            argmin = set(evaluate_at(fp, t).argmin)
            for i, cells in stable.items():
                assert (i in argmin) == any(c.contains(t) for c in cells)


def test_partition_lookups(six_sum):
    p = build_partition(six_sum)
    # sums up to 4.5 admit (1, 1) and (3, 1); the first has the smaller d-value
    assert phi_via_partition(p, ["4.5"]) == 2
    assert psi_via_partition(p, ["4.5"]) == 0
    assert phi_via_partition(p, ["1.5"]) == math.inf
    assert dom_phi_contains(p, [2]) and not dom_phi_contains(p, ["1.999"])


def test_resource_guard(staircase):
    with pytest.raises(ResourceGuardError):
        build_partition(staircase, max_cells=100)


def test_pessimistic_partition(three_item):
    p = build_partition(three_item, pessimistic=True)
    assert phi_via_partition(p, (2, 2)) == -1
    assert p.pessimistic


def test_region_ids_vectorized_matches_scalar():
    rng = random.Random(13)
    fp = random_follower(rng, s=2, N=20, rational_W=True)
    p = build_partition(fp)
    offset = (Fraction(1, 3), Fraction(-2, 7))
    pts = [tuple(v - o for v, o in zip(random_parameter(rng, fp), offset)) for _ in range(400)]
    as_float = np.array([[float(v) for v in pt] for pt in pts])
    as_object = np.array(pts, dtype=object)
    exact = [p.region_id(tuple(o + v for o, v in zip(offset, pt))) for pt in pts]
    assert region_ids(p, as_object, offset).tolist() == exact
    float_exact = [p.region_id(tuple(o + Fraction(v) for o, v in zip(offset, row))) for row in as_float]
    assert region_ids(p, as_float, offset).tolist() == float_exact


def test_discontinuity_mass(six_sum):
    p = build_partition(six_sum)
    inst = leader(six_sum)
    atoms = Discrete(atoms=[[0], ["0.5"], [1]], weights=["0.25", "0.25", "0.5"])
    # t = 4, 4.5, 5: atoms at 4 and 5 sit on breakpoints
    assert discontinuity_mass_bound(p, inst, [4], atoms) == pytest.approx(0.75)
    assert discontinuity_mass_bound(p, inst, [4], BoxUniform([0], [1])) == 0.0


def test_cell_set_utilities():
    a = [box((0, 1), (0, 2)), box((1, 3), (0, 2))]
    assert same_point_set(a, [box((0, 3), (0, 2))])
    assert not same_point_set(a, [box((0, 3), (0, 1))])
    assert merge_cells(a) == [box((0, 3), (0, 2))]
    assert not cells_pairwise_disjoint([box((0, 2)), box((1, 3))])
    assert cells_pairwise_disjoint([box((0, 1)), box((1, 3))])
    assert same_point_set([], [])
    assert box((0, 1)).translate([Fraction(1, 2)]) == box(("1/2", "3/2"))
    assert str(box((-1, None), (1, 2))) == "[-1, inf) x [1, 2)"
