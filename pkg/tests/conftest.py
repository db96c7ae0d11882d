import math
import random
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

from bilevel_sip.catalog import (
    leader,
    six_point_follower,
    staircase_follower,
    three_item_follower,
    threshold_follower,
)
from bilevel_sip.model import FollowerProblem
from bilevel_sip.regions import build_partition

settings.register_profile("ci", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_follower(rng: random.Random, s: int, N: int, m: int = 2, rational_W: bool = False) -> FollowerProblem:
    """Distinct random integer points with small random ``W``, ``d``, ``q``."""
    points = set()
    while len(points) < N:
        points.add(tuple(rng.randint(-4, 4) for _ in range(m)))

    def entry():
        v = Fraction(rng.randint(-3, 3))
        return v / rng.choice((1, 2, 3)) if rational_W else v

    W = [[entry() for _ in range(m)] for _ in range(s)]
    d = [rng.randint(-3, 3) for _ in range(m)]
    q = [rng.randint(-3, 3) for _ in range(m)]
    return FollowerProblem(W=W, d=d, q=q, points=sorted(points))


def random_parameter(rng: random.Random, fp: FollowerProblem) -> tuple[Fraction, ...]:
    """Random rational ``t``; a third of the coordinates land exactly on a breakpoint."""
    t = []
    for j in range(fp.s):
        column = [img[j] for img in fp.images]
        if rng.random() < 1 / 3:
            t.append(rng.choice(column))
        else:
            lo, hi = min(column) - 1, max(column) + 1
            den = rng.randint(1, 7)
            t.append(Fraction(rng.randint(int(lo * den) - 1, int(hi * den) + 1), den))
    return tuple(t)


@pytest.fixture(scope="session")
def six_sum():
    return six_point_follower()


@pytest.fixture(scope="session")
def six_split():
    return six_point_follower(separate_rows=True)


@pytest.fixture(scope="session")
def three_item():
    return three_item_follower()


@pytest.fixture(scope="session")
def staircase():
    return staircase_follower()


@pytest.fixture(scope="session")
def threshold():
    return threshold_follower()


@pytest.fixture(scope="session")
def threshold_leader(threshold):
    return leader(threshold)


@pytest.fixture(scope="session")
def threshold_partition(threshold):
    return build_partition(threshold)


def random_distribution(rng: random.Random):
    """Random finite law with up to 8 integer-or-quarter values; returns ``(values, probs)``."""
    k = rng.randint(1, 8)
    values = sorted(rng.sample(range(-40, 41), k))
    values = [v / 4 for v in values]
    raw = [rng.random() + 0.01 for _ in range(k)]
    total = math.fsum(raw)
    probs = [r / total for r in raw]
    probs[-1] = 1.0 - math.fsum(probs[:-1])
    return values, probs
