"""Small reference instances with hand-checkable value functions.

* ``staircase``: all integer points of a square, ``W = diag(-1, 1)``,
  ``d = (1, -1)``, ``q = (1, 1)``.  Inside the box ``phi(t) = ceil(-t1) + floor(t2)``
  and ``psi(t) = -floor(t1) - floor(t2)``.
* ``six_point``: six points in the plane under a single summed constraint
  (``W = [1 1]``) or two separate ones (``W = diag(-1, 1)``).
* ``three_item``: the cube ``{0..3}^3`` under two packing constraints, where
  ``phi`` fails to be subadditive.
* ``threshold``: the scalar follower ``max y s.t. y <= t, y in {0, 1}``, whose
  leader value jumps from 0 to 1 at ``t = 1``.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

from .instance_io import Problem
from .measures import BoxUniform, Measure, sqrt_density_unit
from .model import FollowerProblem, LeaderInstance
from .risk import RiskSpec

SIX_POINTS = ((2, 3), (3, 3), (3, 2), (4, 2), (1, 1), (3, 1))


def _identity(k: int) -> list[list[int]]:
    return [[int(i == j) for j in range(k)] for i in range(k)]


def staircase_follower(half_width: int = 5) -> FollowerProblem:
    side = range(-half_width, half_width + 1)
    return FollowerProblem(W=[[-1, 0], [0, 1]], d=[1, -1], q=[1, 1], points=list(itertools.product(side, side)))


def six_point_follower(separate_rows: bool = False, d=(1, -1), q=(1, 1)) -> FollowerProblem:
    W = [[-1, 0], [0, 1]] if separate_rows else [[1, 1]]
    return FollowerProblem(W=W, d=d, q=q, points=SIX_POINTS)


def three_item_follower(top: int = 3) -> FollowerProblem:
    return FollowerProblem(
        W=[[1, 2, 2], [2, 2, 1]],
        d=[-1, -2, -2],
        q=[-3, -2, -1],
        points=list(itertools.product(range(top + 1), repeat=3)),
    )


def threshold_follower() -> FollowerProblem:
    return FollowerProblem(W=[[1]], d=[-1], q=[1], points=[[0], [1]])


def leader(follower: FollowerProblem, c=None, T=None, A=(), b=()) -> LeaderInstance:
    """Leader with ``T = I`` and ``c = 0`` unless given; empty ``A`` means ``X = R^n``."""
    s = follower.s
    return LeaderInstance(
        c=c if c is not None else [0] * s,
        T=T if T is not None else _identity(s),
        A=list(A),
        b=list(b),
        follower=follower,
    )


def threshold_problem(
    c=0,
    measure: Measure | None = None,
    unit_interval: bool = False,
    risk: RiskSpec | None = None,
    name: str = "threshold_uniform",
) -> Problem:
    """Scalar threshold follower driven by ``x + Z``; ``unit_interval`` sets ``X = [0, 1]``."""
    A, b = ([[1], [-1]], [1, 0]) if unit_interval else ((), ())
    return Problem(
        instance=leader(threshold_follower(), c=[c], A=A, b=b),
        measure=measure if measure is not None else BoxUniform([0], [1]),
        risk=risk or RiskSpec(),
        name=name,
    )


def sqrt_threshold_problem() -> Problem:
    """Threshold follower, ``c = -1``, ``X = [0, 1]``, noise density ``1/(2 sqrt z)``.

    The objective is ``-x + 1 - sqrt(1 - x)`` with minimizer ``3/4`` and value ``-1/4``.
    """
    return threshold_problem(c=-1, measure=sqrt_density_unit(), unit_interval=True, name="threshold_sqrt_leader")


def catalog() -> dict[str, Problem]:
    """Named problems written to the ``instances/`` directory."""
    uniform = BoxUniform([0], [1])
    return {
        "staircase": Problem(leader(staircase_follower()), BoxUniform([0, 0], [1, 1]), name="staircase"),
        "six_point_sum": Problem(leader(six_point_follower()), uniform, name="six_point_sum"),
        "six_point_split": Problem(
            leader(six_point_follower(separate_rows=True)),
            BoxUniform([0, 0], [Fraction(1, 2), Fraction(1, 2)]),
            name="six_point_split",
        ),
        "three_item": Problem(leader(three_item_follower()), BoxUniform([0, 0], [1, 1]), name="three_item"),
        "threshold_uniform": threshold_problem(),
        "threshold_sqrt": Problem(
            leader(threshold_follower()),
            sqrt_density_unit(),
            name="threshold_sqrt",
        ),
        "threshold_sqrt_leader": sqrt_threshold_problem(),
    }
