"""Problem data for optimistic bi-level stochastic programs with a finite follower.

Geometric data (matrices, right-hand sides, follower points) is held as
``fractions.Fraction`` so that the half-open comparisons ``W y <= t`` are decided
exactly.  Probabilities and risk values elsewhere in the package are floats.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from numbers import Rational as _RationalABC
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .regions import RegionPartition

Rational = Fraction
# Either a finite Fraction or math.inf; -inf cannot arise with a finite follower set.
ExtendedValue = Fraction | float
INF = math.inf

Vector = tuple[Fraction, ...]
Matrix = tuple[tuple[Fraction, ...], ...]


class ValidationError(ValueError):
    """Instance data is inconsistent (dimensions, empty or non-integral points)."""


def to_rational(value) -> Fraction:
    """Convert a number or numeric string to an exact Fraction.

    Strings such as ``"0.5"``, ``"-3"`` or ``"1/3"`` are parsed exactly.  Python
    floats go through their shortest decimal representation, so ``0.1`` becomes
    ``1/10`` rather than the nearest binary fraction.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValidationError(f"boolean is not a number: {value!r}")
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, _RationalABC):
        return Fraction(value.numerator, value.denominator)
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ValidationError(f"non-finite number: {value!r}")
        return Fraction(repr(float(value)))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"not a rational literal: {value!r}") from exc
    raise ValidationError(f"cannot interpret {value!r} as a rational number")


def to_vector(values: Iterable) -> Vector:
    return tuple(to_rational(v) for v in values)


def to_matrix(rows: Iterable[Iterable]) -> Matrix:
    return tuple(to_vector(row) for row in rows)


def to_integer(value) -> int:
    r = to_rational(value)
    if r.denominator != 1:
        raise ValidationError(f"follower point coordinate {value!r} is not an integer")
    return r.numerator


def dot(u: Sequence, v: Sequence):
    return sum((a * b for a, b in zip(u, v)), Fraction(0))


def matvec(M: Matrix, v: Sequence) -> Vector:
    return tuple(dot(row, v) for row in M)


@dataclass(frozen=True)
class FollowerProblem:
    """Lower-level data: ``min d^T y  s.t.  W y <= t, y in points``.

    ``points`` is the explicit enumeration of the finite integer feasible set;
    ``q`` is the leader's cost on the follower's response.
    """

    W: Matrix
    d: Vector
    q: Vector
    points: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "W", to_matrix(self.W))
        object.__setattr__(self, "d", to_vector(self.d))
        object.__setattr__(self, "q", to_vector(self.q))
        object.__setattr__(self, "points", tuple(tuple(to_integer(c) for c in p) for p in self.points))
        if not self.points:
            raise ValidationError("follower point list is empty")
        m = len(self.d)
        if m == 0:
            raise ValidationError("follower dimension m must be positive")
        if len(self.q) != m:
            raise ValidationError(f"q has length {len(self.q)}, expected m={m}")
        if not self.W or any(len(row) != m for row in self.W):
            raise ValidationError(f"W must be a nonempty s x {m} matrix")
        if any(len(p) != m for p in self.points):
            raise ValidationError(f"every follower point must have {m} coordinates")
        if len(set(self.points)) != len(self.points):
            raise ValidationError("follower points are not pairwise distinct")

    @property
    def s(self) -> int:
        return len(self.W)

    @property
    def m(self) -> int:
        return len(self.d)

    @property
    def N(self) -> int:
        return len(self.points)

    @cached_property
    def images(self) -> tuple[Vector, ...]:
        """``W y`` for every follower point, in point order."""
        return tuple(matvec(self.W, p) for p in self.points)

    @cached_property
    def d_values(self) -> tuple[Fraction, ...]:
        return tuple(dot(self.d, p) for p in self.points)

    @cached_property
    def q_values(self) -> tuple[Fraction, ...]:
        return tuple(dot(self.q, p) for p in self.points)


@dataclass(frozen=True)
class LeaderInstance:
    """Upper-level data ``c, T`` and the leader polyhedron ``X = {x | A x <= b}``.

    An empty ``A`` (``r = 0``) stands for ``X = R^n``.
    """

    c: Vector
    T: Matrix
    A: Matrix
    b: Vector
    follower: FollowerProblem

    def __post_init__(self):
        object.__setattr__(self, "c", to_vector(self.c))
        object.__setattr__(self, "T", to_matrix(self.T))
        object.__setattr__(self, "A", to_matrix(self.A))
        object.__setattr__(self, "b", to_vector(self.b))
        n = len(self.c)
        if n == 0:
            raise ValidationError("leader dimension n must be positive")
        if len(self.T) != self.follower.s:
            raise ValidationError(f"T has {len(self.T)} rows, expected s={self.follower.s}")
        if any(len(row) != n for row in self.T):
            raise ValidationError(f"T must have n={n} columns")
        if len(self.A) != len(self.b):
            raise ValidationError(f"A has {len(self.A)} rows but b has length {len(self.b)}")
        if any(len(row) != n for row in self.A):
            raise ValidationError(f"A must have n={n} columns")

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def r(self) -> int:
        return len(self.A)

    @property
    def s(self) -> int:
        return self.follower.s

    def in_X(self, x: Sequence) -> bool:
        x = to_vector(x)
        return all(dot(row, x) <= bi for row, bi in zip(self.A, self.b))

    def shift(self, x: Sequence) -> Vector:
        """``T x``, the leader's contribution to the follower right-hand side."""
        return matvec(self.T, to_vector(x))

    def leader_cost(self, x: Sequence) -> Fraction:
        return dot(self.c, to_vector(x))


@dataclass(frozen=True)
class ObjectiveBounds:
    """Constants with ``|c^T x + phi(Tx + z)| <= L_f ||x|| + C_f`` on the domain."""

    L_f: float
    C_f: float
    l_psi: Fraction
    u_psi: Fraction
    l_phi: Fraction
    u_phi: Fraction

    def bound(self, x: Sequence) -> float:
        norm = math.sqrt(sum(float(v) ** 2 for v in x))
        return self.L_f * norm + self.C_f


def objective_bounds(instance: LeaderInstance, partition: RegionPartition | None = None) -> ObjectiveBounds:
    """Extremal region constants and the linear growth bound of the leader objective.

    ``L_f`` uses the Euclidean norm of ``c``; any other norm only changes constants.
    """
    from .regions import build_partition

    if partition is None:
        partition = build_partition(instance.follower)
    psi = [reg.kappa_psi for reg in partition.regions]
    phi = [reg.kappa_phi for reg in partition.regions]
    l_phi, u_phi = min(phi), max(phi)
    return ObjectiveBounds(
        L_f=math.sqrt(sum(float(v) ** 2 for v in instance.c)),
        C_f=float(max(abs(u_phi), abs(l_phi))),
        l_psi=min(psi),
        u_psi=max(psi),
        l_phi=l_phi,
        u_phi=u_phi,
    )
