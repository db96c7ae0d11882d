"""Exact membership in the leader polyhedron ``X`` and the induced feasible set.

``x`` belongs to the induced feasible set when ``T x + z`` lies in ``dom Phi`` for
every ``z`` in the support of the noise.  Since ``dom Phi`` is a union of upper
orthants, a box is covered iff every grid cell meeting the box has a nonempty
feasible set; that is the test used for box supports.
"""

from __future__ import annotations

import itertools
from bisect import bisect_right
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .measures import (
    BoxUniform,
    Discrete,
    Measure,
    Mixture,
    SamplerOnly,
    UnsupportedMeasureError,
    atom_array,
)
from .model import LeaderInstance, ValidationError, to_vector
from .regions import RegionPartition, region_ids


@dataclass(frozen=True)
class FeasibilityVerdict:
    """``witness`` is the first uncovered parameter ``t = T x + z`` found, if any."""

    in_X: bool
    in_FZ: bool
    witness: tuple[Fraction, ...] | None = None

    @property
    def feasible(self) -> bool:
        return self.in_X and self.in_FZ


def _box_witness(p: RegionPartition, lo: Sequence[Fraction], hi: Sequence[Fraction]) -> tuple[Fraction, ...] | None:
    """First point of the closed box ``[lo, hi]`` outside ``dom Phi``, or None."""
    if p.grid.locate(lo) is None:
        return tuple(lo)
    ranges = []
    for th, a, b in zip(p.grid.thresholds, lo, hi):
        # cells [th[k], th[k+1]) meeting [a, b]: from the cell holding a up to the last th[k] <= b
        ranges.append(range(bisect_right(th, a) - 1, bisect_right(th, b)))
    for index in itertools.product(*ranges):
        if p.owner[index] < 0:
            cell = p.grid.cell(index)
            return tuple(max(c, a) for c, a in zip(cell.lo, lo))
    return None


def _support_witness(
    instance: LeaderInstance, p: RegionPartition, measure: Measure, shift
) -> tuple[Fraction, ...] | None:
    if isinstance(measure, Discrete):
        outside = np.flatnonzero(region_ids(p, atom_array(measure.atoms), shift) < 0)
        if outside.size == 0:
            return None
        return tuple(a + b for a, b in zip(shift, measure.atoms[outside[0]]))
    if isinstance(measure, BoxUniform):
        lo = tuple(a + b for a, b in zip(shift, measure.lo))
        hi = tuple(a + b for a, b in zip(shift, measure.hi))
        return _box_witness(p, lo, hi)
    if isinstance(measure, Mixture):
        for comp in measure.components:
            witness = _support_witness(instance, p, comp, shift)
            if witness is not None:
                return witness
        return None
    if isinstance(measure, SamplerOnly) and measure.support_is_exact:
        return _box_witness(p, [a + b for a, b in zip(shift, measure.lo)], [a + b for a, b in zip(shift, measure.hi)])
    raise UnsupportedMeasureError(f"support of {type(measure).__name__} is not known exactly")


def fz_contains(
    instance: LeaderInstance, partition: RegionPartition, measure: Measure, x: Sequence
) -> FeasibilityVerdict:
    """Decide ``x in X`` and ``x in F_Z`` exactly.

    A closed box support is used for box-uniform laws (the support of the
    uniform law is the closed box).  Mixture supports are the union of the
    component supports.

    Raises:
        UnsupportedMeasureError: for sampler laws whose support is only declared.
    """
    x = to_vector(x)
    if len(x) != instance.n:
        raise ValidationError(f"decision has dimension {len(x)}, expected n={instance.n}")
    if measure.dim != instance.s:
        raise ValidationError(f"measure has dimension {measure.dim}, expected s={instance.s}")
    witness = _support_witness(instance, partition, measure, instance.shift(x))
    return FeasibilityVerdict(in_X=instance.in_X(x), in_FZ=witness is None, witness=witness)


def grid_points(box: Sequence[tuple], resolution: int) -> list[tuple[Fraction, ...]]:
    """Uniform rational grid with ``resolution`` points per axis, corners included."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    axes = []
    for bounds in box:
        lo, hi = to_vector(bounds)
        if lo > hi:
            raise ValidationError(f"box interval [{lo}, {hi}] is empty")
        axes.append([lo + (hi - lo) * Fraction(k, resolution - 1) for k in range(resolution)])
    return list(itertools.product(*axes))


def fz_grid_scan(
    instance: LeaderInstance,
    partition: RegionPartition,
    measure: Measure,
    box: Sequence[tuple],
    resolution: int,
) -> list[tuple[tuple[Fraction, ...], FeasibilityVerdict]]:
    """:func:`fz_contains` on every point of a uniform grid over ``box``."""
    if len(box) != instance.n:
        raise ValidationError(f"box has {len(box)} axes, expected n={instance.n}")
    return [(x, fz_contains(instance, partition, measure, x)) for x in grid_points(box, resolution)]
