"""Partition of the follower's parameter space into regions of constant value.

Every right-hand side ``t`` determines the set of feasible follower points
``{i | W y_i <= t}``.  Grouping parameters by that set splits ``dom Phi`` into
finitely many regions, and both value functions are constant on each region.

The breakpoints of the partition along coordinate ``j`` are the distinct values
``(W y_i)_j``.  They cut the space into half-open grid cells ``[lo, hi)`` on which
the feasible set is constant, namely the feasible set at the cell's lower corner.
A region is stored as the union of the cells sharing one feasible set.
"""

from __future__ import annotations

import itertools
import math
from bisect import bisect_right
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING

import numpy as np

from .model import INF, ExtendedValue, FollowerProblem, LeaderInstance, to_vector

if TYPE_CHECKING:
    from .measures import Measure

DEFAULT_CELL_LIMIT = 10**7


class ResourceGuardError(RuntimeError):
    """The requested grid is larger than the configured cell limit."""


@dataclass(frozen=True)
class Cell:
    """Axis-aligned half-open box ``prod_j [lo_j, hi_j)``; ``hi_j`` may be ``inf``."""

    lo: tuple[Fraction, ...]
    hi: tuple[ExtendedValue, ...]

    def contains(self, t: Sequence[Fraction]) -> bool:
        return all(lo <= v < hi for lo, v, hi in zip(self.lo, t, self.hi))

    def translate(self, offset: Sequence[Fraction]) -> Cell:
        return Cell(
            lo=tuple(lo + o for lo, o in zip(self.lo, offset)),
            hi=tuple(hi + o if hi != INF else INF for hi, o in zip(self.hi, offset)),
        )

    def __str__(self) -> str:
        parts = []
        for lo, hi in zip(self.lo, self.hi):
            right = "inf)" if hi == INF else f"{hi})"
            parts.append(f"[{lo}, {right}")
        return " x ".join(parts)


@dataclass(frozen=True)
class ThresholdGrid:
    """Sorted distinct breakpoints per coordinate."""

    thresholds: tuple[tuple[Fraction, ...], ...]

    @classmethod
    def from_follower(cls, fp: FollowerProblem) -> ThresholdGrid:
        return cls(tuple(tuple(sorted({img[j] for img in fp.images})) for j in range(fp.s)))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(th) for th in self.thresholds)

    @property
    def cell_count(self) -> int:
        return math.prod(self.shape)

    def locate(self, t: Sequence[Fraction]) -> tuple[int, ...] | None:
        """Index of the cell containing ``t``, or None below the first breakpoint."""
        index = []
        for th, v in zip(self.thresholds, t):
            k = bisect_right(th, v) - 1
            if k < 0:
                return None
            index.append(k)
        return tuple(index)

    def cell(self, index: Sequence[int]) -> Cell:
        lo, hi = [], []
        for th, k in zip(self.thresholds, index):
            lo.append(th[k])
            hi.append(th[k + 1] if k + 1 < len(th) else INF)
        return Cell(tuple(lo), tuple(hi))


@dataclass(frozen=True, eq=False)
class Region:
    """Parameters sharing the feasible follower set ``active_set``.

    ``optimal_set`` is the d-optimal subset of ``active_set``; ``kappa_psi`` and
    ``kappa_phi`` are the follower's and the leader's value on the region.
    """

    active_set: frozenset[int]
    optimal_set: frozenset[int]
    kappa_psi: Fraction
    kappa_phi: Fraction
    cell_indices: tuple[tuple[int, ...], ...]
    grid: ThresholdGrid = field(repr=False)

    @property
    def cells(self) -> list[Cell]:
        return [self.grid.cell(k) for k in self.cell_indices]


@dataclass(frozen=True, eq=False)
class RegionPartition:
    """Finite partition of ``dom Phi`` into regions of constant ``psi`` and ``phi``.

    ``owner`` maps every grid cell index to its region id, with ``-1`` for cells
    whose feasible set is empty (those cells witness ``t`` outside the domain).
    """

    grid: ThresholdGrid
    regions: tuple[Region, ...]
    owner: np.ndarray = field(repr=False)
    pessimistic: bool = False

    def region_id(self, t: Sequence) -> int:
        index = self.grid.locate(to_vector(t))
        if index is None:
            return -1
        return int(self.owner[index])

    def region_of(self, t: Sequence) -> Region | None:
        rid = self.region_id(t)
        return None if rid < 0 else self.regions[rid]

    def empty_cells(self) -> list[Cell]:
        return [self.grid.cell(tuple(int(v) for v in k)) for k in np.argwhere(self.owner < 0)]


def _region_values(fp: FollowerProblem, active: Iterable[int], pessimistic: bool):
    active = sorted(active)
    kappa_psi = min(fp.d_values[i] for i in active)
    optimal = frozenset(i for i in active if fp.d_values[i] == kappa_psi)
    pick = max if pessimistic else min
    kappa_phi = pick(fp.q_values[i] for i in optimal)
    return kappa_psi, optimal, kappa_phi


def build_partition(
    fp: FollowerProblem,
    max_cells: int = DEFAULT_CELL_LIMIT,
    pessimistic: bool = False,
) -> RegionPartition:
    """Enumerate grid cells, group them by feasible set, and tabulate region values.

    Only feasible sets that actually occur are produced, so subsets that can never
    be the feasible set (a point excluded while a point it dominates in ``W y`` is
    included) are skipped without being tested.

    Raises:
        ResourceGuardError: if the number of grid cells exceeds ``max_cells``.
    """
    grid = ThresholdGrid.from_follower(fp)
    shape = grid.shape
    if grid.cell_count > max_cells:
        raise ResourceGuardError(f"{grid.cell_count} grid cells exceed the limit of {max_cells}")

    # position of each point's image in the threshold lists; point i is feasible
    # in cell k iff pos[i] <= k componentwise
    pos = np.array(
        [[grid.thresholds[j].index(img[j]) for j in range(fp.s)] for img in fp.images],
        dtype=np.int64,
    )
    cells = np.stack(np.unravel_index(np.arange(grid.cell_count), shape), axis=1)
    chunk = max(1, 2**22 // max(fp.N, 1))
    packed = np.concatenate(
        [
            np.packbits(np.all(pos[None, :, :] <= cells[start : start + chunk, None, :], axis=2), axis=1)
            for start in range(0, grid.cell_count, chunk)
        ]
    )
    _, first, labels = np.unique(packed, axis=0, return_index=True, return_inverse=True)
    labels = labels.reshape(-1)

    # regions are numbered in order of their first cell; the empty set gets none
    regions: list[Region] = []
    label_to_region = {}
    for label in np.argsort(first, kind="stable"):
        label, idx = int(label), int(first[label])
        active = frozenset(int(i) for i in np.flatnonzero(np.all(pos <= cells[idx], axis=1)))
        if not active:
            label_to_region[label] = -1
            continue
        label_to_region[label] = len(regions)
        kappa_psi, optimal, kappa_phi = _region_values(fp, active, pessimistic)
        regions.append(
            Region(
                active_set=active,
                optimal_set=optimal,
                kappa_psi=kappa_psi,
                kappa_phi=kappa_phi,
                cell_indices=(),
                grid=grid,
            )
        )
    mapping = np.array([label_to_region[k] for k in range(len(first))], dtype=np.int64)
    owner_flat = mapping[labels]
    members: list[list[tuple[int, ...]]] = [[] for _ in regions]
    for idx, rid in enumerate(owner_flat):
        if rid >= 0:
            members[rid].append(tuple(int(v) for v in cells[idx]))
    regions = [
        Region(
            active_set=reg.active_set,
            optimal_set=reg.optimal_set,
            kappa_psi=reg.kappa_psi,
            kappa_phi=reg.kappa_phi,
            cell_indices=tuple(members[k]),
            grid=grid,
        )
        for k, reg in enumerate(regions)
    ]
    return RegionPartition(
        grid=grid,
        regions=tuple(regions),
        owner=owner_flat.reshape(shape),
        pessimistic=pessimistic,
    )


def phi_via_partition(p: RegionPartition, t: Sequence) -> ExtendedValue:
    """Leader's value at ``t`` read off the region table (``inf`` off the domain)."""
    region = p.region_of(t)
    return INF if region is None else region.kappa_phi


def psi_via_partition(p: RegionPartition, t: Sequence) -> ExtendedValue:
    region = p.region_of(t)
    return INF if region is None else region.kappa_psi


def dom_phi_contains(p: RegionPartition, t: Sequence) -> bool:
    """Whether some follower point is feasible at ``t``."""
    return p.region_id(t) >= 0


def region_ids(p: RegionPartition, z: np.ndarray, offset: Sequence) -> np.ndarray:
    """Region id of ``offset + z`` for every row of ``z`` (``-1`` off the domain).

    Float rows are located exactly: ``offset_j + z_j >= theta`` is tested as
    ``z_j >= float_ceiling(theta - offset_j)``.  Object rows hold Fractions.
    """
    from .lower_level import float_ceiling

    z = np.asarray(z)
    offset = to_vector(offset)
    index = np.zeros(z.shape[0], dtype=np.int64)
    below = np.zeros(z.shape[0], dtype=bool)
    for j, th in enumerate(p.grid.thresholds):
        shifted = [v - offset[j] for v in th]
        if z.dtype == object:
            k = np.fromiter((bisect_right(shifted, v) for v in z[:, j]), dtype=np.int64, count=z.shape[0]) - 1
        else:
            bounds = np.array([float_ceiling(v) for v in shifted])
            k = np.searchsorted(bounds, z[:, j], side="right") - 1
        below |= k < 0
        index = index * len(th) + np.maximum(k, 0)
    ids = p.owner.reshape(-1)[index]
    ids[below] = -1
    return ids


def region_of_stability(p: RegionPartition, fp: FollowerProblem, point_index: int) -> list[Cell]:
    """Cells where ``point_index`` is an optimal follower response."""
    if not 0 <= point_index < fp.N:
        raise IndexError(f"point index {point_index} out of range for N={fp.N}")
    cells: list[Cell] = []
    for region in p.regions:
        if point_index in region.optimal_set:
            cells.extend(region.cells)
    return cells


def discontinuity_mass_bound(
    p: RegionPartition,
    instance: LeaderInstance,
    x: Sequence,
    measure: Measure,
) -> float:
    """Upper bound on the mass of noise values where ``phi(Tx + .)`` may jump.

    Jumps of ``phi`` lie on the hyperplanes ``t_j = threshold``.  Discrete atoms on
    such a hyperplane are counted in full; absolutely continuous parts give zero.
    """
    from .measures import (
        BoxUniform,
        Discrete,
        Mixture,
        SamplerOnly,
        UnsupportedMeasureError,
    )

    shift = instance.shift(x)
    if isinstance(measure, Discrete):
        total = 0.0
        for atom, w in zip(measure.atoms, measure.weights):
            t = [a + b for a, b in zip(shift, atom)]
            if any(v in set(th) for v, th in zip(t, p.grid.thresholds)):
                total += float(w)
        return total
    if isinstance(measure, BoxUniform):
        return 0.0
    if isinstance(measure, Mixture):
        return sum(
            float(w) * discontinuity_mass_bound(p, instance, x, comp)
            for comp, w in zip(measure.components, measure.weights)
        )
    if isinstance(measure, SamplerOnly) and measure.marginal_cdfs is not None:
        return 0.0
    raise UnsupportedMeasureError(f"no discontinuity bound for measure kind {type(measure).__name__}")


# --- set utilities on unions of cells --------------------------------------------


def _breakpoints(cells: Sequence[Cell], dim: int) -> list[list[Fraction]]:
    out = []
    for j in range(dim):
        pts = set()
        for c in cells:
            pts.add(c.lo[j])
            if c.hi[j] != INF:
                pts.add(c.hi[j])
        out.append(sorted(pts))
    return out


def _elementary_boxes(cells: Sequence[Cell], breaks: list[list[Fraction]]) -> set[tuple[Fraction, ...]]:
    boxes = set()
    for c in cells:
        axes = [[b for b in br if c.lo[j] <= b < c.hi[j]] for j, br in enumerate(breaks)]
        boxes.update(itertools.product(*axes))
    return boxes


def same_point_set(a: Sequence[Cell], b: Sequence[Cell]) -> bool:
    """Exact set equality of two unions of half-open cells."""
    if not a or not b:
        return not a and not b
    dim = len(a[0].lo)
    breaks = _breakpoints(list(a) + list(b), dim)
    return _elementary_boxes(a, breaks) == _elementary_boxes(b, breaks)


def cells_pairwise_disjoint(cells: Sequence[Cell]) -> bool:
    for c1, c2 in itertools.combinations(cells, 2):
        if all(max(l1, l2) < min(h1, h2) for l1, h1, l2, h2 in zip(c1.lo, c1.hi, c2.lo, c2.hi)):
            return False
    return True


def merge_cells(cells: Sequence[Cell]) -> list[Cell]:
    """Coalesce cells that differ only in one adjacent coordinate interval."""
    current = sorted(set(cells), key=lambda c: (c.lo, c.hi))
    merged = True
    while merged:
        merged = False
        for i, j in itertools.combinations(range(len(current)), 2):
            c1, c2 = current[i], current[j]
            diff = [k for k in range(len(c1.lo)) if (c1.lo[k], c1.hi[k]) != (c2.lo[k], c2.hi[k])]
            if len(diff) != 1:
                continue
            k = diff[0]
            if c1.hi[k] == c2.lo[k] or c2.hi[k] == c1.lo[k]:
                lo = list(c1.lo)
                hi = list(c1.hi)
                lo[k] = min(c1.lo[k], c2.lo[k])
                hi[k] = max(c1.hi[k], c2.hi[k])
                current = [c for n, c in enumerate(current) if n not in (i, j)]
                current.append(Cell(tuple(lo), tuple(hi)))
                current.sort(key=lambda c: (c.lo, c.hi))
                merged = True
                break
    return current
