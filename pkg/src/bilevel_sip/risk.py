"""Law of the leader's outcome and risk functionals evaluated on it.

The outcome ``phi(T x + Z)`` takes one value per region of the partition, so its
law is finite.  The exact path weighs region values by region probabilities;
the Monte Carlo path reads the follower's response for sampled noise.
"""

from __future__ import annotations

import itertools
import math
from bisect import bisect_left, bisect_right
from collections import defaultdict
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .feasibility import fz_contains
from .lower_level import choice_indices
from .measures import (
    CHUNK_SIZE,
    Discrete,
    Measure,
    Mixture,
    Probability,
    SamplerOnly,
    atom_array,
    region_probability,
    sample,
)
from .model import LeaderInstance, ValidationError, to_vector
from .regions import RegionPartition, region_ids

PROB_TOLERANCE = 1e-12
# cumulative probabilities are compared to alpha with this slack so that float
# rounding in the running sum never skips an atom
QUANTILE_SLACK = 1e-12

RISK_KINDS = ("expectation", "var", "cvar", "excess_probability", "expected_excess", "semideviation")
_ALIASES = {
    "mean": "expectation",
    "ep": "excess_probability",
    "ee": "expected_excess",
    "mean_upper_semideviation": "semideviation",
}


class InfeasibleDecisionError(ValueError):
    """Some noise value drives ``T x + z`` outside ``dom Phi``."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


@dataclass(frozen=True)
class RiskSpec:
    """A risk functional and how the leader's deterministic cost enters it.

    ``compose="outside"`` evaluates ``c^T x + rho[phi(Tx+Z)]``; ``"inside"``
    evaluates ``rho[c^T x + phi(Tx+Z)]``.  The two agree for translation
    equivariant kinds.
    """

    kind: str = "expectation"
    alpha: float = 0.95
    eta: float = 0.0
    order: int = 1
    coefficient: float = 1.0
    compose: str = "outside"

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in RISK_KINDS:
            raise ValidationError(f"unknown risk kind {self.kind!r}")
        if kind in ("var", "cvar") and not 0 < self.alpha < 1:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if int(self.order) != self.order or self.order < 1:
            raise ValidationError(f"order must be a positive integer, got {self.order}")
        if not 0 <= self.coefficient <= 1:
            raise ValidationError(f"coefficient must lie in [0, 1], got {self.coefficient}")
        if self.compose not in ("inside", "outside"):
            raise ValidationError(f"compose must be 'inside' or 'outside', got {self.compose!r}")
        if not math.isfinite(self.eta):
            raise ValidationError("eta must be finite")

    @classmethod
    def parse(cls, text: str, compose: str = "outside") -> RiskSpec:
        """Parse ``kind[:param[:order]]``, e.g. ``"cvar:0.95"`` or ``"expected_excess:1:2"``.

        The first parameter is alpha for var/cvar, eta for the excess kinds and
        the coefficient for the semideviation.
        """
        kind, *params = text.strip().split(":")
        kind = _ALIASES.get(kind, kind)
        try:
            values = [float(v) for v in params]
        except ValueError as exc:
            raise ValidationError(f"bad risk parameters in {text!r}") from exc
        fields: dict = {"kind": kind, "compose": compose}
        if kind == "expectation":
            expected = 0
        elif kind in ("var", "cvar"):
            expected = 1
            if values:
                fields["alpha"] = values[0]
        else:
            expected = 2
            name = "coefficient" if kind == "semideviation" else "eta"
            if values:
                fields[name] = values[0]
            if len(values) > 1:
                fields["order"] = int(values[1])
        if len(values) > expected:
            raise ValidationError(f"too many parameters in risk spec {text!r}")
        return cls(**fields)

    @classmethod
    def from_dict(cls, data: dict) -> RiskSpec:
        known = {"kind", "alpha", "eta", "order", "coefficient", "compose"}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown risk fields {sorted(unknown)}")
        fields = {k: (v if k in ("kind", "compose") else float(v)) for k, v in data.items()}
        if "order" in fields:
            fields["order"] = int(fields["order"])
        return cls(**fields)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "alpha": self.alpha,
            "eta": self.eta,
            "order": self.order,
            "coefficient": self.coefficient,
            "compose": self.compose,
        }

    def __str__(self) -> str:
        if self.kind in ("var", "cvar"):
            return f"{self.kind}:{self.alpha}"
        if self.kind in ("excess_probability", "expected_excess"):
            return f"{self.kind}:{self.eta}:{self.order}"
        if self.kind == "semideviation":
            return f"{self.kind}:{self.coefficient}:{self.order}"
        return self.kind


@dataclass(frozen=True)
class OutcomeDistribution:
    """Finite law with strictly increasing ``values`` and positive ``probs``.

    ``source`` is ``"exact"`` or ``"monte_carlo"``; Monte Carlo laws record the
    sample ``count`` and ``seed``.
    """

    values: tuple[float, ...]
    probs: tuple[float, ...]
    source: str = "exact"
    count: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if not self.values:
            raise ValueError("empty outcome distribution")
        if len(self.values) != len(self.probs):
            raise ValueError("values and probs differ in length")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("values must be strictly increasing")
        if any(p <= 0 for p in self.probs):
            raise ValueError("probabilities must be positive")
        if abs(math.fsum(self.probs) - 1.0) > PROB_TOLERANCE:
            raise ValueError(f"probabilities sum to {math.fsum(self.probs)!r}")

    @classmethod
    def from_masses(cls, masses: dict, source: str = "exact", **meta) -> OutcomeDistribution:
        """Build from ``{value: mass}``; keys are merged exactly before conversion."""
        merged: dict = defaultdict(int)
        for value, mass in masses.items():
            merged[value] += mass
        items = sorted((v, p) for v, p in merged.items() if p > 0)
        return cls(
            values=tuple(float(v) for v, _ in items),
            probs=tuple(float(p) for _, p in items),
            source=source,
            **meta,
        )

    def shift(self, m: float) -> OutcomeDistribution:
        return replace(self, values=tuple(v + m for v in self.values))

    def as_dict(self) -> dict[float, float]:
        return dict(zip(self.values, self.probs))


def _upper_moment(values: np.ndarray, probs: np.ndarray, level: float, order: int) -> float:
    excess = np.maximum(values - level, 0.0)
    return float(np.dot(probs, excess**order))


def value_at_risk(dist: OutcomeDistribution, alpha: float) -> float:
    """Lower alpha-quantile: the smallest value whose cumulative mass reaches alpha."""
    cumulative = list(itertools.accumulate(dist.probs))
    k = bisect_left(cumulative, alpha - QUANTILE_SLACK)
    return dist.values[min(k, len(dist.values) - 1)]


def evaluate_risk(dist: OutcomeDistribution, spec: RiskSpec) -> float:
    """Evaluate ``spec`` on a finite law (the leader cost is not added here)."""
    values = np.asarray(dist.values, dtype=np.float64)
    probs = np.asarray(dist.probs, dtype=np.float64)
    kind = spec.kind
    if kind == "expectation":
        return float(np.dot(probs, values))
    if kind == "var":
        return value_at_risk(dist, spec.alpha)
    if kind == "cvar":
        eta = value_at_risk(dist, spec.alpha)
        return eta + _upper_moment(values, probs, eta, 1) / (1.0 - spec.alpha)
    if kind == "excess_probability":
        return float(probs[values > spec.eta].sum())
    if kind == "expected_excess":
        return _upper_moment(values, probs, spec.eta, spec.order)
    mean = float(np.dot(probs, values))
    return mean + spec.coefficient * _upper_moment(values, probs, mean, spec.order) ** (1.0 / spec.order)


# --- exact path -------------------------------------------------------------------


def _located_masses(partition: RegionPartition, measure: Discrete, shift) -> dict[int, Fraction]:
    ids = region_ids(partition, atom_array(measure.atoms), shift)
    masses: dict[int, Fraction] = defaultdict(Fraction)
    for rid, w in zip(ids.tolist(), measure.weights):
        masses[rid] += w
    return masses


def _box_masses(partition: RegionPartition, measure: Measure, lo, hi, shift) -> dict[int, Probability]:
    """Mass of every grid cell meeting the box ``[lo, hi]``, summed by owner."""
    grid = partition.grid
    ranges = []
    for th, a, b in zip(grid.thresholds, lo, hi):
        start = max(bisect_right(th, a) - 1, 0)
        ranges.append(range(start, bisect_right(th, b)))
    masses: dict[int, Probability] = defaultdict(int)
    for index in itertools.product(*ranges):
        mass = region_probability(measure, [grid.cell(index)], shift)
        if mass:
            masses[int(partition.owner[index])] += mass
    return masses


def region_masses(instance: LeaderInstance, partition: RegionPartition, measure: Measure, x) -> dict[int, Probability]:
    """``P(T x + Z in region k)`` for every region id with positive mass.

    Id ``-1`` collects mass found outside ``dom Phi``; it is complete only for
    discrete laws, so callers check the induced feasible set first.
    """
    shift = instance.shift(x)
    if isinstance(measure, Discrete):
        masses = _located_masses(partition, measure, shift)
    elif isinstance(measure, Mixture):
        masses = defaultdict(int)
        for comp, w in zip(measure.components, measure.weights):
            for rid, mass in region_masses(instance, partition, comp, x).items():
                masses[rid] += w * mass
    else:
        lo = [a + b for a, b in zip(shift, measure.lo)]
        hi = [a + b for a, b in zip(shift, measure.hi)]
        if isinstance(measure, SamplerOnly) and measure.marginal_cdfs is None:
            region_probability(measure, [], shift)  # raises the unsupported-kind error
        masses = _box_masses(partition, measure, lo, hi, shift)
    return {rid: m for rid, m in masses.items() if m > 0}


def _check_feasible(instance, partition, measure, x) -> None:
    verdict = fz_contains(instance, partition, measure, x)
    if not verdict.in_FZ:
        raise InfeasibleDecisionError(
            f"x = {_fmt(x)} is outside the induced feasible set; T x + z = {_fmt(verdict.witness)} has no feasible follower point",
            verdict.witness,
        )


def _fmt(v) -> str:
    return "(" + ", ".join(str(c) for c in v) + ")"


def outcome_distribution(
    instance: LeaderInstance,
    partition: RegionPartition,
    measure: Measure,
    x: Sequence,
    include_leader_cost: bool = False,
) -> OutcomeDistribution:
    """Exact law of ``phi(T x + Z)`` (plus ``c^T x`` if ``include_leader_cost``).

    Raises:
        InfeasibleDecisionError: if ``x`` is outside the induced feasible set.
        UnsupportedMeasureError: if the measure has no exact region probabilities.
    """
    x = to_vector(x)
    _check_feasible(instance, partition, measure, x)
    offset = instance.leader_cost(x) if include_leader_cost else Fraction(0)
    masses = region_masses(instance, partition, measure, x)
    masses.pop(-1, None)
    by_value: dict[Fraction, Probability] = defaultdict(int)
    for rid, mass in masses.items():
        by_value[partition.regions[rid].kappa_phi + offset] += mass
    return OutcomeDistribution.from_masses(by_value)


def _compose(instance: LeaderInstance, x, spec: RiskSpec, law) -> float:
    if spec.compose == "inside":
        return evaluate_risk(law(True), spec)
    return float(instance.leader_cost(x)) + evaluate_risk(law(False), spec)


def q_rho(instance: LeaderInstance, partition: RegionPartition, measure: Measure, x: Sequence, spec: RiskSpec) -> float:
    """Exact risk-averse leader objective at ``x``."""
    x = to_vector(x)
    return _compose(instance, x, spec, lambda inside: outcome_distribution(instance, partition, measure, x, inside))


# --- Monte Carlo path -----------------------------------------------------------


def sampled_choices(
    instance: LeaderInstance, measure: Measure, x: Sequence, count: int, seed: int = 0, workers: int = 1
):
    """Sampled noise and the follower point chosen for each draw (``-1`` if none)."""
    fp = instance.follower
    shift = instance.shift(x)
    z = sample(measure, count, seed, workers=workers).points
    starts = range(0, count, CHUNK_SIZE)

    def evaluate(start: int) -> np.ndarray:
        return choice_indices(fp, z[start : start + CHUNK_SIZE], shift)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(evaluate, starts))
    else:
        parts = [evaluate(s) for s in starts]
    return z, np.concatenate(parts)


def mc_outcome_distribution(
    instance: LeaderInstance,
    measure: Measure,
    x: Sequence,
    count: int,
    seed: int = 0,
    include_leader_cost: bool = False,
    workers: int = 1,
) -> OutcomeDistribution:
    """Empirical law of the outcome over ``count`` seeded draws."""
    law, _ = _mc_law(instance, measure, to_vector(x), count, seed, include_leader_cost, workers)
    return law


def _mc_law(instance, measure, x, count, seed, include_leader_cost, workers):
    if count < 1:
        raise ValueError("count must be positive")
    z, choices = sampled_choices(instance, measure, x, count, seed, workers)
    bad = np.flatnonzero(choices < 0)
    if bad.size:
        witness = tuple(z[bad[0]])
        raise InfeasibleDecisionError(
            f"sample z = {_fmt(witness)} leaves T x + z outside dom Phi at x = {_fmt(x)}",
            witness,
        )
    offset = instance.leader_cost(x) if include_leader_cost else Fraction(0)
    ids, counts = np.unique(choices, return_counts=True)
    q = instance.follower.q_values
    masses = {}
    for i, k in zip(ids.tolist(), counts.tolist()):
        value = q[i] + offset
        masses[value] = masses.get(value, 0) + Fraction(k, count)
    law = OutcomeDistribution.from_masses(masses, source="monte_carlo", count=count, seed=seed)
    outcomes = np.asarray([float(q[i] + offset) for i in range(instance.follower.N)])[choices]
    return law, outcomes


def q_rho_mc(
    instance: LeaderInstance,
    measure: Measure,
    x: Sequence,
    spec: RiskSpec,
    count: int,
    seed: int = 0,
    workers: int = 1,
) -> tuple[float, float]:
    """Monte Carlo estimate of the risk-averse objective and its standard error.

    The standard error (sample standard deviation over ``sqrt(count)``) is given
    for the expectation only; it is 0 for the other kinds.

    Raises:
        InfeasibleDecisionError: if some draw has no feasible follower point.
    """
    if count < 100:
        raise ValueError("count must be at least 100")
    x = to_vector(x)
    inside = spec.compose == "inside"
    law, outcomes = _mc_law(instance, measure, x, count, seed, inside, workers)
    estimate = evaluate_risk(law, spec)
    if not inside:
        estimate += float(instance.leader_cost(x))
    std_error = float(np.std(outcomes, ddof=1) / math.sqrt(count)) if spec.kind == "expectation" else 0.0
    return estimate, std_error
