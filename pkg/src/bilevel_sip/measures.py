"""Probability laws for the random right-hand side ``Z``.

Discrete and box-uniform laws (and finite mixtures of them) have exact region
probabilities as Fractions.  A black-box sampler can opt into an exact path by
declaring the CDFs of independent coordinates.

Sampling is counter based: the sample stream is cut into fixed-size chunks and
chunk ``k`` is drawn from a Philox generator keyed by ``(k, seed)``.  Chunks are
therefore independent of one another and of the number of workers.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import INF, ExtendedValue, ValidationError, to_rational, to_vector
from .regions import Cell

CHUNK_SIZE = 65536
WEIGHT_TOLERANCE = 1e-12

Probability = Fraction | float


class UnsupportedMeasureError(ValueError):
    """The requested exact computation has no closed form for this measure kind."""


def _weights(values: Sequence) -> tuple[Fraction, ...]:
    weights = tuple(to_rational(w) for w in values)
    if not weights:
        raise ValidationError("a measure needs at least one weight")
    if any(w <= 0 for w in weights):
        raise ValidationError("weights must be positive")
    if abs(float(sum(weights)) - 1.0) > WEIGHT_TOLERANCE:
        raise ValidationError(f"weights sum to {float(sum(weights))!r}, not 1")
    return weights


@dataclass(frozen=True)
class Discrete:
    """Finitely many atoms with positive weights (stored as Fractions)."""

    atoms: tuple[tuple[Fraction, ...], ...]
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(to_vector(a) for a in self.atoms))
        object.__setattr__(self, "weights", _weights(self.weights))
        if len(self.atoms) != len(self.weights):
            raise ValidationError("atoms and weights differ in length")
        if len({len(a) for a in self.atoms}) != 1:
            raise ValidationError("atoms have inconsistent dimensions")

    @property
    def dim(self) -> int:
        return len(self.atoms[0])


@dataclass(frozen=True)
class BoxUniform:
    """Uniform law on the box ``prod_j [lo_j, hi_j]``; density ``1 / volume``."""

    lo: tuple[Fraction, ...]
    hi: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", to_vector(self.lo))
        object.__setattr__(self, "hi", to_vector(self.hi))
        if not self.lo or len(self.lo) != len(self.hi):
            raise ValidationError("box bounds must be nonempty and of equal length")
        if any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ValidationError("box-uniform needs lo < hi in every coordinate")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> Fraction:
        return math.prod((b - a for a, b in zip(self.lo, self.hi)), start=Fraction(1))


@dataclass(frozen=True)
class Mixture:
    components: tuple[Measure, ...]
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "weights", _weights(self.weights))
        if len(self.components) != len(self.weights):
            raise ValidationError("components and weights differ in length")
        if len({c.dim for c in self.components}) != 1:
            raise ValidationError("mixture components have inconsistent dimensions")

    @property
    def dim(self) -> int:
        return self.components[0].dim


# generator(rng, count) -> float array of shape (count, dim)
SamplerFn = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class SamplerOnly:
    """A law known through a seeded sampler and declared support bounds.

    ``marginal_cdfs``, when given, are the CDFs of mutually independent
    coordinates of a law without atoms; they enable exact region probabilities.
    ``support_is_exact`` states that the declared box is the true support, which
    lets feasibility checks use it.  Neither claim can be verified here.
    """

    name: str
    generator: SamplerFn
    lo: tuple[ExtendedValue, ...]
    hi: tuple[ExtendedValue, ...]
    has_bounded_density: bool = False
    marginal_cdfs: tuple[Callable[[Fraction], float], ...] | None = None
    support_is_exact: bool = False

    @property
    def dim(self) -> int:
        return len(self.lo)


Measure = Discrete | BoxUniform | Mixture | SamplerOnly


def dirac(point: Sequence) -> Discrete:
    return Discrete(atoms=(point,), weights=(1,))


def translate(measure: Measure, offset: Sequence) -> Measure:
    """Law of ``Z + offset``."""
    offset = to_vector(offset)
    if isinstance(measure, Discrete):
        return Discrete(tuple(tuple(a + o for a, o in zip(atom, offset)) for atom in measure.atoms), measure.weights)
    if isinstance(measure, BoxUniform):
        return BoxUniform(
            tuple(a + o for a, o in zip(measure.lo, offset)), tuple(b + o for b, o in zip(measure.hi, offset))
        )
    if isinstance(measure, Mixture):
        return Mixture(tuple(translate(c, offset) for c in measure.components), measure.weights)
    raise UnsupportedMeasureError("sampler-only measures cannot be translated")


# --- built-in samplers ---------------------------------------------------------


def _sqrt_density_draw(rng: np.random.Generator, count: int) -> np.ndarray:
    return (rng.random(count) ** 2).reshape(-1, 1)


def _sqrt_density_cdf(z: Fraction) -> float:
    if z <= 0:
        return 0.0
    if z >= 1:
        return 1.0
    return math.sqrt(z)


def sqrt_density_unit() -> SamplerOnly:
    """Density ``1 / (2 sqrt(z))`` on ``(0, 1]``, drawn as ``U**2``.

    The density is unbounded near 0, so the bounded-density assumption fails.
    """
    return SamplerOnly(
        name="sqrt_density_unit",
        generator=_sqrt_density_draw,
        lo=(Fraction(0),),
        hi=(Fraction(1),),
        has_bounded_density=False,
        marginal_cdfs=(_sqrt_density_cdf,),
        support_is_exact=True,
    )


SAMPLER_REGISTRY: dict[str, Callable[[], SamplerOnly]] = {"sqrt_density_unit": sqrt_density_unit}


def has_bounded_density(measure: Measure) -> bool:
    if isinstance(measure, BoxUniform):
        return True
    if isinstance(measure, Discrete):
        return False
    if isinstance(measure, Mixture):
        return all(has_bounded_density(c) for c in measure.components)
    return measure.has_bounded_density


def supports_exact(measure: Measure) -> bool:
    """Whether :func:`region_probability` has a closed form for this measure."""
    if isinstance(measure, Mixture):
        return all(supports_exact(c) for c in measure.components)
    if isinstance(measure, SamplerOnly):
        return measure.marginal_cdfs is not None
    return True


def exact_capable(measure: Measure) -> bool:
    """Whether both the induced feasible set and the outcome law are exact for this measure."""
    if isinstance(measure, Mixture):
        return all(exact_capable(c) for c in measure.components)
    if isinstance(measure, SamplerOnly):
        return measure.marginal_cdfs is not None and measure.support_is_exact
    return True


# --- region probabilities --------------------------------------------------------


def _interval_length(lo: Fraction, hi: ExtendedValue, box_lo: Fraction, box_hi: Fraction) -> Fraction:
    upper = box_hi if hi == INF else min(hi, box_hi)
    return max(Fraction(0), upper - max(lo, box_lo))


def region_probability(measure: Measure, cells: Sequence[Cell], shift: Sequence) -> Probability:
    """``P(shift + Z in union of cells)`` for pairwise disjoint cells.

    The result is an exact Fraction for discrete and box-uniform laws and their
    mixtures; sampler laws with declared CDFs give a float.

    Raises:
        UnsupportedMeasureError: for a sampler law without declared CDFs.
    """
    shift = to_vector(shift)
    if isinstance(measure, Discrete):
        total = Fraction(0)
        for atom, w in zip(measure.atoms, measure.weights):
            t = [a + b for a, b in zip(shift, atom)]
            if any(c.contains(t) for c in cells):
                total += w
        return total
    if isinstance(measure, BoxUniform):
        volume = Fraction(0)
        for c in cells:
            volume += math.prod(
                (
                    _interval_length(lo - o, hi if hi == INF else hi - o, a, b)
                    for lo, hi, o, a, b in zip(c.lo, c.hi, shift, measure.lo, measure.hi)
                ),
                start=Fraction(1),
            )
        return volume / measure.volume
    if isinstance(measure, Mixture):
        return sum(w * region_probability(comp, cells, shift) for comp, w in zip(measure.components, measure.weights))
    if measure.marginal_cdfs is None:
        raise UnsupportedMeasureError(f"sampler {measure.name!r} has no closed-form region probabilities")
    total = 0.0
    for c in cells:
        p = 1.0
        for lo, hi, o, cdf in zip(c.lo, c.hi, shift, measure.marginal_cdfs):
            p *= (1.0 if hi == INF else cdf(hi - o)) - cdf(lo - o)
        total += p
    return total


# --- sampling ------------------------------------------------------------------


@dataclass(frozen=True)
class SampleBatch:
    """``count`` draws as rows of ``points``.

    Rows are float64 unless some discrete atom is not a binary float, in which
    case ``points`` is an object array of Fractions.
    """

    points: np.ndarray
    seed: int
    count: int


def chunk_generator(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(chunk << 64) | (seed % 2**64)))


def _float_exact(values) -> bool:
    return all(Fraction(float(v)) == v for v in values)


def atom_array(atoms: Sequence[Sequence[Fraction]]) -> np.ndarray:
    if all(_float_exact(a) for a in atoms):
        return np.array([[float(v) for v in a] for a in atoms], dtype=np.float64)
    return np.array([list(a) for a in atoms], dtype=object)


def _draw(measure: Measure, rng: np.random.Generator, count: int) -> np.ndarray:
    if isinstance(measure, Discrete):
        atoms = atom_array(measure.atoms)
        cumulative = np.cumsum([float(w) for w in measure.weights])
        idx = np.searchsorted(cumulative, rng.random(count), side="right")
        return atoms[np.minimum(idx, len(measure.atoms) - 1)]
    if isinstance(measure, BoxUniform):
        lo = np.array([float(v) for v in measure.lo])
        hi = np.array([float(v) for v in measure.hi])
        return lo + (hi - lo) * rng.random((count, measure.dim))
    if isinstance(measure, Mixture):
        cumulative = np.cumsum([float(w) for w in measure.weights])
        which = np.minimum(np.searchsorted(cumulative, rng.random(count), side="right"), len(measure.components) - 1)
        parts = [(np.flatnonzero(which == k), comp) for k, comp in enumerate(measure.components)]
        drawn = [(rows, _draw(comp, rng, len(rows))) for rows, comp in parts]
        dtype = object if any(d.dtype == object for _, d in drawn) else np.float64
        out = np.empty((count, measure.dim), dtype=dtype)
        for rows, values in drawn:
            if dtype == object and values.dtype != object:
                values = np.vectorize(Fraction, otypes=[object])(values)
            out[rows] = values
        return out
    points = np.asarray(measure.generator(rng, count), dtype=np.float64)
    return points.reshape(count, measure.dim)


def sample(measure: Measure, count: int, seed: int = 0, workers: int = 1) -> SampleBatch:
    """``count`` i.i.d. draws; identical for equal ``(measure, count, seed)``.

    ``workers`` only affects speed: chunks are keyed by their position, not by
    the thread that draws them.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    bounds = [(start, min(CHUNK_SIZE, count - start)) for start in range(0, count, CHUNK_SIZE)]

    def draw_chunk(k: int) -> np.ndarray:
        return _draw(measure, chunk_generator(seed, k), bounds[k][1])

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(draw_chunk, range(len(bounds))))
    else:
        chunks = [draw_chunk(k) for k in range(len(bounds))]
    if any(c.dtype == object for c in chunks) and not all(c.dtype == object for c in chunks):
        chunks = [c if c.dtype == object else np.vectorize(Fraction, otypes=[object])(c) for c in chunks]
    return SampleBatch(points=np.concatenate(chunks), seed=seed, count=count)


# --- support -----------------------------------------------------------------------


@dataclass(frozen=True)
class SupportBounds:
    lo: tuple[ExtendedValue, ...]
    hi: tuple[ExtendedValue, ...]
    bounded: bool
    diameter: float


def support_bounds(measure: Measure) -> SupportBounds:
    """Componentwise bounding box of the support and its Euclidean diameter."""
    if isinstance(measure, Discrete):
        lo = tuple(min(col) for col in zip(*measure.atoms))
        hi = tuple(max(col) for col in zip(*measure.atoms))
    elif isinstance(measure, (BoxUniform, SamplerOnly)):
        lo, hi = measure.lo, measure.hi
    else:
        parts = [support_bounds(c) for c in measure.components]
        lo = tuple(min(col) for col in zip(*(p.lo for p in parts)))
        hi = tuple(max(col) for col in zip(*(p.hi for p in parts)))
    bounded = all(math.isfinite(v) for v in lo + hi)
    diameter = math.sqrt(sum(float(b - a) ** 2 for a, b in zip(lo, hi))) if bounded else INF
    return SupportBounds(lo=lo, hi=hi, bounded=bounded, diameter=diameter)
