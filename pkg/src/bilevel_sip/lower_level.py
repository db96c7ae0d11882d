"""Direct evaluation of the follower's feasible set, optimal set and value functions.

Everything here is computed by scanning the explicit follower point list, with
no reference to the region partition, so it serves as the independent oracle for
:mod:`bilevel_sip.regions`.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import INF, ExtendedValue, FollowerProblem, ValidationError, to_vector

_INT64_SAFE = 2**62


@dataclass(frozen=True)
class ArgminReport:
    """Follower response at a single right-hand side ``t``.

    ``feasible`` and ``argmin`` hold point indices; ``psi`` and ``phi`` are
    ``math.inf`` when nothing is feasible.
    """

    feasible: tuple[int, ...]
    psi: ExtendedValue
    argmin: tuple[int, ...]
    phi: ExtendedValue
    optimistic_choice: int | None


def _cached(fp: FollowerProblem, key: str, build):
    # frozen dataclass: stash derived arrays in the instance dict directly
    store = fp.__dict__
    if key not in store:
        store[key] = build()
    return store[key]


def _response_order(fp: FollowerProblem, pessimistic: bool) -> np.ndarray:
    return _cached(fp, f"_order_{pessimistic}", lambda: _build_order(fp, pessimistic))


def _build_order(fp: FollowerProblem, pessimistic: bool) -> np.ndarray:
    """Rank of each point under the key (d-value, +/- q-value, index).

    The feasible point with the smallest rank is the follower's reported choice:
    d-optimal first, then best (or worst) for the leader, then lowest index.
    """
    sign = -1 if pessimistic else 1
    keys = sorted(range(fp.N), key=lambda i: (fp.d_values[i], sign * fp.q_values[i], i))
    order = np.empty(fp.N, dtype=np.int64)
    order[keys] = np.arange(fp.N)
    return order


def _d_ranks(fp: FollowerProblem) -> np.ndarray:
    return _cached(fp, "_d_ranks", lambda: _build_d_ranks(fp))


def _build_d_ranks(fp: FollowerProblem) -> np.ndarray:
    distinct = sorted(set(fp.d_values))
    pos = {v: k for k, v in enumerate(distinct)}
    return np.array([pos[v] for v in fp.d_values], dtype=np.int64)


def _image_arrays(fp: FollowerProblem):
    return _cached(fp, "_image_arrays", lambda: _build_image_arrays(fp))


def _build_image_arrays(fp: FollowerProblem):
    num = np.array([[v.numerator for v in img] for img in fp.images], dtype=object)
    den = np.array([[v.denominator for v in img] for img in fp.images], dtype=object)
    bound = max(max(abs(int(v)) for v in num.flat), max(int(v) for v in den.flat))
    if bound < 2**31:
        return num.astype(np.int64), den.astype(np.int64), bound
    return num, den, bound


def feasible_mask(fp: FollowerProblem, t: Sequence[Fraction]) -> np.ndarray:
    """Boolean mask of points with ``W y <= t`` (exact cross-multiplication)."""
    num, den, bound = _image_arrays(fp)
    a = [v.numerator for v in t]
    b = [v.denominator for v in t]
    scale = max(max(abs(v) for v in a), max(b))
    if num.dtype == np.int64 and bound * scale < _INT64_SAFE:
        a_arr = np.array(a, dtype=np.int64)
        b_arr = np.array(b, dtype=np.int64)
    else:
        num, den = num.astype(object), den.astype(object)
        a_arr = np.array(a, dtype=object)
        b_arr = np.array(b, dtype=object)
    return np.all(num * b_arr <= a_arr * den, axis=1)


def evaluate_at(fp: FollowerProblem, t: Sequence, pessimistic: bool = False) -> ArgminReport:
    """Feasible set, optimal set, and both value functions at ``t``.

    With ``pessimistic=True`` the leader's cost is maximized over the follower's
    optimal set instead of minimized.

    Example:
        >>> fp = FollowerProblem(W=[[1]], d=[-1], q=[1], points=[[0], [1]])
        >>> evaluate_at(fp, [Fraction(1, 2)]).phi
        Fraction(0, 1)
    """
    t = to_vector(t)
    if len(t) != fp.s:
        raise ValidationError(f"parameter has dimension {len(t)}, expected s={fp.s}")
    mask = feasible_mask(fp, t)
    feasible = tuple(int(i) for i in np.flatnonzero(mask))
    if not feasible:
        return ArgminReport(feasible=(), psi=INF, argmin=(), phi=INF, optimistic_choice=None)
    order = _response_order(fp, pessimistic)
    choice = feasible[int(np.argmin(order[list(feasible)]))]
    d_rank = _d_ranks(fp)
    argmin = tuple(i for i in feasible if d_rank[i] == d_rank[choice])
    return ArgminReport(
        feasible=feasible,
        psi=fp.d_values[choice],
        argmin=argmin,
        phi=fp.q_values[choice],
        optimistic_choice=choice,
    )


def phi(fp: FollowerProblem, t: Sequence) -> ExtendedValue:
    return evaluate_at(fp, t).phi


def psi(fp: FollowerProblem, t: Sequence) -> ExtendedValue:
    return evaluate_at(fp, t).psi


def value_curve(fp: FollowerProblem, start: Sequence, end: Sequence, samples: int):
    """``(lambda, t, psi(t), phi(t))`` at equally spaced points of a segment."""
    if samples < 2:
        raise ValueError("samples must be at least 2")
    start, end = to_vector(start), to_vector(end)
    if len(start) != fp.s or len(end) != fp.s:
        raise ValidationError(f"segment endpoints must have dimension s={fp.s}")
    rows = []
    for k in range(samples):
        lam = Fraction(k, samples - 1)
        t = tuple(a + lam * (b - a) for a, b in zip(start, end))
        rep = evaluate_at(fp, t)
        rows.append((lam, t, rep.psi, rep.phi))
    return rows


def phi_curve(
    fp: FollowerProblem, start: Sequence, end: Sequence, samples: int
) -> list[tuple[Fraction, ExtendedValue]]:
    """``phi`` along the segment from ``start`` to ``end``, endpoints included.

    The scalar parameter is the fraction ``lambda`` of the way from start to end.
    """
    return [(lam, ph) for lam, _, _, ph in value_curve(fp, start, end, samples)]


def float_ceiling(value: Fraction) -> float:
    """Smallest float ``f`` with ``f >= value``.

    For any float ``z``: ``z >= value`` exactly iff ``z >= float_ceiling(value)``.
    """
    f = float(value)
    if Fraction(f) < value:
        f = math.nextafter(f, math.inf)
    return f


def _exceeds(z: np.ndarray, bound: Fraction) -> np.ndarray:
    """Exact ``z >= bound`` for a float or object (Fraction) column."""
    if z.dtype == object:
        return np.fromiter((v >= bound for v in z), dtype=bool, count=len(z))
    return z >= float_ceiling(bound)


def choice_indices(
    fp: FollowerProblem,
    z: np.ndarray,
    offset: Sequence[Fraction],
    pessimistic: bool = False,
) -> np.ndarray:
    """Reported follower choice at ``t = offset + z`` for each row of ``z``.

    Returns ``-1`` where ``Phi(t)`` is empty.  The comparison ``W y <= offset + z``
    is rewritten as ``z >= W y - offset`` and decided exactly for float rows.
    """
    z = np.asarray(z)
    if z.ndim == 1:
        z = z.reshape(-1, fp.s)
    if z.shape[1] != fp.s:
        raise ValidationError(f"samples have dimension {z.shape[1]}, expected s={fp.s}")
    offset = to_vector(offset)
    order = _response_order(fp, pessimistic)
    K = z.shape[0]
    feasible = np.ones((K, fp.N), dtype=bool)
    for j in range(fp.s):
        column = z[:, j]
        for i, img in enumerate(fp.images):
            feasible[:, i] &= _exceeds(column, img[j] - offset[j])
    masked = np.where(feasible, order[None, :], fp.N)
    choice = np.argmin(masked, axis=1)
    choice[~feasible.any(axis=1)] = -1
    return choice
