"""Reading and writing instance files.

An instance file is one JSON object::

    {"format": 1, "n": 1, "m": 1, "s": 1,
     "c": [0], "T": [[1]], "W": [[1]], "d": [-1], "q": [1],
     "points": [[0], [1]],
     "X": {"A": [[1], [-1]], "b": [1, 0]},
     "measure": {"kind": "box_uniform", "lo": [0], "hi": [1]},
     "risk": "expectation"}

Numbers are integers, JSON decimals, or strings such as ``"0.1"`` and ``"1/3"``.
JSON decimals are read from their text, so ``0.1`` means exactly ``1/10``.
``X``, ``measure`` and ``risk`` are optional.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .measures import SAMPLER_REGISTRY, BoxUniform, Discrete, Measure, Mixture, SamplerOnly
from .model import FollowerProblem, LeaderInstance, ValidationError
from .risk import RiskSpec

FORMAT_VERSION = 1
_TOP_LEVEL = {"format", "n", "m", "s", "c", "T", "W", "d", "q", "points", "X", "measure", "risk", "name"}


class InstanceFormatError(ValidationError):
    """The file is not valid JSON or does not follow the instance schema."""


@dataclass(frozen=True)
class Problem:
    """A leader instance with its optional noise law, risk functional and name."""

    instance: LeaderInstance
    measure: Measure | None = None
    risk: RiskSpec = field(default_factory=RiskSpec)
    name: str | None = None


def _require(data: dict, key: str):
    if key not in data:
        raise InstanceFormatError(f"missing field {key!r}")
    return data[key]


def parse_measure(data) -> Measure:
    if not isinstance(data, dict) or "kind" not in data:
        raise InstanceFormatError("measure must be an object with a 'kind' field")
    kind = data["kind"]
    if kind == "discrete":
        return Discrete(atoms=_require(data, "atoms"), weights=_require(data, "weights"))
    if kind == "box_uniform":
        return BoxUniform(lo=_require(data, "lo"), hi=_require(data, "hi"))
    if kind == "mixture":
        components = [parse_measure(c) for c in _require(data, "components")]
        return Mixture(components=components, weights=_require(data, "weights"))
    if kind == "sampler":
        name = _require(data, "name")
        if name not in SAMPLER_REGISTRY:
            raise InstanceFormatError(f"unknown sampler {name!r}; known: {sorted(SAMPLER_REGISTRY)}")
        return SAMPLER_REGISTRY[name]()
    raise InstanceFormatError(f"unknown measure kind {kind!r}")


def parse_risk(data) -> RiskSpec:
    if isinstance(data, str):
        return RiskSpec.parse(data)
    if isinstance(data, dict):
        return RiskSpec.from_dict(data)
    raise InstanceFormatError("risk must be a string such as 'cvar:0.95' or an object")


def problem_from_dict(data: dict) -> Problem:
    if not isinstance(data, dict):
        raise InstanceFormatError("instance file must hold a JSON object")
    unknown = set(data) - _TOP_LEVEL
    if unknown:
        raise InstanceFormatError(f"unknown fields {sorted(unknown)}")
    if _require(data, "format") != FORMAT_VERSION:
        raise InstanceFormatError(f"unsupported format {data['format']!r}, expected {FORMAT_VERSION}")
    follower = FollowerProblem(
        W=_require(data, "W"),
        d=_require(data, "d"),
        q=_require(data, "q"),
        points=_require(data, "points"),
    )
    X = data.get("X") or {}
    instance = LeaderInstance(
        c=_require(data, "c"), T=_require(data, "T"), A=X.get("A", []), b=X.get("b", []), follower=follower
    )
    for key, actual in (("n", instance.n), ("m", follower.m), ("s", follower.s)):
        if key in data and data[key] != actual:
            raise ValidationError(f"declared {key}={data[key]} but the data implies {key}={actual}")
    measure = parse_measure(data["measure"]) if data.get("measure") is not None else None
    if measure is not None and measure.dim != follower.s:
        raise ValidationError(f"measure has dimension {measure.dim}, expected s={follower.s}")
    risk = parse_risk(data["risk"]) if "risk" in data else RiskSpec()
    return Problem(instance=instance, measure=measure, risk=risk, name=data.get("name"))


def loads_problem(text: str) -> Problem:
    try:
        data = json.loads(text, parse_float=Fraction)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"malformed JSON: {exc}") from exc
    return problem_from_dict(data)


def load_problem(path) -> Problem:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InstanceFormatError(f"cannot read {path}: {exc}") from exc
    return loads_problem(text)


def load_instance(path) -> LeaderInstance:
    """Read and validate the leader instance stored at ``path``.

    Raises:
        InstanceFormatError: malformed JSON or schema violation.
        ValidationError: inconsistent dimensions, empty or non-integral points.
    """
    return load_problem(path).instance


# --- writing ---------------------------------------------------------------------


def number_to_json(value: Fraction) -> int | str:
    """Integers stay integers; terminating fractions become decimal strings, others ``"p/q"``."""
    value = Fraction(value)
    if value.denominator == 1:
        return value.numerator
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{value.numerator}/{value.denominator}"
    digits = max(twos, fives)
    scaled = abs(value.numerator) * 10**digits // value.denominator
    sign = "-" if value < 0 else ""
    whole, frac = divmod(scaled, 10**digits)
    return f"{sign}{whole}.{frac:0{digits}d}"


def _vector(v) -> list:
    return [number_to_json(x) for x in v]


def _matrix(M) -> list:
    return [_vector(row) for row in M]


def measure_to_dict(measure: Measure) -> dict:
    if isinstance(measure, Discrete):
        return {"kind": "discrete", "atoms": _matrix(measure.atoms), "weights": _vector(measure.weights)}
    if isinstance(measure, BoxUniform):
        return {"kind": "box_uniform", "lo": _vector(measure.lo), "hi": _vector(measure.hi)}
    if isinstance(measure, Mixture):
        return {
            "kind": "mixture",
            "components": [measure_to_dict(c) for c in measure.components],
            "weights": _vector(measure.weights),
        }
    if isinstance(measure, SamplerOnly) and measure.name in SAMPLER_REGISTRY:
        return {"kind": "sampler", "name": measure.name}
    raise ValidationError(f"sampler {getattr(measure, 'name', '?')!r} is not registered and cannot be written")


def problem_to_dict(problem: Problem) -> dict:
    inst = problem.instance
    fp = inst.follower
    data: dict = {"format": FORMAT_VERSION}
    if problem.name:
        data["name"] = problem.name
    data.update(
        {
            "n": inst.n,
            "m": fp.m,
            "s": fp.s,
            "c": _vector(inst.c),
            "T": _matrix(inst.T),
            "W": _matrix(fp.W),
            "d": _vector(fp.d),
            "q": _vector(fp.q),
            "points": [list(p) for p in fp.points],
            "X": {"A": _matrix(inst.A), "b": _vector(inst.b)},
        }
    )
    if problem.measure is not None:
        data["measure"] = measure_to_dict(problem.measure)
    data["risk"] = problem.risk.to_dict()
    return data


def dumps_problem(problem: Problem) -> str:
    """One top-level field per line, so instance files stay diff-friendly."""
    lines = [f" {json.dumps(key)}: {json.dumps(value)}" for key, value in problem_to_dict(problem).items()]
    return "{\n" + ",\n".join(lines) + "\n}\n"


def instance_hash(problem: Problem) -> str:
    """Short SHA-256 digest of the canonical serialization (name excluded)."""
    data = problem_to_dict(problem)
    data.pop("name", None)
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
