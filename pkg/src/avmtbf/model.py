"""Probability-tree failure-rate model.

The vehicle-level failure rate is the perception error rate of every error
type, weighted by the probability of being in a situation where that error
leads to a collision, and averaged over speed ranges and mission profiles::

    rate = sum_m p_m * sum_i p_im * sum_t (error rate)_tmi * (situation probability)_tmi

MTBF is the inverse. Any leaf can be refined into conditional children (for
example by the lead vehicle's speed); a child carries its own situation
probability and optionally scales the error rate of its subtree.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError, SchemaVersionError, UnsatisfiableRequirement, ValidationError
from .perception import ErrorRateTable, ErrorType
from .situations import SituationTable
from .units import SECONDS_PER_HOUR, SpeedRangePartition, format_inf, parse_inf

SCHEMA = "mtbf-tree"
SCHEMA_VERSION = 1
_PROB_TOL = 1e-9


def _check_prob(value: float, what: str) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise ValidationError(f"{what} must lie in [0, 1], got {value}")
    return value


@dataclass(frozen=True)
class Refinement:
    """Conditional split of a situation (or of a parent refinement)."""

    label: str
    probability: float
    situation_probability: float | None = None
    rate_multiplier: float = 1.0
    children: tuple["Refinement", ...] = ()

    def __post_init__(self):
        _check_prob(self.probability, f"refinement {self.label!r} probability")
        if self.rate_multiplier < 0:
            raise ValidationError(f"refinement {self.label!r}: rate_multiplier must be >= 0")
        object.__setattr__(self, "children", tuple(self.children))
        if self.children:
            if self.situation_probability is not None:
                raise ValidationError(f"refinement {self.label!r}: a split node has no situation probability of its own")
            _check_children(self.children, self.label)
        else:
            if self.situation_probability is None:
                raise ValidationError(f"refinement {self.label!r}: a terminal node needs a situation probability")
            _check_prob(self.situation_probability, f"refinement {self.label!r} situation probability")

    def factor(self) -> float:
        inner = self.situation_probability if not self.children else sum(c.factor() for c in self.children)
        return self.probability * self.rate_multiplier * inner

    def paths(self, prefix: tuple[str, ...] = ()) -> Iterable[tuple[tuple[str, ...], float]]:
        weight = self.probability * self.rate_multiplier
        if not self.children:
            yield prefix + (self.label,), weight * self.situation_probability
            return
        for c in self.children:
            for path, w in c.paths(prefix + (self.label,)):
                yield path, weight * w


def _check_children(children: Sequence[Refinement], owner: str) -> None:
    total = sum(c.probability for c in children)
    if total > 1.0 + _PROB_TOL:
        raise ValidationError(f"children of {owner!r} have probabilities summing to {total} > 1")


@dataclass(frozen=True)
class Leaf:
    """One (speed range, error type) branch of a mission profile.

    The error rate is the sum of a software and a hardware component.
    """

    range_index: int
    error_type: ErrorType
    software_rate: float
    situation_probability: float | None
    hardware_rate: float = 0.0
    refinements: tuple[Refinement, ...] = ()

    def __post_init__(self):
        if self.software_rate < 0 or self.hardware_rate < 0:
            raise ValidationError("error rates must be >= 0")
        object.__setattr__(self, "refinements", tuple(self.refinements))
        if self.refinements:
            _check_children(self.refinements, f"{self.error_type.value}@{self.range_index}")
            if self.situation_probability is not None:
                raise ValidationError("a refined leaf takes its situation probability from its children")
        else:
            if self.situation_probability is None:
                raise ValidationError("leaf needs a situation probability")
            _check_prob(self.situation_probability, "situation probability")

    @property
    def rate(self) -> float:
        return self.software_rate + self.hardware_rate

    @property
    def effective_situation_probability(self) -> float:
        if not self.refinements:
            return self.situation_probability
        return sum(r.factor() for r in self.refinements)


_TYPE_ORDER = {ErrorType.TYPE_I: 0, ErrorType.TYPE_II: 1}


@dataclass(frozen=True)
class MissionProfile:
    name: str
    probability: float
    partition: SpeedRangePartition
    speed_probability: tuple[float, ...]
    leaves: tuple[Leaf, ...]

    def __post_init__(self):
        _check_prob(self.probability, f"profile {self.name!r} probability")
        sp = tuple(float(p) for p in self.speed_probability)
        if len(sp) != len(self.partition):
            raise ValidationError(f"profile {self.name!r}: {len(sp)} speed probabilities for {len(self.partition)} ranges")
        for p in sp:
            _check_prob(p, f"profile {self.name!r} speed probability")
        if abs(sum(sp) - 1.0) > _PROB_TOL:
            raise ValidationError(f"profile {self.name!r}: speed probabilities sum to {sum(sp)}, not 1")
        object.__setattr__(self, "speed_probability", sp)
        seen = set()
        for leaf in self.leaves:
            if not (0 <= leaf.range_index < len(sp)):
                raise ValidationError(f"profile {self.name!r}: leaf range {leaf.range_index} outside partition")
            key = (leaf.range_index, leaf.error_type)
            if key in seen:
                raise ValidationError(f"profile {self.name!r}: duplicate leaf {key}")
            seen.add(key)
        ordered = tuple(sorted(self.leaves, key=lambda l: (l.range_index, _TYPE_ORDER[l.error_type])))
        object.__setattr__(self, "leaves", ordered)

    @classmethod
    def from_tables(
        cls,
        name: str,
        probability: float,
        situations: SituationTable,
        rates: ErrorRateTable | None = None,
        constant_rate: float | None = None,
        type1_situation_probability: Sequence[float] | None = None,
        hardware_rate: float = 0.0,
    ) -> "MissionProfile":
        """Profile from a situation table and either an error-rate table or one
        rate (errors/hour) used for every range."""
        if (rates is None) == (constant_rate is None):
            raise ValidationError("give exactly one of rates or constant_rate")
        part = situations.partition
        if rates is not None and rates.partition != part:
            raise ValidationError("situation table and error-rate table use different speed partitions")
        leaves = []
        for i in range(len(part)):
            r2 = constant_rate if rates is None else rates.rate(ErrorType.TYPE_II, i)
            leaves.append(Leaf(i, ErrorType.TYPE_II, r2, situations.total[i], hardware_rate))
            if type1_situation_probability is not None:
                r1 = constant_rate if rates is None else rates.rate(ErrorType.TYPE_I, i)
                leaves.append(Leaf(i, ErrorType.TYPE_I, r1, type1_situation_probability[i], hardware_rate))
        return cls(name, probability, part, situations.speed_probability, tuple(leaves))


@dataclass(frozen=True)
class FailureModelTree:
    profiles: tuple[MissionProfile, ...]

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        if not self.profiles:
            raise ValidationError("a tree needs at least one mission profile")
        total = sum(p.probability for p in self.profiles)
        if abs(total - 1.0) > _PROB_TOL:
            names = ", ".join(p.name for p in self.profiles)
            raise ValidationError(f"mission profile probabilities ({names}) sum to {total}, not 1")


@dataclass(frozen=True)
class Branch:
    path: tuple[str, ...]
    rate: float
    share: float


@dataclass(frozen=True)
class ModelResult:
    lambda_per_hour: float
    branches: tuple[Branch, ...] = field(default=())

    @property
    def mtbf_hours(self) -> float:
        return math.inf if self.lambda_per_hour == 0 else 1.0 / self.lambda_per_hour

    @property
    def mtbf_seconds(self) -> float:
        return self.mtbf_hours * SECONDS_PER_HOUR

    def to_dict(self) -> dict:
        return {
            "units": {"rate": "1/h", "mtbf": "h"},
            "lambda_per_hour": self.lambda_per_hour,
            "mtbf_hours": format_inf(self.mtbf_hours),
            "mtbf_seconds": format_inf(self.mtbf_seconds),
            "branches": [{"path": list(b.path), "rate_per_hour": b.rate, "share": b.share} for b in self.branches],
        }


def failure_rate_simple(terms: Iterable[tuple[float, float]]) -> float:
    """Sum of error rate × situation probability over error types."""
    total = 0.0
    for rate, p_s in terms:
        if rate < 0:
            raise ValidationError("error rates must be >= 0")
        _check_prob(p_s, "situation probability")
        total += rate * p_s
    return total


def failure_rate_extended(tree: FailureModelTree) -> ModelResult:
    """Evaluate the whole tree, with a contribution per terminal branch."""
    lam = 0.0
    raw: list[tuple[tuple[str, ...], float]] = []
    for prof in tree.profiles:
        labels = prof.partition.labels()
        by_range: dict[int, float] = {}
        for leaf in prof.leaves:
            by_range[leaf.range_index] = by_range.get(leaf.range_index, 0.0) + leaf.rate * leaf.effective_situation_probability
            base = (prof.name, labels[leaf.range_index], leaf.error_type.value)
            weight = prof.probability * prof.speed_probability[leaf.range_index] * leaf.rate
            if not leaf.refinements:
                raw.append((base, weight * leaf.situation_probability))
            else:
                for ref in leaf.refinements:
                    for path, w in ref.paths(base):
                        raw.append((path, weight * w))
        lam_m = sum(prof.speed_probability[i] * v for i, v in sorted(by_range.items()))
        lam += prof.probability * lam_m
    branches = tuple(Branch(p, r, r / lam if lam > 0 else 0.0) for p, r in raw)
    return ModelResult(lam, branches)


def kappa(speed_probability: Sequence[float], situation_probability: Sequence[float]) -> float:
    """Exposure-weighted situation probability: the share of perception errors
    that can turn into collisions when the error rate is speed independent."""
    if len(speed_probability) != len(situation_probability):
        raise ValidationError("speed and situation probabilities have different lengths")
    return sum(p * s for p, s in zip(speed_probability, situation_probability))


def required_error_rate(target_mtbf_hours: float, kappa_value: float) -> float:
    """Largest perception error rate (errors/hour) meeting ``target_mtbf_hours``."""
    if not (target_mtbf_hours > 0):
        raise ValidationError("target MTBF must be > 0")
    if kappa_value == 0:
        raise UnsatisfiableRequirement("kappa is 0: no situation exposes perception errors, any rate meets the target")
    if not (0 < kappa_value <= 1):
        raise ValidationError(f"kappa must lie in (0, 1], got {kappa_value}")
    return (1.0 / target_mtbf_hours) / kappa_value


def human_baseline_mtbf(accident_count: float, total_vehicle_km: float, average_speed_kmh: float) -> float:
    """Hours driven per severe accident; ``math.inf`` with no accidents."""
    if total_vehicle_km <= 0 or average_speed_kmh <= 0:
        raise ValidationError("vehicle kilometres and average speed must be > 0")
    if accident_count < 0:
        raise ValidationError("accident count must be >= 0")
    if accident_count == 0:
        return math.inf
    return (total_vehicle_km / average_speed_kmh) / accident_count


def constant_rate_tree(
    partition: SpeedRangePartition,
    speed_probability: Sequence[float],
    situation_probability: Sequence[float],
    rate: float,
    name: str = "highway",
) -> FailureModelTree:
    """Single-profile tree with one Type II leaf per range and a common rate."""
    leaves = tuple(Leaf(i, ErrorType.TYPE_II, rate, p) for i, p in enumerate(situation_probability))
    return FailureModelTree((MissionProfile(name, 1.0, partition, tuple(speed_probability), leaves),))


# --- serialisation -----------------------------------------------------------------

def _ref_to_dict(r: Refinement) -> dict:
    d = {"label": r.label, "probability": r.probability, "rate_multiplier": r.rate_multiplier}
    if r.children:
        d["children"] = [_ref_to_dict(c) for c in r.children]
    else:
        d["situation_probability"] = r.situation_probability
    return d


def _ref_from_dict(d: dict) -> Refinement:
    return Refinement(
        d["label"],
        d["probability"],
        d.get("situation_probability"),
        d.get("rate_multiplier", 1.0),
        tuple(_ref_from_dict(c) for c in d.get("children", ())),
    )


def serialize_tree(tree: FailureModelTree) -> dict:
    profiles = []
    for p in tree.profiles:
        leaves = []
        for leaf in p.leaves:
            d = {
                "range": leaf.range_index,
                "error_type": leaf.error_type.value,
                "software_rate_per_hour": leaf.software_rate,
                "hardware_rate_per_hour": leaf.hardware_rate,
            }
            if leaf.refinements:
                d["refinements"] = [_ref_to_dict(r) for r in leaf.refinements]
            else:
                d["situation_probability"] = leaf.situation_probability
            leaves.append(d)
        profiles.append(
            {
                "name": p.name,
                "probability": p.probability,
                "speed_ranges_kmh": list(p.partition.boundaries_kmh),
                "speed_probability": list(p.speed_probability),
                "leaves": leaves,
            }
        )
    return {"schema": SCHEMA, "version": SCHEMA_VERSION, "units": {"rate": "1/h", "speed": "km/h"}, "profiles": profiles}


def deserialize_tree(doc: dict) -> FailureModelTree:
    if doc.get("schema") != SCHEMA:
        raise ValidationError(f"not a {SCHEMA} document")
    if doc.get("version") != SCHEMA_VERSION:
        raise SchemaVersionError(f"unsupported {SCHEMA} version {doc.get('version')!r}; expected {SCHEMA_VERSION}")
    try:
        profiles = []
        for p in doc["profiles"]:
            leaves = tuple(
                Leaf(
                    int(l["range"]),
                    ErrorType(l["error_type"]),
                    float(parse_inf(l["software_rate_per_hour"])),
                    l.get("situation_probability"),
                    float(l.get("hardware_rate_per_hour", 0.0)),
                    tuple(_ref_from_dict(r) for r in l.get("refinements", ())),
                )
                for l in p["leaves"]
            )
            profiles.append(
                MissionProfile(
                    p["name"],
                    float(p["probability"]),
                    SpeedRangePartition.from_kmh(p["speed_ranges_kmh"]),
                    tuple(p["speed_probability"]),
                    leaves,
                )
            )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed {SCHEMA} document: {exc!r}") from None
    return FailureModelTree(tuple(profiles))


def save_tree(tree: FailureModelTree, path: str | Path) -> None:
    Path(path).write_text(json.dumps(serialize_tree(tree), indent=2) + "\n", encoding="utf-8")


def load_tree(path: str | Path) -> FailureModelTree:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None
    return deserialize_tree(doc)


def render_tree(tree: FailureModelTree, result: ModelResult | None = None) -> str:
    """Aligned text view of the tree with each branch's rate and share."""
    result = result or failure_rate_extended(tree)
    contrib = {b.path: b for b in result.branches}
    mtbf = result.mtbf_hours
    head = f"failure rate {result.lambda_per_hour:.6g} /h, MTBF "
    head += "inf" if math.isinf(mtbf) else f"{mtbf:.6g} h ({result.mtbf_seconds:.6g} s)"
    lines = [head]

    def leaf_line(path, text):
        b = contrib.get(path)
        tail = f"  -> {b.rate:.6g} /h ({100 * b.share:.1f}%)" if b else ""
        return text + tail

    def refs(nodes, base, indent):
        for k, r in enumerate(nodes):
            last = k == len(nodes) - 1
            stem = indent + ("`- " if last else "|- ")
            path = base + (r.label,)
            desc = f"{r.label}  q={r.probability:.4g}"
            if r.rate_multiplier != 1.0:
                desc += f"  rate x{r.rate_multiplier:.4g}"
            if r.children:
                lines.append(stem + desc)
                refs(r.children, path, indent + ("   " if last else "|  "))
            else:
                lines.append(leaf_line(path, stem + desc + f"  p_S={r.situation_probability:.4g}"))

    for pk, p in enumerate(tree.profiles):
        plast = pk == len(tree.profiles) - 1
        lines.append(("`- " if plast else "|- ") + f"{p.name}  p_m={p.probability:.4g}")
        pind = "   " if plast else "|  "
        labels = p.partition.labels()
        ranges = sorted({l.range_index for l in p.leaves})
        for rk, i in enumerate(ranges):
            rlast = rk == len(ranges) - 1
            lines.append(pind + ("`- " if rlast else "|- ") + f"{labels[i]}  p_i={p.speed_probability[i]:.4g}")
            rind = pind + ("   " if rlast else "|  ")
            leaves = [l for l in p.leaves if l.range_index == i]
            for lk, leaf in enumerate(leaves):
                llast = lk == len(leaves) - 1
                stem = rind + ("`- " if llast else "|- ")
                path = (p.name, labels[i], leaf.error_type.value)
                desc = f"{leaf.error_type.value}  rate={leaf.rate:.6g} /h"
                if leaf.refinements:
                    lines.append(stem + desc)
                    refs(leaf.refinements, path, rind + ("   " if llast else "|  "))
                else:
                    lines.append(leaf_line(path, stem + desc + f"  p_S={leaf.situation_probability:.4g}"))
    return "\n".join(lines) + "\n"
