"""Run configuration shared by every CLI command.

One JSON document with a schema tag and version. Speeds are km/h here and
converted to m/s only when the kinematics objects are built. Unknown keys are
rejected at every level so typos cannot silently fall back to defaults.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, SchemaVersionError, ValidationError
from .kinematics import BrakingProfile, RssParams, SeverityThresholds
from .perception import Counting, Tolerance
from .units import SpeedRangePartition, kmh_to_ms

SCHEMA = "avmtbf-config"
SCHEMA_VERSION = 1


@dataclass
class RssConfig:
    response_time: float = 0.5  # s
    max_accel: float = 2.0  # m/s²
    min_brake: float = 4.0  # m/s²
    max_brake_front: float = 8.0  # m/s²


@dataclass
class BrakingConfig:
    reaction_time: float = 0.5  # s
    deceleration: float = 8.0  # m/s²


@dataclass
class SeverityConfig:
    s0_max_kmh: float = 10.0
    s1_max_kmh: float = 30.0  # above this Δv a collision counts as severe
    s2_max_kmh: float = 50.0


@dataclass
class PathsConfig:
    tracks: str | None = None
    perception_log: str | None = None
    situations: str | None = None
    rates: str | None = None
    tree: str | None = None


@dataclass
class RunConfig:
    speed_ranges_kmh: list[float] = field(default_factory=lambda: [80.0, 100.0, 130.0, 180.0])
    ttc_limit: float = 5.0  # s
    assumed_rear_accel: float = 2.0  # m/s², used for TTC
    mode_threshold: float = 0.1  # m/s², |a| below this is constant speed
    counting: str = "frames"
    distance_tolerance: float = 0.1  # relative
    velocity_tolerance: float = 0.1  # relative
    road_max_speed_kmh: float | None = None  # overrides the perception log's value
    velocity_independent: bool = False
    rss: RssConfig = field(default_factory=RssConfig)
    braking: BrakingConfig = field(default_factory=BrakingConfig)  # ego / rear vehicle
    lead_braking: BrakingConfig = field(default_factory=BrakingConfig)  # false-alarm lead vehicle
    severity: SeverityConfig = field(default_factory=SeverityConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def validate(self) -> "RunConfig":
        # building every derived object runs its own checks
        self.partition()
        self.rss_params()
        self.braking_profile()
        self.lead_profile()
        self.thresholds()
        self.counting_mode()
        if self.ttc_limit <= 0:
            raise ValidationError("ttc_limit must be > 0")
        if self.assumed_rear_accel < 0 or self.mode_threshold < 0:
            raise ValidationError("assumed_rear_accel and mode_threshold must be >= 0")
        if self.distance_tolerance < 0 or self.velocity_tolerance < 0:
            raise ValidationError("tolerances must be >= 0")
        if self.road_max_speed_kmh is not None and self.road_max_speed_kmh <= 0:
            raise ValidationError("road_max_speed_kmh must be > 0")
        return self

    def partition(self) -> SpeedRangePartition:
        return SpeedRangePartition.from_kmh(self.speed_ranges_kmh)

    def rss_params(self) -> RssParams:
        return RssParams(**dataclasses.asdict(self.rss))

    def braking_profile(self) -> BrakingProfile:
        return BrakingProfile(**dataclasses.asdict(self.braking))

    def lead_profile(self) -> BrakingProfile:
        return BrakingProfile(**dataclasses.asdict(self.lead_braking))

    def thresholds(self) -> SeverityThresholds:
        return SeverityThresholds(**dataclasses.asdict(self.severity))

    def tolerance(self) -> Tolerance:
        return Tolerance(self.distance_tolerance, self.velocity_tolerance)

    def counting_mode(self) -> Counting:
        try:
            return Counting(self.counting)
        except ValueError:
            raise ValidationError(f"counting must be 'frames' or 'events', got {self.counting!r}") from None

    def road_max_speed(self) -> float | None:
        return None if self.road_max_speed_kmh is None else kmh_to_ms(self.road_max_speed_kmh)

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "version": SCHEMA_VERSION, **dataclasses.asdict(self)}

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        if doc.pop("schema", SCHEMA) != SCHEMA:
            raise ValidationError(f"not an {SCHEMA} document")
        version = doc.pop("version", None)
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(f"unsupported config version {version!r}; expected {SCHEMA_VERSION}")
        return _build(cls, doc, "config").validate()


def _build(kind, doc, where: str):
    if not isinstance(doc, dict):
        raise ValidationError(f"{where} must be an object")
    known = {f.name: f for f in dataclasses.fields(kind)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ValidationError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in doc.items():
        default = getattr(kind(), name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        else:
            kwargs[name] = _coerce(value, default, f"{where}.{name}")
    return kind(**kwargs)


def _coerce(value, default, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValidationError(f"{where} must be true or false")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ValidationError(f"{where} must be a list of numbers")
        return [float(v) for v in value]
    if isinstance(default, float) or (default is None and where.endswith("_kmh")):
        if value is None and default is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{where} must be a number")
        return float(value)
    if value is not None and not isinstance(value, str):
        raise ValidationError(f"{where} must be a string")
    return value


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"{path}: no such config file") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from None
    return RunConfig.from_dict(doc)


def apply_overrides(cfg: RunConfig, overrides: dict[str, object]) -> RunConfig:
    """Set dotted keys (``rss.min_brake``) from command-line flags; None means unset."""
    doc = dataclasses.asdict(cfg)
    for key, value in overrides.items():
        if value is None:
            continue
        node = doc
        *parents, leaf = key.split(".")
        for p in parents:
            node = node[p]
        if leaf not in node:
            raise ValidationError(f"unknown config key {key}")
        node[leaf] = value
    return _build(RunConfig, doc, "config").validate()
