"""Perception error taxonomy and error-rate estimation from perception logs.

A log row pairs one ground-truth object with what the perception system
reported for it. Errors are split into Type I (scene perceived as more
dangerous than it is) and Type II (perceived as less dangerous). A Type II
error is safety relevant when the planner, trusting the perceived distance,
judges the situation safe although the real distance is below the RSS
distance. Severity is judged under a worst case: the object stands still and
the ego vehicle drives at the road's maximum speed.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, SchemaVersionError, ValidationError
from .kinematics import (
    DEFAULT_THRESHOLDS,
    BrakingProfile,
    RssParams,
    SeverityThresholds,
    impact_delta_v_standing,
    rss_longitudinal_distance,
    severity_from_delta_v,
)
from .units import SECONDS_PER_HOUR, SpeedRangePartition, kmh_to_ms, ms_to_kmh

LOG_COLUMNS = (
    "frame",
    "object_id",
    "real_distance",
    "perceived_distance",
    "real_velocity",
    "perceived_velocity",
    "ego_speed",
)


class ErrorType(enum.Enum):
    TYPE_I = "TypeI"
    TYPE_II = "TypeII"


class Counting(enum.Enum):
    FRAMES = "frames"
    EVENTS = "events"


@dataclass(frozen=True)
class ObjectObservation:
    """One ground-truth/perceived pair in one frame.

    A missing perceived distance is a miss, a missing real distance a false
    alarm. Velocities are the object's own longitudinal speed in m/s.
    """

    frame_index: int
    object_id: str
    real_distance: float | None
    perceived_distance: float | None
    real_velocity: float | None = None
    perceived_velocity: float | None = None
    ego_speed: float = 0.0

    def __post_init__(self):
        if self.real_distance is None and self.perceived_distance is None:
            raise ValidationError(f"frame {self.frame_index}, object {self.object_id}: real and perceived both absent")
        for name in ("real_distance", "perceived_distance"):
            d = getattr(self, name)
            if d is not None and d < 0:
                raise ValidationError(f"{name} must be >= 0")

    @property
    def is_miss(self) -> bool:
        return self.perceived_distance is None

    @property
    def is_false_alarm(self) -> bool:
        return self.real_distance is None


@dataclass(frozen=True)
class Tolerance:
    distance: float = 0.1
    velocity: float = 0.1


@dataclass(frozen=True)
class ErrorAssessment:
    error_type: ErrorType | None
    safety_relevant: bool
    severe: bool
    worst_case_delta_v: float = 0.0

    def __post_init__(self):
        if self.severe and not self.safety_relevant:
            raise ValidationError("a severe error must be safety relevant")
        if self.safety_relevant and self.error_type is None:
            raise ValidationError("a safety-relevant error needs an error type")


def classify_error_type(obs: ObjectObservation, tol: Tolerance = Tolerance()) -> ErrorType | None:
    """Type I / Type II / None for a single observation.

    For a lead object, perceived farther or perceived faster understates the
    risk (Type II); perceived closer or slower overstates it (Type I). A
    distance error takes precedence over a velocity error.
    """
    if obs.is_miss:
        return ErrorType.TYPE_II
    if obs.is_false_alarm:
        return ErrorType.TYPE_I
    dd = obs.perceived_distance - obs.real_distance
    if abs(dd) > tol.distance:
        return ErrorType.TYPE_II if dd > 0 else ErrorType.TYPE_I
    if obs.real_velocity is not None and obs.perceived_velocity is not None:
        dv = obs.perceived_velocity - obs.real_velocity
        if abs(dv) > tol.velocity:
            return ErrorType.TYPE_II if dv > 0 else ErrorType.TYPE_I
    return None


def is_safety_relevant_type2(d_per: float, d_real: float, d_rss: float) -> bool:
    """Perceived gap looks safe while the real gap is not. Pass ``math.inf`` for a miss."""
    if d_real < 0 or d_rss < 0:
        raise ValidationError("d_real and d_rss must be >= 0")
    return d_per > d_rss and d_rss > d_real


def is_safety_relevant_type1(d_per: float, d_real: float, d_rss: float) -> bool:
    """Mirror of the Type II indicator: the perceived gap looks unsafe while the real one is safe.
    Pass ``math.inf`` as ``d_real`` for a false alarm."""
    if d_per < 0 or d_rss < 0:
        raise ValidationError("d_per and d_rss must be >= 0")
    return d_per < d_rss and d_rss < d_real


def assess_severity(
    obs: ObjectObservation,
    road_max_speed: float,
    profile: BrakingProfile = BrakingProfile(),
    thresholds: SeverityThresholds = DEFAULT_THRESHOLDS,
) -> ErrorAssessment:
    """Worst-case severity of a safety-relevant Type II error.

    The ego vehicle is assumed to drive at ``road_max_speed`` towards a
    standing object at the real distance, braking once it reacts.
    """
    if obs.real_distance is None:
        raise ValidationError("severity needs a real object distance; false alarms are Type I")
    if classify_error_type(obs) is not ErrorType.TYPE_II:
        raise ValidationError(f"frame {obs.frame_index}, object {obs.object_id}: not a Type II error")
    dv = impact_delta_v_standing(road_max_speed, obs.real_distance, profile)
    return ErrorAssessment(ErrorType.TYPE_II, True, severity_from_delta_v(dv, thresholds).severe, dv)


@dataclass
class PerceptionLog:
    frame_rate: float
    total_frames: int
    observations: list[ObjectObservation]
    # ego speed (m/s) for every frame that carries one; frames without it are unattributed
    ego_speed_by_frame: dict[int, float] = field(default_factory=dict)
    road_max_speed: float | None = None

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise ValidationError("frame_rate must be > 0")
        if self.total_frames <= 0:
            raise ValidationError("total_frames must be > 0")
        for o in self.observations:
            if not (0 <= o.frame_index < self.total_frames):
                raise ValidationError(f"frame index {o.frame_index} outside [0, {self.total_frames})")
            self.ego_speed_by_frame.setdefault(o.frame_index, o.ego_speed)

    @property
    def hours(self) -> float:
        return self.total_frames / self.frame_rate / SECONDS_PER_HOUR


@dataclass
class ErrorCell:
    error_frames: int = 0
    error_events: int = 0
    exposure_frames: int = 0


@dataclass
class ErrorRateTable:
    """Error counts and exposure per (error type, speed range).

    ``pooled`` holds the same counts over the whole log, including frames
    whose ego speed is unknown or outside the partition.
    """

    partition: SpeedRangePartition
    frame_rate: float
    counting: Counting = Counting.FRAMES
    cells: dict[tuple[ErrorType, int], ErrorCell] = field(default_factory=dict)
    pooled: dict[ErrorType, ErrorCell] = field(default_factory=dict)
    discarded_frames: int = 0
    unattributed_frames: int = 0
    velocity_independent: bool = False

    def __post_init__(self):
        for t in ErrorType:
            self.pooled.setdefault(t, ErrorCell())
            for i in range(len(self.partition)):
                self.cells.setdefault((t, i), ErrorCell())

    def _rate(self, cell: ErrorCell) -> float:
        if cell.exposure_frames == 0:
            return 0.0
        count = cell.error_frames if self.counting is Counting.FRAMES else cell.error_events
        return count / self.exposure_hours(cell)

    def exposure_hours(self, cell: ErrorCell) -> float:
        return cell.exposure_frames / self.frame_rate / SECONDS_PER_HOUR

    def rate(self, error_type: ErrorType, range_index: int | None = None) -> float:
        """Errors per hour; the pooled rate when ``range_index`` is None or the
        table is flagged velocity independent."""
        if range_index is None or self.velocity_independent:
            return self._rate(self.pooled[error_type])
        return self._rate(self.cells[(error_type, range_index)])

    def rates(self, error_type: ErrorType) -> list[float]:
        return [self.rate(error_type, i) for i in range(len(self.partition))]

    def merge(self, other: "ErrorRateTable") -> "ErrorRateTable":
        """Additive merge of two shards; associative and commutative."""
        if other.partition != self.partition or other.frame_rate != self.frame_rate:
            raise ValidationError("cannot merge tables with different partitions or frame rates")
        out = ErrorRateTable(self.partition, self.frame_rate, self.counting, velocity_independent=self.velocity_independent)
        for key in out.cells:
            a, b = self.cells[key], other.cells[key]
            out.cells[key] = ErrorCell(a.error_frames + b.error_frames, a.error_events + b.error_events, a.exposure_frames + b.exposure_frames)
        for t in ErrorType:
            a, b = self.pooled[t], other.pooled[t]
            out.pooled[t] = ErrorCell(a.error_frames + b.error_frames, a.error_events + b.error_events, a.exposure_frames + b.exposure_frames)
        out.discarded_frames = self.discarded_frames + other.discarded_frames
        out.unattributed_frames = self.unattributed_frames + other.unattributed_frames
        return out

    def to_dict(self) -> dict:
        ranges = []
        for i, (lo, hi) in enumerate(zip(self.partition.boundaries_kmh, self.partition.boundaries_kmh[1:])):
            row = {"lo_kmh": lo, "hi_kmh": hi}
            for t in ErrorType:
                c = self.cells[(t, i)]
                row[t.value] = {
                    "rate_per_hour": self._rate(c),
                    "error_frames": c.error_frames,
                    "error_events": c.error_events,
                    "exposure_hours": self.exposure_hours(c),
                    "exposure_frames": c.exposure_frames,
                }
            ranges.append(row)
        pooled = {
            t.value: {
                "rate_per_hour": self._rate(c),
                "error_frames": c.error_frames,
                "error_events": c.error_events,
                "exposure_hours": self.exposure_hours(c),
                "exposure_frames": c.exposure_frames,
            }
            for t, c in self.pooled.items()
        }
        return {
            "schema": "error-rate-table",
            "version": 1,
            "units": {"rate": "1/h", "speed": "km/h", "exposure": "h"},
            "counting": self.counting.value,
            "frame_rate": self.frame_rate,
            "velocity_independent": self.velocity_independent,
            "speed_ranges_kmh": list(self.partition.boundaries_kmh),
            "ranges": ranges,
            "pooled": pooled,
            "discarded_frames": self.discarded_frames,
            "unattributed_frames": self.unattributed_frames,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ErrorRateTable":
        if doc.get("schema") != "error-rate-table":
            raise ValidationError("not an error-rate-table document")
        if doc.get("version") != 1:
            raise SchemaVersionError(f"unsupported error-rate-table version {doc.get('version')!r}")
        part = SpeedRangePartition.from_kmh(doc["speed_ranges_kmh"])
        out = cls(part, float(doc["frame_rate"]), Counting(doc["counting"]), velocity_independent=bool(doc["velocity_independent"]))
        for i, row in enumerate(doc["ranges"]):
            for t in ErrorType:
                c = row[t.value]
                out.cells[(t, i)] = ErrorCell(int(c["error_frames"]), int(c["error_events"]), int(c["exposure_frames"]))
        for t in ErrorType:
            c = doc["pooled"][t.value]
            out.pooled[t] = ErrorCell(int(c["error_frames"]), int(c["error_events"]), int(c["exposure_frames"]))
        out.discarded_frames = int(doc.get("discarded_frames", 0))
        out.unattributed_frames = int(doc.get("unattributed_frames", 0))
        return out


def _count_runs(frames_by_object: dict[str, list[int]]) -> int:
    runs = 0
    for frames in frames_by_object.values():
        prev = None
        for f in sorted(set(frames)):
            if prev is None or f != prev + 1:
                runs += 1
            prev = f
    return runs


def error_rate_table(
    log: PerceptionLog,
    partition: SpeedRangePartition,
    rss: RssParams = RssParams(),
    counting: Counting = Counting.FRAMES,
    road_max_speed: float | None = None,
    profile: BrakingProfile = BrakingProfile(),
    thresholds: SeverityThresholds = DEFAULT_THRESHOLDS,
    tolerance: Tolerance = Tolerance(),
    velocity_independent: bool = False,
) -> ErrorRateTable:
    """Count severe Type II and safety-relevant Type I errors per speed range.

    Each (frame, object) pair with a qualifying error counts once in frame
    counting; in event counting each maximal run of consecutive frames of one
    object counts once. Exposure for a range is the number of frames whose
    ego speed falls into it.
    """
    if not log.observations and not log.ego_speed_by_frame:
        raise DataError("empty perception log")
    vmax = road_max_speed if road_max_speed is not None else log.road_max_speed
    if vmax is None:
        raise ValidationError("road_max_speed is required for worst-case severity")

    table = ErrorRateTable(partition, log.frame_rate, counting, velocity_independent=velocity_independent)

    range_of_frame: dict[int, int | None] = {}
    for f, v in log.ego_speed_by_frame.items():
        range_of_frame[f] = partition.index(v)
    attributed = len(range_of_frame)
    table.unattributed_frames = log.total_frames - attributed
    for r in range_of_frame.values():
        if r is None:
            table.discarded_frames += 1
        else:
            for t in ErrorType:
                table.cells[(t, r)].exposure_frames += 1
    for t in ErrorType:
        table.pooled[t].exposure_frames = log.total_frames

    hits: dict[tuple[ErrorType, int | None], dict[str, list[int]]] = defaultdict(lambda: defaultdict(list))
    for obs in log.observations:
        etype = classify_error_type(obs, tolerance)
        if etype is None:
            continue
        if etype is ErrorType.TYPE_II:
            d_per = math.inf if obs.is_miss else obs.perceived_distance
            v_front = obs.real_velocity or 0.0
            d_rss = rss_longitudinal_distance(obs.ego_speed, v_front, rss)
            if not is_safety_relevant_type2(d_per, obs.real_distance, d_rss):
                continue
            if not assess_severity(obs, vmax, profile, thresholds).severe:
                continue
        else:
            d_real = math.inf if obs.is_false_alarm else obs.real_distance
            v_front = obs.perceived_velocity or 0.0
            d_rss = rss_longitudinal_distance(obs.ego_speed, v_front, rss)
            if not is_safety_relevant_type1(obs.perceived_distance, d_real, d_rss):
                continue
        hits[(etype, range_of_frame.get(obs.frame_index))][obs.object_id].append(obs.frame_index)

    for (etype, r), by_obj in hits.items():
        n_frames = sum(len(set(v)) for v in by_obj.values())
        n_events = _count_runs(by_obj)
        table.pooled[etype].error_frames += n_frames
        table.pooled[etype].error_events += n_events
        if r is not None:
            table.cells[(etype, r)].error_frames += n_frames
            table.cells[(etype, r)].error_events += n_events
    return table


# --- file format ---------------------------------------------------------------

def _opt_float(text: str, line: int, column: str) -> float | None:
    text = text.strip()
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise DataError(f"line {line}, column {column}: not a number: {text!r}") from None


def read_perception_log(csv_path: str | Path, meta_path: str | Path | None = None) -> PerceptionLog:
    """Load a perception log CSV plus its JSON sidecar.

    Distances are metres, speeds km/h, empty fields mean absent. The sidecar
    defaults to ``<csv>.json`` and must give ``frame_rate``; ``total_frames``
    defaults to one past the largest frame index and ``road_max_speed`` is in
    km/h. A row with an empty ``object_id`` only records the ego speed of an
    object-free frame.
    """
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".json")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"missing perception log metadata {meta_path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{meta_path}: invalid JSON: {exc}") from None
    if "frame_rate" not in meta:
        raise DataError(f"{meta_path}: missing 'frame_rate'")

    observations: list[ObjectObservation] = []
    ego: dict[int, float] = {}
    max_frame = -1
    with csv_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in LOG_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{csv_path}: missing columns {missing}")
        for line, row in enumerate(reader, start=2):
            try:
                frame = int(row["frame"])
            except ValueError:
                raise DataError(f"{csv_path}: line {line}, column frame: not an integer: {row['frame']!r}") from None
            ego_speed = _opt_float(row["ego_speed"], line, "ego_speed")
            if ego_speed is None:
                raise DataError(f"{csv_path}: line {line}: ego_speed is required")
            ego_speed = kmh_to_ms(ego_speed)
            max_frame = max(max_frame, frame)
            ego[frame] = ego_speed
            if row["object_id"].strip() == "":
                continue
            vals = {c: _opt_float(row[c], line, c) for c in LOG_COLUMNS[2:6]}
            for c in ("real_velocity", "perceived_velocity"):
                if vals[c] is not None:
                    vals[c] = kmh_to_ms(vals[c])
            try:
                observations.append(ObjectObservation(frame, row["object_id"].strip(), ego_speed=ego_speed, **vals))
            except ValidationError as exc:
                raise DataError(f"{csv_path}: line {line}: {exc}") from None
    if max_frame < 0:
        raise DataError(f"{csv_path}: no rows")
    total = int(meta.get("total_frames", max_frame + 1))
    vmax = meta.get("road_max_speed")
    return PerceptionLog(
        frame_rate=float(meta["frame_rate"]),
        total_frames=total,
        observations=observations,
        ego_speed_by_frame=ego,
        road_max_speed=kmh_to_ms(float(vmax)) if vmax is not None else None,
    )


def write_perception_log(log: PerceptionLog, csv_path: str | Path, meta_path: str | Path | None = None) -> None:
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".json")

    def fmt(x):
        return "" if x is None else repr(float(x))

    def fmt_speed(x):
        return "" if x is None else repr(ms_to_kmh(x))

    observed = {o.frame_index for o in log.observations}
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for f in sorted(set(log.ego_speed_by_frame) - observed):
            w.writerow([f, "", "", "", "", "", fmt_speed(log.ego_speed_by_frame[f])])
        for o in log.observations:
            w.writerow([o.frame_index, o.object_id, fmt(o.real_distance), fmt(o.perceived_distance),
                        fmt_speed(o.real_velocity), fmt_speed(o.perceived_velocity), fmt_speed(o.ego_speed)])
    meta = {"frame_rate": log.frame_rate, "total_frames": log.total_frames}
    if log.road_max_speed is not None:
        meta["road_max_speed"] = ms_to_kmh(log.road_max_speed)
    meta_path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
