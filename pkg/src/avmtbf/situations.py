"""Situation probabilities from naturalistic trajectory data.

Reads HighD-style track files, classifies what the preceding vehicle is doing
in every frame and turns the counts into per-speed-range probabilities of
being in a potentially dangerous lane-following situation::

    p_S = p_decelerating + p_accelerating_close + p_constant_close

where "close" means the lead is slower than the ego vehicle and the
time-to-collision (with the ego vehicle assumed to accelerate) is within a
limit. Every vehicle in the data acts as an ego vehicle in turn.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, SchemaVersionError, ValidationError
from .kinematics import ttc_array
from .units import SpeedRangePartition

TRACK_COLUMNS = ("frame", "id", "laneId", "x", "xVelocity", "xAcceleration", "precedingId")
OPTIONAL_TRACK_COLUMNS = ("width",)


class DrivingMode(enum.Enum):
    ACCELERATING = "accelerating"
    DECELERATING = "decelerating"
    CONSTANT = "constant"


def classify_mode(acceleration: float, threshold: float = 0.1) -> DrivingMode:
    if threshold <= 0:
        raise ValidationError("mode threshold must be > 0")
    if acceleration > threshold:
        return DrivingMode.ACCELERATING
    if acceleration < -threshold:
        return DrivingMode.DECELERATING
    return DrivingMode.CONSTANT


@dataclass(frozen=True)
class TrackFrame:
    frame_index: int
    vehicle_id: int
    lane_id: int
    longitudinal_position: float
    speed: float
    acceleration: float
    preceding_vehicle_id: int | None
    length: float | None = None


@dataclass
class Recording:
    """One track file, normalised to the direction of travel.

    ``tracks`` has columns ``frame, id, lane, pos, speed, accel, preceding,
    length``; ``preceding`` is 0 for none and ``length`` is NaN when unknown.
    """

    name: str
    frame_rate: float
    tracks: pd.DataFrame

    def iter_frames(self) -> Iterator[TrackFrame]:
        for r in self.tracks.itertuples(index=False):
            yield TrackFrame(
                int(r.frame), int(r.id), int(r.lane), float(r.pos), float(r.speed), float(r.accel),
                int(r.preceding) or None, None if math.isnan(r.length) else float(r.length),
            )

    @classmethod
    def from_frames(cls, name: str, frame_rate: float, frames: Iterable[TrackFrame]) -> "Recording":
        rows = [
            (f.frame_index, f.vehicle_id, f.lane_id, f.longitudinal_position, f.speed, f.acceleration,
             f.preceding_vehicle_id or 0, math.nan if f.length is None else f.length)
            for f in frames
        ]
        df = pd.DataFrame(rows, columns=["frame", "id", "lane", "pos", "speed", "accel", "preceding", "length"])
        return cls(name, frame_rate, _sorted(df))


def _sorted(df: pd.DataFrame) -> pd.DataFrame:
    return df.sort_values(["frame", "id"], kind="mergesort").reset_index(drop=True)


# --- ingestion -------------------------------------------------------------------

def _meta_path(tracks_path: Path) -> Path:
    name = tracks_path.name
    if name.endswith("tracks.csv"):
        return tracks_path.with_name(name[: -len("tracks.csv")] + "recordingMeta.csv")
    return tracks_path.with_name(tracks_path.stem + "_recordingMeta.csv")


def _read_frame_rate(meta: Path) -> float:
    if not meta.exists():
        raise DataError(f"missing recording metadata {meta}")
    try:
        m = pd.read_csv(meta)
    except pd.errors.EmptyDataError:
        raise DataError(f"{meta}: empty file") from None
    if "frameRate" not in m.columns or m.empty:
        raise DataError(f"{meta}: missing column 'frameRate'")
    rate = pd.to_numeric(m["frameRate"].iloc[0], errors="coerce")
    if not (rate > 0):
        raise DataError(f"{meta}: frameRate must be a positive number")
    return float(rate)


def read_tracks(path: str | Path) -> Recording:
    """Load one HighD-compatible track CSV and its ``recordingMeta`` file.

    Positions ``x`` are taken as the front bumper along the x axis; vehicles
    with negative ``xVelocity`` are mirrored so that every vehicle drives
    towards increasing position. ``width`` (HighD's box extent along x) is the
    vehicle length when present.
    """
    path = Path(path)
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: empty file") from None
    missing = [c for c in TRACK_COLUMNS if c not in raw.columns]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    if raw.empty:
        raise DataError(f"{path}: no rows")

    cols = list(TRACK_COLUMNS) + [c for c in OPTIONAL_TRACK_COLUMNS if c in raw.columns]
    num = {}
    for c in cols:
        text = raw[c].str.strip()
        if c == "precedingId":
            text = text.replace("", "0")
        vals = pd.to_numeric(text, errors="coerce")
        bad = vals.isna() & ~((text == "") & (c == "width"))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataError(f"{path}: line {row + 2}, column {c}: not a number: {raw[c].iloc[row]!r}")
        num[c] = vals.to_numpy()

    vx = num["xVelocity"].astype(float)
    sign = np.where(vx < 0, -1.0, 1.0)
    df = pd.DataFrame(
        {
            "frame": num["frame"].astype(np.int64),
            "id": num["id"].astype(np.int64),
            "lane": num["laneId"].astype(np.int64),
            "pos": num["x"].astype(float) * sign,
            "speed": np.abs(vx),
            "accel": num["xAcceleration"].astype(float) * sign,
            "preceding": num["precedingId"].astype(np.int64),
            "length": num["width"].astype(float) if "width" in num else np.full(len(vx), np.nan),
        }
    )
    name = path.stem[: -len("_tracks")] if path.stem.endswith("_tracks") else path.stem
    return Recording(name, _read_frame_rate(_meta_path(path)), _sorted(df))


def ingest_tracks(source: str | Path) -> list[Recording]:
    """All recordings under ``source`` (a track file or a directory of them)."""
    source = Path(source)
    if source.is_dir():
        files = sorted(p for p in source.glob("*.csv") if not p.name.endswith("recordingMeta.csv")
                       and not p.name.endswith("tracksMeta.csv"))
        if not files:
            raise DataError(f"{source}: no recordings")
        return [read_tracks(p) for p in files]
    if not source.exists():
        raise DataError(f"{source}: no such file or directory")
    return [read_tracks(source)]


def write_recording(rec: Recording, directory: str | Path) -> Path:
    """Write ``rec`` back out in the track CSV schema (plus its metadata file)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    t = rec.tracks
    out = pd.DataFrame(
        {
            "frame": t["frame"],
            "id": t["id"],
            "laneId": t["lane"],
            "x": t["pos"],
            "xVelocity": t["speed"],
            "xAcceleration": t["accel"],
            "precedingId": t["preceding"],
            "width": t["length"],
        }
    )
    path = directory / f"{rec.name}_tracks.csv"
    out.to_csv(path, index=False, float_format="%.17g")
    pd.DataFrame({"frameRate": [rec.frame_rate]}).to_csv(directory / f"{rec.name}_recordingMeta.csv", index=False)
    return path


# --- extraction ------------------------------------------------------------------

def _with_lead(df: pd.DataFrame) -> tuple[pd.DataFrame, int]:
    """Attach lead-vehicle columns; returns the frame and the number of dangling references."""
    lead = df[["frame", "id", "pos", "speed", "accel", "length"]].rename(
        columns={"id": "preceding", "pos": "lead_pos", "speed": "lead_speed", "accel": "lead_accel", "length": "lead_length"}
    )
    m = df.merge(lead, on=["frame", "preceding"], how="left", sort=False)
    has_ref = m["preceding"].to_numpy() != 0
    found = ~m["lead_speed"].isna().to_numpy()
    dangling = has_ref & ~found
    return m.loc[~dangling].reset_index(drop=True), int(dangling.sum())


def _gap(front_pos, rear_pos, front_length):
    raw = front_pos - rear_pos
    return np.where(np.isnan(front_length), raw, raw - front_length)


@dataclass
class SituationCounts:
    """Integer frame counts per speed range; merging is plain addition."""

    n_ranges: int
    frames: np.ndarray = None
    with_lead: np.ndarray = None
    decelerating: np.ndarray = None
    accelerating: np.ndarray = None
    constant: np.ndarray = None
    accelerating_close: np.ndarray = None
    constant_close: np.ndarray = None
    discarded_frames: int = 0
    dangling_references: int = 0
    raw_gap_frames: int = 0

    FIELDS = ("frames", "with_lead", "decelerating", "accelerating", "constant", "accelerating_close", "constant_close")
    SCALARS = ("discarded_frames", "dangling_references", "raw_gap_frames")

    def __post_init__(self):
        for f in self.FIELDS:
            if getattr(self, f) is None:
                setattr(self, f, np.zeros(self.n_ranges, dtype=np.int64))

    def __add__(self, other: "SituationCounts") -> "SituationCounts":
        if other.n_ranges != self.n_ranges:
            raise ValidationError("cannot merge counts over different partitions")
        out = SituationCounts(self.n_ranges)
        for f in self.FIELDS:
            setattr(out, f, getattr(self, f) + getattr(other, f))
        for f in self.SCALARS:
            setattr(out, f, getattr(self, f) + getattr(other, f))
        return out

    def to_dict(self) -> dict:
        d = {f: [int(x) for x in getattr(self, f)] for f in self.FIELDS}
        d.update({f: int(getattr(self, f)) for f in self.SCALARS})
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SituationCounts":
        n = len(d["frames"])
        out = cls(n)
        for f in cls.FIELDS:
            setattr(out, f, np.asarray(d[f], dtype=np.int64))
        for f in cls.SCALARS:
            setattr(out, f, int(d.get(f, 0)))
        return out


def count_situations(
    rec: Recording,
    partition: SpeedRangePartition,
    ttc_limit: float = 5.0,
    assumed_rear_accel: float = 2.0,
    mode_threshold: float = 0.1,
    ego_ids: Iterable[int] | None = None,
) -> SituationCounts:
    """Situation counts for one recording (see :func:`extract_situation_table`)."""
    if mode_threshold <= 0:
        raise ValidationError("mode threshold must be > 0")
    n = len(partition)
    out = SituationCounts(n)
    df, out.dangling_references = _with_lead(rec.tracks)
    if ego_ids is not None:
        df = df[df["id"].isin(set(ego_ids))]
    idx = partition.indices(df["speed"].to_numpy())
    inside = idx >= 0
    out.discarded_frames = int((~inside).sum())
    df, idx = df.loc[inside], idx[inside]

    has_lead = (df["preceding"].to_numpy() != 0)
    a_lead = df["lead_accel"].to_numpy()
    dec = has_lead & (a_lead < -mode_threshold)
    acc = has_lead & (a_lead > mode_threshold)
    const = has_lead & ~dec & ~acc

    gap = _gap(df["lead_pos"].to_numpy(), df["pos"].to_numpy(), df["lead_length"].to_numpy())
    out.raw_gap_frames = int((has_lead & np.isnan(df["lead_length"].to_numpy())).sum())
    v_ego = df["speed"].to_numpy()
    v_lead = df["lead_speed"].to_numpy()
    t = ttc_array(np.where(has_lead, np.maximum(gap, 0.0), 1.0), v_ego, np.where(has_lead, v_lead, 0.0), assumed_rear_accel)
    close = has_lead & (v_lead < v_ego) & (t <= ttc_limit)

    def per_range(mask):
        return np.bincount(idx[mask], minlength=n).astype(np.int64)

    out.frames = per_range(np.ones(len(idx), dtype=bool))
    out.with_lead = per_range(has_lead)
    out.decelerating = per_range(dec)
    out.accelerating = per_range(acc)
    out.constant = per_range(const)
    out.accelerating_close = per_range(acc & close)
    out.constant_close = per_range(const & close)
    return out


@dataclass
class SituationTable:
    """Per speed range: speed probability and the three situation terms.

    Probabilities are shares of all retained frames of that range, so frames
    without a lead vehicle sit in the denominator only. ``counts`` is present
    when the table was extracted from data.
    """

    partition: SpeedRangePartition
    speed_probability: tuple[float, ...]
    decelerating: tuple[float, ...]
    accelerating_close: tuple[float, ...]
    constant_close: tuple[float, ...]
    counts: SituationCounts | None = None
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.partition)
        for name in ("speed_probability", "decelerating", "accelerating_close", "constant_close"):
            vals = tuple(float(x) for x in getattr(self, name))
            if len(vals) != n:
                raise ValidationError(f"{name} has {len(vals)} entries for {n} speed ranges")
            if any(not (0.0 <= v <= 1.0) for v in vals):
                raise ValidationError(f"{name} must lie in [0, 1]")
            setattr(self, name, vals)
        if any(t > 1.0 + 1e-12 for t in self.total):
            raise ValidationError("situation terms of a range sum to more than 1")

    @property
    def total(self) -> tuple[float, ...]:
        return tuple(d + a + c for d, a, c in zip(self.decelerating, self.accelerating_close, self.constant_close))

    @classmethod
    def from_counts(cls, partition: SpeedRangePartition, counts: SituationCounts, settings: dict | None = None) -> "SituationTable":
        retained = int(counts.frames.sum())
        if retained == 0:
            raise DataError("no frames left inside the speed partition")

        def share(num):
            return tuple(float(a) / f if f else 0.0 for a, f in zip(num, counts.frames))

        return cls(
            partition,
            tuple(float(f) / retained for f in counts.frames),
            share(counts.decelerating),
            share(counts.accelerating_close),
            share(counts.constant_close),
            counts,
            dict(settings or {}),
        )

    def to_dict(self) -> dict:
        ranges = []
        b = self.partition.boundaries_kmh
        for i in range(len(self.partition)):
            ranges.append(
                {
                    "lo_kmh": b[i],
                    "hi_kmh": b[i + 1],
                    "speed_probability": self.speed_probability[i],
                    "decelerating": self.decelerating[i],
                    "accelerating_close": self.accelerating_close[i],
                    "constant_close": self.constant_close[i],
                    "total": self.total[i],
                }
            )
        return {
            "schema": "situation-table",
            "version": 1,
            "units": {"speed": "km/h"},
            "speed_ranges_kmh": list(b),
            "ranges": ranges,
            "counts": self.counts.to_dict() if self.counts is not None else None,
            "settings": self.settings,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SituationTable":
        if doc.get("schema") != "situation-table":
            raise ValidationError("not a situation-table document")
        if doc.get("version") != 1:
            raise SchemaVersionError(f"unsupported situation-table version {doc.get('version')!r}")
        part = SpeedRangePartition.from_kmh(doc["speed_ranges_kmh"])
        rows = doc["ranges"]
        counts = SituationCounts.from_dict(doc["counts"]) if doc.get("counts") else None
        return cls(
            part,
            tuple(r["speed_probability"] for r in rows),
            tuple(r["decelerating"] for r in rows),
            tuple(r["accelerating_close"] for r in rows),
            tuple(r["constant_close"] for r in rows),
            counts,
            dict(doc.get("settings") or {}),
        )

    def to_text(self) -> str:
        """Aligned table: one column per speed range."""
        labels = [f"{lo:g} - {hi:g}" for lo, hi in zip(self.partition.boundaries_kmh, self.partition.boundaries_kmh[1:])]
        rows = [
            ("Speed [km/h]", labels),
            ("Speed probability [p_i]", [f"{v:.3f}" for v in self.speed_probability]),
            ("Lead decelerating", [f"{v:.3f}" for v in self.decelerating]),
            ("Lead accelerating, close", [f"{v:.3f}" for v in self.accelerating_close]),
            ("Lead constant, close", [f"{v:.3f}" for v in self.constant_close]),
            ("Total situation probability", [f"{v:.3f}" for v in self.total]),
        ]
        w0 = max(len(r[0]) for r in rows)
        w = max(len(c) for r in rows for c in r[1])
        return "\n".join(f"{name:<{w0}} | " + " | ".join(f"{c:>{w}}" for c in cells) for name, cells in rows) + "\n"


def extract_situation_table(
    recordings: Iterable[Recording],
    partition: SpeedRangePartition,
    ttc_limit: float = 5.0,
    assumed_rear_accel: float = 2.0,
    mode_threshold: float = 0.1,
    ego_ids: Iterable[int] | None = None,
) -> SituationTable:
    """Per-range situation probabilities over all recordings.

    A decelerating lead counts regardless of distance. Accelerating and
    constant-speed leads count only when slower than the ego vehicle and
    within ``ttc_limit`` (inclusive). Frames outside the partition are
    discarded; references to a preceding vehicle missing from the frame are
    skipped and reported.
    """
    ego = None if ego_ids is None else set(ego_ids)
    total = SituationCounts(len(partition))
    seen = False
    for rec in recordings:
        total = total + count_situations(rec, partition, ttc_limit, assumed_rear_accel, mode_threshold, ego)
        seen = True
    if not seen:
        raise DataError("no recordings")
    settings = {
        "ttc_limit_s": ttc_limit,
        "assumed_rear_accel": assumed_rear_accel,
        "mode_threshold": mode_threshold,
        "gap": "raw position difference" if total.raw_gap_frames else "position difference minus lead length",
    }
    table = SituationTable.from_counts(partition, total, settings)
    for i, t in enumerate(table.total):
        terms = table.decelerating[i] + table.accelerating_close[i] + table.constant_close[i]
        assert t == terms
    return table


def speed_distribution(recordings: Iterable[Recording], partition: SpeedRangePartition) -> tuple[float, ...]:
    counts = np.zeros(len(partition), dtype=np.int64)
    for rec in recordings:
        idx = partition.indices(rec.tracks["speed"].to_numpy())
        counts += np.bincount(idx[idx >= 0], minlength=len(partition))
    n = int(counts.sum())
    if n == 0:
        raise DataError("all frames are outside the speed partition")
    return tuple(float(c) / n for c in counts)


def rear_follower_probability(
    recordings: Iterable[Recording],
    partition: SpeedRangePartition,
    ttc_limit: float = 5.0,
    assumed_rear_accel: float = 2.0,
    ego_ids: Iterable[int] | None = None,
) -> tuple[float, ...]:
    """Share of in-range frames in which some follower is within ``ttc_limit``.

    The follower plays the rear vehicle and is assumed to accelerate; this is
    the situation in which an unnecessary hard brake of the ego vehicle can
    cause a rear-end collision.
    """
    n = len(partition)
    frames = np.zeros(n, dtype=np.int64)
    hits = np.zeros(n, dtype=np.int64)
    ego = None if ego_ids is None else set(ego_ids)
    seen = False
    for rec in recordings:
        seen = True
        df = rec.tracks
        if ego is not None:
            egos = df[df["id"].isin(ego)]
        else:
            egos = df
        idx_all = partition.indices(egos["speed"].to_numpy())
        frames += np.bincount(idx_all[idx_all >= 0], minlength=n)

        followers = df[df["preceding"] != 0][["frame", "preceding", "pos", "speed"]].rename(
            columns={"preceding": "id", "pos": "f_pos", "speed": "f_speed"}
        )
        m = egos.merge(followers, on=["frame", "id"], how="inner")
        if m.empty:
            continue
        gap = _gap(m["pos"].to_numpy(), m["f_pos"].to_numpy(), m["length"].to_numpy())
        t = ttc_array(np.maximum(gap, 0.0), m["f_speed"].to_numpy(), m["speed"].to_numpy(), assumed_rear_accel)
        m = m.assign(close=t <= ttc_limit)
        close_frames = m[m["close"]].drop_duplicates(["frame", "id"])
        idx = partition.indices(close_frames["speed"].to_numpy())
        hits += np.bincount(idx[idx >= 0], minlength=n)
    if not seen:
        raise DataError("no recordings")
    if frames.sum() == 0:
        raise DataError("all frames are outside the speed partition")
    return tuple(float(h) / f if f else 0.0 for h, f in zip(hits, frames))


def convergence_report(recordings: Sequence[Recording], partition: SpeedRangePartition) -> list[dict]:
    """How much the retained speed distribution still moves per added recording.

    For every k, ``ks_cumulative`` compares the speeds of the first k
    recordings with those of the first k+1; ``ks_increment`` compares
    recording k+1 alone with the first k. Both are two-sample
    Kolmogorov-Smirnov statistics.
    """
    from scipy.stats import ks_2samp

    recordings = list(recordings)
    if len(recordings) < 2:
        raise DataError("convergence needs at least two recordings")
    samples = []
    for rec in recordings:
        s = rec.tracks["speed"].to_numpy()
        samples.append(s[partition.indices(s) >= 0])
    rows = []
    cum = samples[0]
    for k in range(1, len(samples)):
        nxt = np.concatenate([cum, samples[k]])
        if len(cum) == 0 or len(samples[k]) == 0:
            ks_cum = ks_inc = math.nan
        else:
            ks_cum = float(ks_2samp(cum, nxt).statistic)
            ks_inc = float(ks_2samp(samples[k], cum).statistic)
        rows.append({"k": k, "recording": recordings[k].name, "frames": int(len(nxt)),
                     "ks_cumulative": ks_cum, "ks_increment": ks_inc})
        cum = nxt
    return rows


def write_convergence_csv(rows: list[dict], path) -> None:
    pd.DataFrame(rows, columns=["k", "recording", "frames", "ks_cumulative", "ks_increment"]).to_csv(
        path, index=False, float_format="%.10g"
    )


def save_table(table: SituationTable, path: str | Path) -> None:
    Path(path).write_text(json.dumps(table.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_table(path: str | Path) -> SituationTable:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None
    return SituationTable.from_dict(doc)

