"""Synthetic HighD-style recordings with known situation frequencies.

Each ego vehicle appears in a single frame, so ego frames are independent
draws and the planted probabilities can be checked with binomial intervals.
Lead vehicles drive below the partition's lowest speed and are therefore
discarded by the extraction; they only shape the ego's situation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import ValidationError
from .situations import Recording, _sorted
from .units import SpeedRangePartition, kmh_to_ms

LEAD_LENGTH = 4.5


@dataclass(frozen=True)
class PlantedSituations:
    """Planted per-range frequencies (each a share of that range's ego frames)."""

    speed_probability: Sequence[float]
    decelerating: Sequence[float]
    accelerating_close: Sequence[float]
    constant_close: Sequence[float]
    accelerating_far: Sequence[float] = ()
    constant_far: Sequence[float] = ()

    def cell_probabilities(self, i: int) -> np.ndarray:
        far_a = self.accelerating_far[i] if self.accelerating_far else 0.0
        far_c = self.constant_far[i] if self.constant_far else 0.0
        p = np.array([self.decelerating[i], self.accelerating_close[i], self.constant_close[i], far_a, far_c])
        rest = 1.0 - p.sum()
        if rest < -1e-12:
            raise ValidationError(f"planted cells of range {i} sum above 1")
        return np.append(p, max(rest, 0.0))


def generate_recordings(
    planted: PlantedSituations,
    partition: SpeedRangePartition,
    n_egos: int,
    n_recordings: int = 1,
    seed: int = 0,
    frame_rate: float = 25.0,
    ttc_limit: float = 5.0,
    assumed_rear_accel: float = 2.0,
    mode_threshold: float = 0.1,
    egos_per_frame: int = 50,
) -> list[Recording]:
    lo_kmh = partition.boundaries_kmh[0]
    if lo_kmh < 20:
        raise ValidationError("synthetic leads need a partition starting at 20 km/h or more")
    p_speed = np.asarray(planted.speed_probability, dtype=float)
    if len(p_speed) != len(partition) or abs(p_speed.sum() - 1) > 1e-9:
        raise ValidationError("speed probabilities must match the partition and sum to 1")
    rng = np.random.default_rng(seed)

    rng_idx = rng.choice(len(partition), size=n_egos, p=p_speed / p_speed.sum())
    lo = np.array([partition.boundaries[i] for i in rng_idx])
    hi = np.array([partition.boundaries[i + 1] for i in rng_idx])
    v_ego = lo + (hi - lo) * rng.random(n_egos)

    cell = np.empty(n_egos, dtype=np.int64)
    for i in range(len(partition)):
        sel = rng_idx == i
        cell[sel] = rng.choice(6, size=int(sel.sum()), p=planted.cell_probabilities(i))
    # cells: 0 decel, 1 acc close, 2 const close, 3 acc far, 4 const far, 5 no lead
    v_lead = kmh_to_ms(rng.uniform(lo_kmh * 0.4, lo_kmh * 0.9, n_egos))
    dv = v_ego - v_lead
    a = assumed_rear_accel
    close_limit = 0.5 * a * ttc_limit**2 + dv * ttc_limit  # gap at which TTC equals the limit
    u = rng.random(n_egos)
    gap = np.where(
        np.isin(cell, (1, 2)),
        0.5 + u * (close_limit - 0.5) * 0.999,
        close_limit * (1.05 + 2.0 * u),
    )
    mt = mode_threshold
    accel = np.select(
        [cell == 0, np.isin(cell, (1, 3)), np.isin(cell, (2, 4))],
        [-rng.uniform(5 * mt, 30 * mt, n_egos), rng.uniform(5 * mt, 20 * mt, n_egos), rng.uniform(-0.5 * mt, 0.5 * mt, n_egos)],
        0.0,
    )
    has_lead = cell != 5
    ego_id = 2 * np.arange(n_egos, dtype=np.int64) + 1
    lead_id = ego_id + 1
    frame = np.arange(n_egos, dtype=np.int64) // egos_per_frame
    lane = (np.arange(n_egos, dtype=np.int64) % egos_per_frame) + 1
    pos_ego = rng.uniform(0, 300, n_egos)
    ego_accel = rng.normal(0.0, 0.3, n_egos)

    ego_df = pd.DataFrame({"frame": frame, "id": ego_id, "lane": lane, "pos": pos_ego, "speed": v_ego,
                           "accel": ego_accel, "preceding": np.where(has_lead, lead_id, 0), "length": LEAD_LENGTH})
    lead_df = pd.DataFrame({"frame": frame, "id": lead_id, "lane": lane, "pos": pos_ego + gap + LEAD_LENGTH,
                            "speed": v_lead, "accel": accel, "preceding": 0, "length": LEAD_LENGTH})[has_lead]
    part_of = np.arange(n_egos) * n_recordings // n_egos
    recs = []
    for r in range(n_recordings):
        df = pd.concat([ego_df[part_of == r], lead_df[part_of[has_lead] == r]], ignore_index=True)
        recs.append(Recording(f"{r + 1:02d}", frame_rate, _sorted(df)))
    return recs


def convoy(gap: float, speed: float, length: float = LEAD_LENGTH, frames: int = 10, frame_rate: float = 25.0) -> Recording:
    """Two vehicles at equal speed, vehicle 2 following vehicle 1 at ``gap`` metres."""
    rows = []
    for f in range(frames):
        x1 = 100.0 + speed * f / frame_rate
        rows.append((f, 1, 1, x1, speed, 0.0, 0, length))
        rows.append((f, 2, 1, x1 - length - gap, speed, 0.0, 1, length))
    df = pd.DataFrame(rows, columns=["frame", "id", "lane", "pos", "speed", "accel", "preceding", "length"])
    return Recording("convoy", frame_rate, _sorted(df))
