"""Unit conversion and the speed-range partition.

Everything inside the package works in SI units (m/s, m, s) and rates per
hour. km/h only appears at I/O boundaries and goes through the helpers here.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Sequence

from .errors import ValidationError

KMH_PER_MS = 3.6
SECONDS_PER_HOUR = 3600.0


def kmh_to_ms(v_kmh: float) -> float:
    return v_kmh / KMH_PER_MS


def ms_to_kmh(v_ms: float) -> float:
    return v_ms * KMH_PER_MS


def hours_to_seconds(h: float) -> float:
    return h * SECONDS_PER_HOUR


def seconds_to_hours(s: float) -> float:
    return s / SECONDS_PER_HOUR


def format_inf(x: float) -> float | str:
    """JSON-safe number: infinity becomes the string ``"inf"``."""
    if math.isinf(x):
        return "inf"
    return x


def parse_inf(x: float | str) -> float:
    if isinstance(x, str):
        if x.strip().lower() == "inf":
            return math.inf
        raise ValidationError(f"expected a number or 'inf', got {x!r}")
    return float(x)


@dataclass(frozen=True)
class SpeedRangePartition:
    """Ordered, disjoint half-open speed ranges ``[lo, hi)`` in m/s."""

    boundaries: tuple[float, ...]

    def __post_init__(self):
        b = tuple(float(x) for x in self.boundaries)
        if len(b) < 2:
            raise ValidationError("a partition needs at least two boundaries")
        if any(not math.isfinite(x) for x in b):
            raise ValidationError("partition boundaries must be finite")
        if any(hi <= lo for lo, hi in zip(b, b[1:])):
            raise ValidationError(f"partition boundaries must be strictly increasing: {b}")
        object.__setattr__(self, "boundaries", b)

    @classmethod
    def from_kmh(cls, boundaries_kmh: Sequence[float]) -> "SpeedRangePartition":
        return cls(tuple(kmh_to_ms(v) for v in boundaries_kmh))

    @property
    def boundaries_kmh(self) -> tuple[float, ...]:
        return tuple(ms_to_kmh(v) for v in self.boundaries)

    def __len__(self) -> int:
        return len(self.boundaries) - 1

    def ranges(self) -> list[tuple[float, float]]:
        return list(zip(self.boundaries, self.boundaries[1:]))

    def labels(self) -> list[str]:
        return [f"{lo:g}-{hi:g} km/h" for lo, hi in zip(self.boundaries_kmh, self.boundaries_kmh[1:])]

    def index(self, speed: float) -> int | None:
        """Range index containing ``speed`` (m/s), or None when outside."""
        if not (self.boundaries[0] <= speed < self.boundaries[-1]):
            return None
        return bisect.bisect_right(self.boundaries, speed) - 1

    def indices(self, speeds):
        """Vectorised :meth:`index`; returns -1 for out-of-range speeds."""
        import numpy as np

        s = np.asarray(speeds, dtype=float)
        idx = np.searchsorted(self.boundaries, s, side="right") - 1
        inside = (s >= self.boundaries[0]) & (s < self.boundaries[-1])
        return np.where(inside, idx, -1)
