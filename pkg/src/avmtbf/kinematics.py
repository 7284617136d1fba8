"""Car-following collision kinematics.

Closed-form helpers for the longitudinal RSS safety distance, time-to-collision,
rear-end impact speed against a standing vehicle, and the false-alarm braking
scenario where a lead vehicle brakes for a limited time in front of a follower.
All speeds are m/s, distances m, accelerations are positive magnitudes in m/s².
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import ValidationError
from .units import kmh_to_ms


@dataclass(frozen=True)
class BrakingProfile:
    reaction_time: float = 0.5
    deceleration: float = 8.0

    def __post_init__(self):
        if self.reaction_time < 0:
            raise ValidationError("reaction_time must be >= 0")
        if self.deceleration <= 0:
            raise ValidationError("deceleration must be > 0")


@dataclass(frozen=True)
class RssParams:
    """Longitudinal RSS parameters.

    ``response_time`` is the rear vehicle's response time, ``max_accel`` the
    acceleration it may apply during that time, ``min_brake`` the braking it
    is guaranteed to apply afterwards and ``max_brake_front`` the strongest
    braking the front vehicle may apply.
    """

    response_time: float = 0.5
    max_accel: float = 2.0
    min_brake: float = 4.0
    max_brake_front: float = 8.0

    def __post_init__(self):
        for name in ("response_time", "max_accel", "min_brake", "max_brake_front"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"RSS parameter {name} must be > 0")

    @property
    def warnings(self) -> list[str]:
        if self.min_brake > self.max_brake_front:
            return ["min_brake exceeds max_brake_front; the RSS distance is optimistic"]
        return []


class SeverityClass(enum.Enum):
    S0 = 0
    S1 = 1
    S2 = 2
    S3 = 3

    @property
    def severe(self) -> bool:
        return self in (SeverityClass.S2, SeverityClass.S3)


@dataclass(frozen=True)
class SeverityThresholds:
    """Upper Δv bounds (km/h) of the severity bands.

    A band applies when Δv is strictly above the previous bound, so exactly
    30 km/h is still S1. Only the S1/S2 boundary is backed by accident data;
    the S0 and S3 boundaries are configuration.
    """

    s0_max_kmh: float = 10.0
    s1_max_kmh: float = 30.0
    s2_max_kmh: float = 50.0

    def __post_init__(self):
        if not (0 <= self.s0_max_kmh <= self.s1_max_kmh <= self.s2_max_kmh):
            raise ValidationError("severity thresholds must be non-decreasing and >= 0")


DEFAULT_THRESHOLDS = SeverityThresholds()


@dataclass(frozen=True)
class FollowState:
    v_rear: float
    v_front: float
    gap: float

    def __post_init__(self):
        if self.gap < 0:
            raise ValidationError("gap must be >= 0")
        if self.v_rear < 0 or self.v_front < 0:
            raise ValidationError("speeds must be >= 0")


def rss_longitudinal_distance(v_rear: float, v_front: float, params: RssParams = RssParams()) -> float:
    """Minimum safe longitudinal gap (m) for a rear vehicle behind a front vehicle."""
    rho = params.response_time
    v_resp = v_rear + rho * params.max_accel
    d = (
        v_rear * rho
        + 0.5 * params.max_accel * rho**2
        + v_resp**2 / (2.0 * params.min_brake)
        - v_front**2 / (2.0 * params.max_brake_front)
    )
    return max(0.0, d)


def stopping_distance(v: float, profile: BrakingProfile) -> float:
    return v * profile.reaction_time + v * v / (2.0 * profile.deceleration)


def impact_delta_v_standing(v_rear: float, gap: float, profile: BrakingProfile = BrakingProfile()) -> float:
    """Impact speed (m/s) of a braking vehicle hitting a standing obstacle.

    The vehicle travels at ``v_rear`` for the reaction time and then brakes.
    Returns 0 when it stops within ``gap``.
    """
    if v_rear < 0 or gap < 0:
        raise ValidationError("v_rear and gap must be >= 0")
    if v_rear == 0:
        return 0.0
    reaction_dist = v_rear * profile.reaction_time
    if gap <= reaction_dist:
        return v_rear
    remaining = gap - reaction_dist
    if remaining >= v_rear * v_rear / (2.0 * profile.deceleration):
        return 0.0
    return math.sqrt(max(0.0, v_rear * v_rear - 2.0 * profile.deceleration * remaining))


def ttc(state: FollowState, assumed_rear_accel: float = 2.0) -> float:
    """Time until the gap closes when the rear vehicle keeps accelerating.

    Smallest positive root of ``a/2 t² + (v_rear - v_front) t - gap = 0``;
    ``math.inf`` when the gap never closes.
    """
    if assumed_rear_accel < 0:
        raise ValidationError("assumed_rear_accel must be >= 0")
    return _ttc(state.gap, state.v_rear - state.v_front, assumed_rear_accel)


def _ttc(gap: float, closing: float, a: float) -> float:
    if gap <= 0:
        return 0.0 if (closing > 0 or a > 0) else math.inf
    if a == 0:
        return gap / closing if closing > 0 else math.inf
    # a > 0 and gap > 0: exactly one positive root; stable form avoids cancellation
    disc = closing * closing + 2.0 * a * gap
    if closing < 0:
        return (-closing + math.sqrt(disc)) / a
    denom = closing + math.sqrt(disc)
    return 2.0 * gap / denom if denom > 0 else math.inf  # denom == 0 only on underflow


def severity_from_delta_v(delta_v: float, thresholds: SeverityThresholds = DEFAULT_THRESHOLDS) -> SeverityClass:
    """Map an impact Δv (m/s) to an ISO 26262 style severity band."""
    if delta_v < 0:
        raise ValidationError("delta_v must be >= 0")
    if delta_v <= kmh_to_ms(thresholds.s0_max_kmh):
        return SeverityClass.S0
    if delta_v <= kmh_to_ms(thresholds.s1_max_kmh):
        return SeverityClass.S1
    if delta_v <= kmh_to_ms(thresholds.s2_max_kmh):
        return SeverityClass.S2
    return SeverityClass.S3


# --- false-alarm braking -----------------------------------------------------

@dataclass(frozen=True)
class _Phase:
    start: float
    accel: float  # signed


def _schedule(v0: float, phases: list[_Phase]) -> list[tuple[float, float, float]]:
    """Expand signed-acceleration phases into (t_start, v_start, accel) segments,
    inserting a standstill segment once the speed reaches zero."""
    segs: list[tuple[float, float, float]] = []
    v = v0
    for k, ph in enumerate(phases):
        end = phases[k + 1].start if k + 1 < len(phases) else math.inf
        if end <= ph.start:
            continue
        if v <= 0 and ph.accel <= 0:
            segs.append((ph.start, 0.0, 0.0))
            v = 0.0
            continue
        segs.append((ph.start, v, ph.accel))
        if ph.accel < 0:
            t_stop = ph.start + v / -ph.accel
            if t_stop < end:
                segs.append((t_stop, 0.0, 0.0))
                v = 0.0
                continue
        v = v + ph.accel * (end - ph.start) if math.isfinite(end) else v
    return segs


def _state_at(segs, t: float) -> tuple[float, float]:
    """Speed and acceleration in force at time t (t must not precede segs[0])."""
    cur = segs[0]
    for s in segs:
        if s[0] <= t:
            cur = s
        else:
            break
    t0, v0, a = cur
    return v0 + a * (t - t0), a


def false_alarm_delta_v(
    v_common: float,
    gap: float,
    brake_duration: float,
    lead_profile: BrakingProfile = BrakingProfile(),
    rear_profile: BrakingProfile = BrakingProfile(),
) -> float | None:
    """Relative impact speed (m/s) when a lead vehicle brakes on a false alarm.

    Both vehicles start at ``v_common``. The lead brakes with its profile's
    deceleration for ``brake_duration`` seconds and then holds whatever speed
    it reached. The rear vehicle starts braking after its reaction time and
    keeps braking until it stands still. Returns None when the vehicles never
    touch, which is distinct from a contact at Δv = 0.
    """
    if v_common < 0 or gap < 0 or brake_duration < 0:
        raise ValidationError("inputs must be >= 0")
    lead = _schedule(v_common, [_Phase(0.0, -lead_profile.deceleration), _Phase(brake_duration, 0.0)])
    rear = _schedule(v_common, [_Phase(0.0, 0.0), _Phase(rear_profile.reaction_time, -rear_profile.deceleration)])
    events = sorted({s[0] for s in lead} | {s[0] for s in rear})

    g = gap
    for k, t0 in enumerate(events):
        t1 = events[k + 1] if k + 1 < len(events) else math.inf
        vl, al = _state_at(lead, t0)
        vr, ar = _state_at(rear, t0)
        closing = vr - vl
        rel_acc = ar - al
        if g <= 0:
            return max(0.0, closing) if closing >= 0 else None
        tau = _first_root(g, closing, rel_acc, t1 - t0)
        if tau is not None:
            return closing + rel_acc * tau
        if math.isfinite(t1):
            dt = t1 - t0
            g -= closing * dt + 0.5 * rel_acc * dt * dt
    return None


def _first_root(gap: float, closing: float, rel_acc: float, horizon: float) -> float | None:
    """Smallest tau in (0, horizon] with closing*tau + rel_acc/2*tau² = gap."""
    if rel_acc == 0:
        if closing <= 0:
            return None
        tau = gap / closing
        return tau if tau <= horizon else None
    disc = closing * closing + 2.0 * rel_acc * gap
    if disc < 0:
        return None
    sq = math.sqrt(disc)
    roots = [r for r in ((-closing + sq) / rel_acc, (-closing - sq) / rel_acc) if r > 0]
    if not roots:
        return None
    tau = min(roots)
    return tau if tau <= horizon else None


def ttc_array(gap, v_rear, v_front, assumed_rear_accel: float = 2.0):
    """Vectorised :func:`ttc` over numpy arrays (same formula, same branches)."""
    import numpy as np

    gap = np.asarray(gap, dtype=float)
    closing = np.asarray(v_rear, dtype=float) - np.asarray(v_front, dtype=float)
    gap, closing = np.broadcast_arrays(gap, closing)
    a = float(assumed_rear_accel)
    if a < 0:
        raise ValidationError("assumed_rear_accel must be >= 0")
    out = np.full(gap.shape, np.inf)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if a == 0:
            pos = (gap > 0) & (closing > 0)
            out[pos] = gap[pos] / closing[pos]
        else:
            sq = np.sqrt(closing * closing + 2.0 * a * gap)
            pos = gap > 0
            fwd = pos & (closing >= 0)
            back = pos & (closing < 0)
            out[fwd] = 2.0 * gap[fwd] / (closing[fwd] + sq[fwd])
            out[back] = (-closing[back] + sq[back]) / a
    zero = gap <= 0
    out[zero & ((closing > 0) | (a > 0))] = 0.0
    return out


def false_alarm_severe_gap(
    v_common: float,
    brake_duration: float,
    lead_profile: BrakingProfile = BrakingProfile(),
    rear_profile: BrakingProfile = BrakingProfile(),
    thresholds: SeverityThresholds = DEFAULT_THRESHOLDS,
    tol: float = 1e-6,
) -> float | None:
    """Largest initial gap (m) at which a false alarm still causes a severe collision.

    Scans gaps up to the rear vehicle's stopping distance and bisects the last
    severe/non-severe switch. None when no gap gives a severe collision.
    """
    def severe(g):
        dv = false_alarm_delta_v(v_common, g, brake_duration, lead_profile, rear_profile)
        return dv is not None and severity_from_delta_v(dv, thresholds).severe

    hi = stopping_distance(v_common, rear_profile) + 1.0
    grid = [hi * k / 400 for k in range(401)]
    flags = [severe(g) for g in grid]
    if not any(flags):
        return None
    k = max(i for i, f in enumerate(flags) if f)
    if k == len(grid) - 1:
        return grid[-1]
    lo, up = grid[k], grid[k + 1]
    while up - lo > tol:
        mid = 0.5 * (lo + up)
        if severe(mid):
            lo = mid
        else:
            up = mid
    return lo
