import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avmtbf.errors import ValidationError
from avmtbf.kinematics import (
    BrakingProfile,
    FollowState,
    RssParams,
    SeverityClass,
    SeverityThresholds,
    false_alarm_delta_v,
    impact_delta_v_standing,
    rss_longitudinal_distance,
    severity_from_delta_v,
    stopping_distance,
    ttc,
)
from avmtbf.units import kmh_to_ms
from oracles import false_alarm_oracle, rss_distance_bruteforce, standing_impact_oracle

RSS = RssParams(response_time=0.5, max_accel=2.0, min_brake=4.0, max_brake_front=8.0)
PROFILE = BrakingProfile(reaction_time=0.5, deceleration=8.0)


def test_rss_distance_at_rest():
    assert rss_longitudinal_distance(0.0, 0.0, RSS) == pytest.approx(0.375)


def test_rss_distance_100kmh_standing_front():
    assert rss_longitudinal_distance(27.78, 0.0, RSS) == pytest.approx(117.68, abs=0.01)


def test_rss_distance_clamps_to_zero():
    assert rss_longitudinal_distance(0.0, 30.0, RSS) == 0.0


@pytest.mark.parametrize("v_rear,v_front", [(0, 0), (20, 10), (36.1, 0), (10, 30)])
def test_rss_distance_matches_simulated_stopping(v_rear, v_front):
    expected = rss_distance_bruteforce(v_rear, v_front, 0.5, 2.0, 4.0, 8.0)
    assert rss_longitudinal_distance(v_rear, v_front, RSS) == pytest.approx(expected, abs=1e-3)


@given(st.floats(0, 60), st.floats(0, 60), st.floats(0, 60))
def test_rss_distance_monotone(v_rear, v_front, dv):
    assert rss_longitudinal_distance(v_rear + dv, v_front, RSS) >= rss_longitudinal_distance(v_rear, v_front, RSS)
    assert rss_longitudinal_distance(v_rear, v_front + dv, RSS) <= rss_longitudinal_distance(v_rear, v_front, RSS)


def test_rss_params_flag_inverted_brakes():
    assert RssParams(min_brake=9.0, max_brake_front=8.0).warnings
    assert not RSS.warnings
    with pytest.raises(ValidationError):
        RssParams(response_time=0.0)


def test_impact_exact_stopping_boundary():
    v = 27.78
    gap = stopping_distance(v, PROFILE)
    assert gap == pytest.approx(62.12, abs=0.01)
    assert impact_delta_v_standing(v, gap, PROFILE) == 0.0


def test_impact_100kmh_30m():
    assert impact_delta_v_standing(27.78, 30.0, PROFILE) == pytest.approx(22.67, abs=0.01)
    assert standing_impact_oracle(27.78, 30.0, 0.5, 8.0) == pytest.approx(22.67, abs=0.01)


def test_impact_no_motion():
    assert impact_delta_v_standing(0.0, 5.0, PROFILE) == 0.0


def test_impact_inside_reaction_distance_is_full_speed():
    assert impact_delta_v_standing(36.11, 10.0, PROFILE) == 36.11


@settings(max_examples=200)
@given(st.floats(0, 60), st.floats(0, 200), st.floats(0, 50), st.floats(0, 30))
def test_impact_monotone(v, gap, dgap, dv):
    assert impact_delta_v_standing(v, gap + dgap, PROFILE) <= impact_delta_v_standing(v, gap, PROFILE)
    assert impact_delta_v_standing(v + dv, gap, PROFILE) >= impact_delta_v_standing(v, gap, PROFILE)


def test_impact_agrees_with_integrator_on_random_grid():
    rng = np.random.default_rng(11)
    for _ in range(100):
        v = rng.uniform(0, 50)
        gap = rng.uniform(0, 150)
        t_r = rng.integers(0, 1500) / 1000
        a = rng.uniform(3, 10)
        got = impact_delta_v_standing(v, gap, BrakingProfile(t_r, a))
        assert got == pytest.approx(standing_impact_oracle(v, gap, t_r, a), abs=0.05)


def test_ttc_examples():
    assert ttc(FollowState(20.0, 20.0, 25.0), 2.0) == pytest.approx(5.0)
    assert math.isinf(ttc(FollowState(20.0, 20.0, 25.0), 0.0))
    assert ttc(FollowState(30.0, 20.0, 50.0), 0.0) == pytest.approx(5.0)


def test_ttc_receding_with_acceleration():
    # 0.5*2*t² - 5t - 50 = 0 -> t = (5 + sqrt(25 + 200)) / 2 = 10
    assert ttc(FollowState(20.0, 25.0, 50.0), 2.0) == pytest.approx(10.0)


@given(st.floats(0, 60), st.floats(0, 60), st.floats(0, 5))
def test_ttc_zero_gap(v_rear, v_front, a):
    closing = v_rear > v_front or a > 0
    if closing:
        assert ttc(FollowState(v_rear, v_front, 0.0), a) == 0.0


# gap = 0 is excluded: touching means TTC 0 even when the rear is slower
@given(st.floats(0, 60), st.floats(0, 60), st.floats(0.1, 5), st.floats(1e-6, 100))
def test_ttc_continuous_in_gap(v_rear, v_front, a, gap):
    t1 = ttc(FollowState(v_rear, v_front, gap), a)
    t2 = ttc(FollowState(v_rear, v_front, gap + 1e-12), a)
    assert t2 >= t1
    assert t2 - t1 < 1e-4


def test_ttc_root_satisfies_equation():
    for vr, vf, gap, a in [(10, 30, 40, 2), (30, 10, 5, 0.5), (0, 0, 1, 2)]:
        t = ttc(FollowState(vr, vf, gap), a)
        assert 0.5 * a * t * t + (vr - vf) * t - gap == pytest.approx(0, abs=1e-9)


def test_severity_examples():
    assert severity_from_delta_v(9.72).severe
    assert severity_from_delta_v(0.0) is SeverityClass.S0
    assert not severity_from_delta_v(0.0).severe
    assert not severity_from_delta_v(kmh_to_ms(30.0)).severe


def test_severity_bands_are_configurable():
    th = SeverityThresholds(s0_max_kmh=5, s1_max_kmh=20, s2_max_kmh=40)
    assert severity_from_delta_v(kmh_to_ms(4), th) is SeverityClass.S0
    assert severity_from_delta_v(kmh_to_ms(10), th) is SeverityClass.S1
    assert severity_from_delta_v(kmh_to_ms(30), th) is SeverityClass.S2
    assert severity_from_delta_v(kmh_to_ms(45), th) is SeverityClass.S3


@pytest.mark.parametrize("cls", list(SeverityClass))
def test_severe_predicate(cls):
    assert cls.severe == (cls in (SeverityClass.S2, SeverityClass.S3))


@pytest.mark.parametrize("gap", [0.1, 1.0, 20.0, 150.0])
def test_false_alarm_no_braking_no_collision(gap):
    assert false_alarm_delta_v(36.11, gap, 0.0, PROFILE, PROFILE) is None


def test_false_alarm_large_gap_absorbs_transient():
    assert false_alarm_delta_v(36.11, 200.0, 0.2, PROFILE, PROFILE) is None
    assert false_alarm_oracle(36.11, 200.0, 0.2, 8.0, 0.5, 8.0) is None


@given(st.floats(0, 60), st.floats(0.01, 200), st.floats(0, 10), st.floats(1, 10))
def test_false_alarm_instant_mirror_never_collides(v, gap, duration, decel):
    p = BrakingProfile(0.0, decel)
    assert false_alarm_delta_v(v, gap, duration, p, p) is None


def test_false_alarm_peak_closing_speed_closed_form():
    # with equal decelerations the closing speed peaks at decel * min(reaction, duration)
    dv = false_alarm_delta_v(36.11, 0.5, 1.0, PROFILE, PROFILE)
    assert dv is not None
    assert dv <= 8.0 * 0.5 + 1e-12
    assert false_alarm_delta_v(36.11, 3.0, 1.0, PROFILE, PROFILE) == pytest.approx(4.0)


def test_false_alarm_closing_distance_limit():
    # closing distance is 0.5*a*t_r² + a*t_r*(T - t_r) + 0.5*a*t_r² = a*t_r*T = 4 m
    assert false_alarm_delta_v(36.11, 3.999, 1.0, PROFILE, PROFILE) is not None
    assert false_alarm_delta_v(36.11, 4.001, 1.0, PROFILE, PROFILE) is None


def test_false_alarm_lead_brakes_to_standstill():
    # lead stops after 4.5 s and stays; a slow-reacting follower hits it
    slow = BrakingProfile(reaction_time=3.0, deceleration=8.0)
    got = false_alarm_delta_v(36.11, 20.0, 10.0, PROFILE, slow)
    want = false_alarm_oracle(36.11, 20.0, 10.0, 8.0, 3.0, 8.0)
    assert got == pytest.approx(want, abs=0.05)
    assert severity_from_delta_v(got).severe


def test_false_alarm_agrees_with_integrator():
    rng = np.random.default_rng(5)
    for _ in range(60):
        v = rng.uniform(5, 45)
        gap = rng.uniform(0.1, 60)
        dur = rng.integers(0, 4000) / 1000
        lead_a = rng.uniform(3, 10)
        t_r = rng.integers(0, 2500) / 1000
        rear_a = rng.uniform(3, 10)
        got = false_alarm_delta_v(v, gap, dur, BrakingProfile(0.5, lead_a), BrakingProfile(t_r, rear_a))
        want = false_alarm_oracle(v, gap, dur, lead_a, t_r, rear_a)
        assert (got or 0.0) == pytest.approx(want or 0.0, abs=0.05)


def test_invalid_inputs():
    with pytest.raises(ValidationError):
        BrakingProfile(-1.0, 8.0)
    with pytest.raises(ValidationError):
        FollowState(10, 10, -1)
    with pytest.raises(ValidationError):
        severity_from_delta_v(-1.0)


def test_severe_gap_boundary_against_oracle():
    from avmtbf.kinematics import false_alarm_severe_gap

    v = kmh_to_ms(130)
    slow_rear = BrakingProfile(reaction_time=3.0, deceleration=8.0)
    g = false_alarm_severe_gap(v, 2.0, BrakingProfile(), slow_rear)
    assert g is not None and g > 0
    severe = kmh_to_ms(30)
    inside = false_alarm_oracle(v, g - 0.05, 2.0, 8.0, 3.0, 8.0)
    outside = false_alarm_oracle(v, g + 0.05, 2.0, 8.0, 3.0, 8.0)
    assert inside is not None and inside > severe
    assert outside is None or outside <= severe


def test_severe_gap_none_when_rear_reacts_fast():
    from avmtbf.kinematics import false_alarm_severe_gap

    # closing speed tops out at deceleration * reaction time = 4 m/s
    assert false_alarm_severe_gap(kmh_to_ms(130), 1.0) is None
