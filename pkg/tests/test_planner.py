"""Dimensioning equations: duty cycle, mean power, frame recommendation."""

from __future__ import annotations

import pytest

from lorahop import (
    PlanError,
    PowerProfile,
    app_period,
    check_capacity,
    duty_cycle_estimate,
    mean_power,
    min_app_period,
    recommend_frame,
)

T_SLOT = 21281 / 32768  # 0.649444580078125 s
T_BCN = 0.103424
T_ACK = 0.103424
T_DATA_HOP = 0.226304  # 24 B app payload + 5 B MAC header at SF9
T_DATA_LW = 0.267264  # 24 B + 12 B LoRaWAN overhead


def test_app_period_value():
    assert app_period(4, 90, T_SLOT) == pytest.approx(233.800048828125, abs=0.0)


def test_app_period_depends_only_on_product():
    assert app_period(1, 360, T_SLOT) == app_period(2, 180, T_SLOT) == app_period(4, 90, T_SLOT)


def test_app_period_validation():
    with pytest.raises(ValueError):
        app_period(0, 90, T_SLOT)
    with pytest.raises(ValueError):
        app_period(4, 90, 0.0)


T_APP = 4 * 90 * T_SLOT  # 233.800048828125 s


def test_duty_cycle_leaf():
    # Leaf with no descendants: one data packet plus k beacons per period.
    d = duty_cycle_estimate(0, 4, 1, T_APP, T_ACK, T_DATA_HOP, T_BCN)
    assert d == pytest.approx(0.0027373823781009403, rel=1e-5)
    assert d == pytest.approx((T_DATA_HOP + 4 * T_BCN) / T_APP, rel=1e-12)


def test_duty_cycle_relay_three_children():
    d = duty_cycle_estimate(3, 4, 1, T_APP, T_ACK, T_DATA_LW, T_BCN)
    assert d == pytest.approx(0.007669050470487595, rel=1e-5)
    assert d == pytest.approx((3 * T_ACK + 4 * T_DATA_LW + 4 * T_BCN) / T_APP, rel=1e-12)


def test_duty_cycle_channels_divide():
    one = duty_cycle_estimate(3, 4, 1, T_APP, T_ACK, T_DATA_LW, T_BCN)
    two = duty_cycle_estimate(3, 4, 2, T_APP, T_ACK, T_DATA_LW, T_BCN)
    assert two == pytest.approx(one / 2, rel=1e-12)


def test_duty_cycle_affine_in_descendants():
    ds = [duty_cycle_estimate(m, 4, 1, T_APP, T_ACK, T_DATA_LW, T_BCN) for m in (0, 1, 2, 3)]
    diffs = [b - a for a, b in zip(ds, ds[1:])]
    assert diffs[0] == pytest.approx(diffs[1], rel=1e-9)
    assert diffs[1] == pytest.approx(diffs[2], rel=1e-9)
    assert diffs[0] == pytest.approx((T_ACK + T_DATA_LW) / T_APP, rel=1e-12)


def test_duty_cycle_validation():
    with pytest.raises(ValueError):
        duty_cycle_estimate(-1, 4, 1, 233.8, T_ACK, T_DATA_LW, T_BCN)
    with pytest.raises(ValueError):
        duty_cycle_estimate(0, 4, 0, 233.8, T_ACK, T_DATA_LW, T_BCN)
    with pytest.raises(ValueError):
        duty_cycle_estimate(0, 4, 1, 0.0, T_ACK, T_DATA_LW, T_BCN)


def test_min_app_period_inverts_duty():
    # At exactly the returned period, the duty cycle equals the limit.
    t = min_app_period(3, 4, 1, 0.01, T_ACK, T_DATA_LW, T_BCN)
    assert t == pytest.approx(179.3024, rel=1e-12)
    assert duty_cycle_estimate(3, 4, 1, t, T_ACK, T_DATA_LW, T_BCN) == pytest.approx(0.01)


def test_min_app_period_capacity_floor():
    t_frame = 90 * T_SLOT
    # With the 1% limit slack, n frames of capacity dominate.
    t = min_app_period(0, 1, 1, 0.01, T_ACK, T_DATA_HOP, T_BCN, n=4, frame_seconds=t_frame)
    assert t == pytest.approx(4 * t_frame)
    with pytest.raises(ValueError):
        min_app_period(0, 1, 1, 0.01, T_ACK, T_DATA_HOP, T_BCN, n=4)
    with pytest.raises(ValueError):
        min_app_period(0, 1, 1, 0.0, T_ACK, T_DATA_HOP, T_BCN)


PROFILE = PowerProfile(p_sleep=1e-5, p_rx=0.036, p_tx=0.120, p_app=0.030, tau_app=1.0)


def test_mean_power_reference_profile():
    p = mean_power(PROFILE, T_BCN, T_SLOT, 90, 4, 10.0)
    assert p == pytest.approx(0.0004149893518652251, rel=1e-5)
    t_frame = 90 * T_SLOT
    expect = (
        PROFILE.p_sleep
        + (PROFILE.p_rx + PROFILE.p_tx - 2 * PROFILE.p_sleep) * T_BCN / t_frame
        + (PROFILE.p_rx - PROFILE.p_sleep) * 2 * 10e-6
        + (PROFILE.p_app - PROFILE.p_sleep) * PROFILE.tau_app / (4 * t_frame)
    )
    assert p == pytest.approx(expect, rel=1e-12)


def test_mean_power_zero_cost_app():
    prof = PowerProfile(p_sleep=1e-5, p_rx=0.036, p_tx=0.120)
    p = mean_power(prof, T_BCN, T_SLOT, 90, 4, 10.0)
    assert p == pytest.approx(0.0002867174342193035, rel=1e-5)


def test_mean_power_drift_term():
    lo = mean_power(PROFILE, T_BCN, T_SLOT, 90, 4, 0.0)
    hi = mean_power(PROFILE, T_BCN, T_SLOT, 90, 4, 10.0)
    assert hi - lo == pytest.approx((PROFILE.p_rx - PROFILE.p_sleep) * 2 * 10e-6, rel=1e-12)


def test_check_capacity():
    assert check_capacity(4, 4)
    assert check_capacity(3, 4)
    assert not check_capacity(5, 4)
    with pytest.raises(ValueError):
        check_capacity(0, 4)


def test_recommend_frame_reference_deployment():
    # 234 s target with 4 nodes lands on the k=4, N=90 layout.
    assert recommend_frame(234.0, 4, T_SLOT, 90) == (4, 90)


def test_recommend_frame_prefers_large_n():
    # Doubling the slot budget halves k rather than shrinking the frame.
    assert recommend_frame(234.0, 2, T_SLOT, 180) == (2, 180)


def test_recommend_frame_capped_by_target():
    # Extra slot budget beyond the target period is left unused; the
    # realized period must not overshoot more than rounding requires.
    assert recommend_frame(234.0, 4, T_SLOT, 95) == (4, 90)


def test_recommend_frame_single_node():
    # One node, one frame per period: k stays at its floor of 1.
    assert recommend_frame(58.45, 1, T_SLOT, 90) == (1, 90)


def test_recommend_frame_rounding_fallback():
    # When rounding at the capped N leaves k < n, a shorter frame with a
    # proportionally larger k still meets the capacity constraint.
    k, slots = recommend_frame(1.51 * 4 * T_SLOT, 4, T_SLOT, 90)
    assert k >= 4
    assert slots == 1


def test_recommend_frame_infeasible():
    with pytest.raises(PlanError) as ei:
        recommend_frame(0.5, 4, T_SLOT, 90)
    assert ei.value.constraint == "period"


def test_power_profile_validation():
    with pytest.raises(ValueError):
        PowerProfile(p_sleep=-1.0, p_rx=0.036, p_tx=0.120)
