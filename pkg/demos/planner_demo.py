"""Dimensioning walk-through for a small collection network.

Given a target application period and node count, pick (k, N), check
the regulatory duty limit, and predict leaf power draw.

Run: python3 demos/planner_demo.py
"""

from __future__ import annotations

from lorahop import (
    PlanError,
    PowerProfile,
    app_period,
    duty_cycle_estimate,
    lorawan_time_on_air,
    mean_power,
    min_app_period,
    min_guard,
    recommend_frame,
    time_on_air,
)

T_SLOT = 21281 / 32768


def main() -> None:
    n = 4
    target = 234.0  # seconds between samples from each sensor
    k, slots = recommend_frame(target, n, T_SLOT, max_slots=90)
    t_frame = slots * T_SLOT
    t_app = app_period(k, slots, T_SLOT)
    print(f"{n} nodes, {target:.0f} s target period")
    print(f"  -> k = {k} frames per period, N = {slots} slots per frame")
    print(f"  frame {t_frame:.3f} s, realized period {t_app:.3f} s")
    print()

    t_ack, t_bcn = time_on_air(2), time_on_air(3)
    t_lw = lorawan_time_on_air(24)
    t_hop = time_on_air(24 + 5)
    relay = duty_cycle_estimate(n - 1, k, 1, t_app, t_ack, t_lw, t_bcn)
    leaf = duty_cycle_estimate(0, k, 1, t_app, t_ack, t_hop, t_bcn)
    print(f"  relay duty {relay * 100:.3f} %, leaf duty {leaf * 100:.3f} % "
          "(EU limit 1 %)")
    floor = min_app_period(n - 1, k, 1, 0.01, t_ack, t_lw, t_bcn)
    print(f"  shortest legal period for this relay: {floor:.1f} s")
    print()

    prof = PowerProfile(p_sleep=1e-5, p_rx=0.036, p_tx=0.120, p_app=0.030, tau_app=1.0)
    p = mean_power(prof, t_bcn, T_SLOT, slots, k, relative_drift_ppm=10.0)
    print(f"  predicted leaf mean power {p * 1e3:.4f} mW "
          f"(~{p * 24 * 365 / 3.7 * 1e3:.0f} mAh/yr at 3.7 V)")
    print(f"  guard time needed at 10 ppm relative drift: "
          f"{min_guard(10.0, t_frame) * 1e3:.3f} ms")
    print()

    # Same target with too many nodes for the collection factor.
    try:
        recommend_frame(2.0, 5, T_SLOT, max_slots=90)
    except PlanError as e:
        print(f"  5 nodes at a 2 s period: infeasible ({e.constraint}: {e})")


if __name__ == "__main__":
    main()
