"""Analytical dimensioning of a TDMA multi-hop LoRa network.

Closed-form relations between the frame layout (N slots, beacon period
k), the application period, per-node duty cycle, and mean power draw.
These are the planning-time counterparts of what the simulator measures;
`tests` assert the two agree.

Conventions: ``m_i`` is the number of descendants whose traffic node i
relays (0 for a leaf, n-1 for the relay root). The relay's own data
transmission is the LoRaWAN uplink, so its data airtime argument should
be the LoRaWAN one; every other node uses the in-network data airtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class PlanError(Exception):
    """A requested plan violates a hard constraint.

    ``constraint`` names the binding one: "capacity" (Eq. n <= k),
    "duty-cycle", or "period" (application period below the n-node
    floor).
    """

    def __init__(self, constraint: str, message: str) -> None:
        super().__init__(message)
        self.constraint = constraint


@dataclass(frozen=True)
class PowerProfile:
    """Device power draw per radio/application state, in watts.

    ``p_app`` is the extra draw while the sensing application runs for
    ``tau_app`` seconds per application period.
    """

    p_sleep: float
    p_rx: float
    p_tx: float
    p_app: float = 0.0
    tau_app: float = 0.0

    def __post_init__(self) -> None:
        if self.p_sleep < 0:
            raise ValueError("sleep power cannot be negative")
        if self.p_rx < self.p_sleep or self.p_tx < self.p_sleep:
            raise ValueError("active power below sleep power")
        if self.tau_app < 0:
            raise ValueError("application run time cannot be negative")


@dataclass(frozen=True)
class NetworkPlan:
    """Result of dimensioning one deployment."""

    n: int
    k: int
    slots_per_frame: int
    slot_seconds: float
    channels: int = 1
    frame_seconds: float = 0.0
    app_period_seconds: float = 0.0
    duty_cycles: dict[int, float] = field(default_factory=dict)
    mean_power_w: float | None = None
    feasible: bool = True

    def __post_init__(self) -> None:
        frame = self.slots_per_frame * self.slot_seconds
        if self.frame_seconds == 0.0:
            object.__setattr__(self, "frame_seconds", frame)
        if self.app_period_seconds == 0.0:
            object.__setattr__(self, "app_period_seconds", self.k * frame)
        if not math.isclose(self.app_period_seconds, self.k * frame, rel_tol=1e-9):
            raise ValueError("app period inconsistent with k*N*T_SL")
        if self.feasible and self.n > self.k:
            raise ValueError("plan marked feasible with n > k")


def app_period(k: int, slots_per_frame: int, slot_seconds: float) -> float:
    """Application period T_app = k * N * T_SL.

    Every node gets one uplink opportunity per frame and samples every
    k-th frame, so only the product k*N matters for the period.
    """
    if k < 1 or slots_per_frame < 1:
        raise ValueError("k and N must be at least 1")
    if slot_seconds <= 0:
        raise ValueError("slot time must be positive")
    return k * slots_per_frame * slot_seconds


def mean_power(
    profile: PowerProfile,
    t_beacon: float,
    slot_seconds: float,
    slots_per_frame: int,
    k: int,
    relative_drift_ppm: float,
) -> float:
    """Predicted mean power of a synchronized non-relay node.

    Sleep baseline, plus one beacon received and one transmitted per
    frame, plus the guard listening margin (the window must absorb a
    relative clock slide of up to drift * T_F on each side), plus the
    application burst once per k frames:

        P = P_s
          + (P_Rx + P_Tx - 2 P_s) * T_bcn / (N * T_SL)
          + (P_Rx - P_s) * 2 * drift
          + (P_app - P_s) * tau_app / (k * N * T_SL)
    """
    if t_beacon <= 0 or slot_seconds <= 0:
        raise ValueError("durations must be positive")
    if slots_per_frame < 1 or k < 1:
        raise ValueError("k and N must be at least 1")
    frame = slots_per_frame * slot_seconds
    drift = relative_drift_ppm * 1e-6
    p = profile.p_sleep
    p += (profile.p_rx + profile.p_tx - 2.0 * profile.p_sleep) * t_beacon / frame
    p += (profile.p_rx - profile.p_sleep) * 2.0 * drift
    p += (profile.p_app - profile.p_sleep) * profile.tau_app / (k * frame)
    return p


def check_capacity(n: int, k: int) -> bool:
    """Each node needs one beacon slot group per application period: n <= k."""
    if n < 1 or k < 1:
        raise ValueError("n and k must be at least 1")
    return n <= k


def duty_cycle_estimate(
    m_i: int,
    k: int,
    c: int,
    t_app: float,
    t_ack: float,
    t_data: float,
    t_bcn: float,
) -> float:
    """Transmit duty cycle of a node relaying m_i descendants.

    Per application period the node sends m_i acks, its own plus m_i
    forwarded data packets, and k beacons, spread over c channels:

        D = (m_i * T_ack + (1 + m_i) * T_data + k * T_bcn) / (T_app * c)
    """
    if m_i < 0:
        raise ValueError("descendant count cannot be negative")
    if c < 1:
        raise ValueError("need at least one channel")
    if t_app <= 0:
        raise ValueError("application period must be positive")
    return (m_i * t_ack + (1 + m_i) * t_data + k * t_bcn) / (t_app * c)


def min_app_period(
    m_i: int,
    k: int,
    c: int,
    duty_limit: float,
    t_ack: float,
    t_data: float,
    t_bcn: float,
    n: int | None = None,
    frame_seconds: float | None = None,
) -> float:
    """Shortest application period a node can sustain.

    The regulatory bound rearranges the duty-cycle formula around the
    limit; if the node count and frame time are supplied, the capacity
    floor n * T_F applies too and the larger of the two wins.
    """
    if not 0 < duty_limit <= 1:
        raise ValueError("duty limit must be in (0, 1]")
    airtime = m_i * t_ack + (1 + m_i) * t_data + k * t_bcn
    bound = airtime / (duty_limit * c)
    if n is not None:
        if frame_seconds is None or frame_seconds <= 0:
            raise ValueError("capacity floor needs a positive frame time")
        bound = max(bound, n * frame_seconds)
    return bound


def recommend_frame(
    t_app_target: float, n: int, slot_seconds: float, max_slots: int
) -> tuple[int, int]:
    """Pick (k, N) for a target application period and node count.

    Energy falls with larger N at fixed k*N (the beacon and app terms of
    the power model scale with 1/(N*T_SL)), so the search starts from
    the largest N the target period admits at k = n and walks down until
    the rounded k = T_app / (N * T_SL) reaches n. Capping the start at
    the target keeps the realized period from overshooting by more than
    rounding requires.
    """
    if n < 1 or max_slots < 1:
        raise ValueError("node and slot counts must be at least 1")
    if slot_seconds <= 0:
        raise ValueError("slot time must be positive")
    if t_app_target < n * slot_seconds:
        raise PlanError(
            "period",
            f"target period {t_app_target:.3f} s cannot admit {n} node(s): "
            f"needs at least n*T_SL = {n * slot_seconds:.3f} s",
        )
    start = min(max_slots, math.floor(t_app_target / (n * slot_seconds) + 0.5))
    for slots in range(max(start, 1), 0, -1):
        k = math.floor(t_app_target / (slots * slot_seconds) + 0.5)
        if k >= n:
            return k, slots
    raise PlanError(
        "capacity",
        f"no (k, N) with k >= n = {n} exists within max_N = {max_slots}",
    )
