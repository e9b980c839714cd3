"""Drifting per-node clocks and beacon guard sizing.

Each node timestamps with a crystal-driven tick counter (32.768 kHz by
default). A constant frequency error in ppm stretches or shrinks every
tick by the same amount, so local time is an affine map of the tick
count. Resynchronization re-anchors that map on a received beacon; the
grid phase is kept (the crystal never stops), so the residual alignment
error is the sub-tick wait for the next counter edge, always less than
one local tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

DEFAULT_TICK_RATE_HZ = 32768

#: Snap tolerance, in ticks, when locating the next tick edge. Protects
#: instants that are mathematically on an edge from float rounding noise
#: (sub-picosecond at hour-long runs); far below any physical effect in
#: the model (1e-6 tick = ~30 picoseconds).
_EDGE_SNAP_TICKS = 1e-6


@dataclass(frozen=True)
class VirtualClock:
    """Affine map from a node's tick counter to global simulation time.

    ``anchor_tick`` is a counter value whose global instant
    ``epoch_global`` is known (from the last resync, or the scenario
    start). ``drift_ppm`` is the constant crystal frequency error:
    positive runs slow (each local tick is longer than nominal).
    """

    tick_rate_hz: int = DEFAULT_TICK_RATE_HZ
    drift_ppm: float = 0.0
    anchor_tick: int = 0
    epoch_global: float = 0.0

    def __post_init__(self) -> None:
        if self.tick_rate_hz <= 0:
            raise ValueError("tick rate must be positive")
        if abs(self.drift_ppm) > 500.0:
            raise ValueError(f"drift of {self.drift_ppm} ppm outside the +/-500 ppm model range")


@dataclass(frozen=True)
class GuardConfig:
    """Beacon listening guard policy.

    ``base_guard`` is the full guard time T_g in seconds (the receive
    window opens T_g/2 early and stays T_g/2 late). After each missed
    beacon the effective guard is multiplied by ``widen_factor``;
    ``max_misses`` consecutive misses declare the node desynchronized.
    """

    base_guard: float
    widen_factor: float = 2.0
    max_misses: int = 4

    def __post_init__(self) -> None:
        if self.base_guard <= 0:
            raise ValueError("guard time must be positive")
        if self.widen_factor < 1.0:
            raise ValueError("widen factor below 1 would shrink the window on a miss")
        if self.max_misses < 1:
            raise ValueError("need at least one tolerated miss")


def local_tick_duration(clock: VirtualClock) -> float:
    """Length of one of this node's ticks in global seconds."""
    return (1.0 / clock.tick_rate_hz) * (1.0 + clock.drift_ppm * 1e-6)


def ticks_to_global(clock: VirtualClock, tick: int) -> float:
    """Global instant at which the node's counter reaches ``tick``.

    Only defined from the anchor onward; the affine map is not valid
    across a resync boundary in the past.
    """
    if tick < clock.anchor_tick:
        raise ValueError(f"tick {tick} precedes the clock anchor {clock.anchor_tick}")
    return clock.epoch_global + (tick - clock.anchor_tick) * local_tick_duration(clock)


def next_tick_edge(clock: VirtualClock, t_global: float) -> float:
    """Global instant of the first tick edge at or after ``t_global``.

    The edge grid extends the anchored map in both directions (the
    crystal was already running before the anchor).
    """
    dt = local_tick_duration(clock)
    n = math.ceil((t_global - clock.epoch_global) / dt - _EDGE_SNAP_TICKS)
    return clock.epoch_global + n * dt


def resync(clock: VirtualClock, beacon_ref_global: float, expected_local_tick: int) -> VirtualClock:
    """Re-anchor the clock on a decoded beacon.

    ``beacon_ref_global`` is the slot-start reference the receiver
    reconstructs from the decode instant (decode end minus beacon
    airtime minus the intra-slot transmit offset). The counter cannot
    restart mid-tick, so ``expected_local_tick`` is pinned to the first
    edge of the existing grid at or after the reference; the leftover is
    the quantization residual, in [0, one local tick).
    """
    edge = next_tick_edge(clock, beacon_ref_global)
    return replace(clock, anchor_tick=expected_local_tick, epoch_global=edge)


def min_guard(relative_drift_ppm: float, frame_seconds: float) -> float:
    """Smallest guard time T_g that keeps a beacon inside the window.

    Between two resyncs a child's frame-start estimate slides by at most
    (relative drift) * T_F against its parent, and the window must cover
    that slide on either side: T_g / 2 >= drift * T_F.
    """
    if relative_drift_ppm < 0:
        raise ValueError("relative drift is a magnitude, cannot be negative")
    if frame_seconds <= 0:
        raise ValueError("frame time must be positive")
    return 2.0 * relative_drift_ppm * 1e-6 * frame_seconds
