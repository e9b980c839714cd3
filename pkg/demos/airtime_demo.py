"""Airtime tour: how payload size and spreading factor set the TDMA budget.

Run: python3 demos/airtime_demo.py
"""

from __future__ import annotations

from lorahop import RadioParams, lorawan_time_on_air, symbol_time, time_on_air


def main() -> None:
    default = RadioParams()
    print(f"symbol time at SF{default.spreading_factor}/125 kHz: "
          f"{symbol_time() * 1e3:.3f} ms")
    print()

    print("payload sweep at SF9 (the protocol's on-air sizes):")
    for label, size in [
        ("ack", 2),
        ("beacon", 3),
        ("24 B data + 5 B MAC header", 29),
        ("24 B data + 12 B LoRaWAN overhead", 36),
        ("largest hop packet", 64),
    ]:
        print(f"  {label:36s} {size:3d} B  {time_on_air(size) * 1e3:8.3f} ms")
    print()

    # The slot anatomy must fit the worst-case exchange; airtime scales
    # roughly 4x per 2 SF steps, which is why the slot is dimensioned
    # for one SF up front.
    print("36 B packet across spreading factors:")
    for sf in range(7, 13):
        p = RadioParams(spreading_factor=sf, low_data_rate_opt=sf >= 11)
        print(f"  SF{sf:2d}  {time_on_air(36, p) * 1e3:9.3f} ms")
    print()

    print(f"lorawan_time_on_air(24) = {lorawan_time_on_air(24) * 1e3:.3f} ms "
          "(the relay's uplink per collected sample)")


if __name__ == "__main__":
    main()
