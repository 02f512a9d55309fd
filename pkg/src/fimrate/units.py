"""dBm/watt conversions (used only at configuration and report boundaries)."""

import math


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((float(dbm) - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    if not watts > 0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * math.log10(float(watts)) + 30.0
