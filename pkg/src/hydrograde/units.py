"""Unit parsing for config files.

Internally everything is SI: Pa, m, m/s, m**3/s, rad. Config files may
write quantities as strings with a unit suffix ("350 bar", "120 L/min",
"35 deg"); bare numbers are taken as SI.
"""

from __future__ import annotations

import math

# factor to SI per accepted suffix
_FACTORS = {
    "pa": 1.0,
    "kpa": 1e3,
    "mpa": 1e6,
    "bar": 1e5,
    "m": 1.0,
    "mm": 1e-3,
    "cm": 1e-2,
    "m/s": 1.0,
    "mm/s": 1e-3,
    "m3/s": 1.0,
    "m^3/s": 1.0,
    "l/min": 1e-3 / 60.0,
    "l/s": 1e-3,
    "rad": 1.0,
    "deg": math.pi / 180.0,
    "rad/s": 1.0,
    "deg/s": math.pi / 180.0,
    "s": 1.0,
    "ms": 1e-3,
    "kg": 1.0,
    "t": 1e3,
    "m2": 1.0,
    "m^2": 1.0,
    "cm2": 1e-4,
    "cm^2": 1e-4,
    "n": 1.0,
    "kn": 1e3,
}


def quantity(value, default_unit: str | None = None) -> float:
    """Convert a config value to SI.

    Accepts a plain number (returned as float) or a string "NUMBER UNIT".
    `default_unit` is only used to sanity-check that a unit string belongs
    to the same dimension family; it does not rescale bare numbers.
    """
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise TypeError(f"cannot parse quantity from {value!r}")
    parts = value.strip().split()
    if len(parts) == 1:
        return float(parts[0])
    if len(parts) != 2:
        raise ValueError(f"malformed quantity {value!r}")
    num, unit = parts
    key = unit.lower()
    if key not in _FACTORS:
        raise ValueError(f"unknown unit {unit!r} in {value!r}")
    return float(num) * _FACTORS[key]
