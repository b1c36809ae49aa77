"""Unit system and unit-string conversion.

Internal units used throughout the package:

=========  ===================  ================================
quantity   unit                 note
=========  ===================  ================================
length     nm
time       ps                   settings accept ``dt`` in fs
energy     zJ                   1 zJ = 1e-21 J
mass       yg (1e-27 kg)        consistent with zJ = yg nm^2/ps^2
=========  ===================  ================================
"""

from __future__ import annotations

import re

BOLTZMANN = 1.380649e-2  # zJ / K
FS_PER_PS = 1000.0

# factor converting one unit of the named kind into the internal unit
_TABLE: dict[str, dict[str, float]] = {
    "length": {"nm": 1.0, "angstrom": 0.1, "A": 0.1, "pm": 1e-3, "m": 1e9, "cm": 1e7},
    "time": {"ps": 1.0, "fs": 1e-3, "ns": 1e3, "s": 1e12},
    "energy": {"zJ": 1.0, "J": 1e21, "kJ/mol": 1e3 / 6.02214076e23 * 1e21, "K": BOLTZMANN},
    "mass": {"yg": 1.0, "kg": 1e27, "ag": 1e6, "amu": 1.66053906660},
    "diffusion": {"nm^2/ps": 1.0, "cm^2/s": 1e14 / 1e12, "m^2/s": 1e18 / 1e12, "A^2/ps": 1e-2},
    "temperature": {"K": 1.0},
    "number_density": {"nm^-3": 1.0, "1/nm^3": 1.0, "A^-3": 1e3, "1/A^3": 1e3},
}


class UnitError(ValueError):
    pass


def kinds() -> list[str]:
    return sorted(_TABLE)


def factor(unit: str, kind: str) -> float:
    """Multiplicative factor taking a value in ``unit`` to the internal unit of ``kind``."""
    try:
        table = _TABLE[kind]
    except KeyError:
        raise UnitError(f"unknown quantity kind {kind!r}") from None
    try:
        return table[unit.strip()]
    except KeyError:
        raise UnitError(
            f"unit {unit!r} is not a known {kind} unit (expected one of {sorted(table)})"
        ) from None


def convert(value: float, unit: str, kind: str) -> float:
    return value * factor(unit, kind)


_QUANTITY = re.compile(r"^\s*([-+0-9.eE]+)\s*(.*?)\s*$")


def parse_quantity(text: str | float | int, kind: str) -> float:
    """Parse ``"1.3e-5 cm^2/s"`` into an internal-unit float.

    Bare numbers are rejected: every dimensional config value states its unit.
    """
    if isinstance(text, (int, float)):
        raise UnitError(f"{kind} value {text!r} has no unit")
    m = _QUANTITY.match(text)
    if m is None or not m.group(2):
        raise UnitError(f"cannot read {kind} quantity {text!r}; write e.g. '1.0 {next(iter(_TABLE[kind]))}'")
    try:
        value = float(m.group(1))
    except ValueError:
        raise UnitError(f"cannot read number in {text!r}") from None
    return convert(value, m.group(2), kind)
