"""Parsers for option values.

These can be used as `from_toml` in [`Entry`][circulon.base.Entry] or as
`inner_from_toml` in [`TupleEntry`][circulon.collections.TupleEntry].
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict

# scale of each unit relative to the reference unit of its dimension
_DIMENSIONS: Dict[str, Dict[str, float]] = {
    "field": {"V/cm": 1.0, "mV/cm": 1e-3, "uV/cm": 1e-6, "μV/cm": 1e-6},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "μs": 1e-6, "ns": 1e-9, "ps": 1e-12},
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
}

_QUANTITY = re.compile(r"^\s*([-+0-9.eE]+)\s*(\S*)\s*$")

U64_MAX = 2**64 - 1


def _dimension(unit: str) -> str:
    for dim, scales in _DIMENSIONS.items():
        if unit in scales:
            return dim
    raise ValueError(f"unknown unit {unit!r}")


@dataclass(frozen=True)
class QuantityParser:
    """Parse a physical quantity expressed in a given unit.

    Numbers are taken as already expressed in `unit`. Strings may carry a
    unit of the same dimension, e.g. `"2346 mV/cm"` for a `V/cm` option.

    Attributes:
        unit: unit the parsed value is expressed in.
    """

    unit: str

    def __post_init__(self) -> None:
        _dimension(self.unit)

    def __call__(self, arg: object) -> float:
        if isinstance(arg, bool):
            raise TypeError("a quantity cannot be a boolean")
        if isinstance(arg, (int, float)):
            return float(arg)
        if not isinstance(arg, str):
            raise TypeError(f"cannot parse a {arg.__class__} into a quantity")
        match = _QUANTITY.match(arg)
        if match is None:
            raise ValueError(f"{arg!r} is not a quantity")
        value = float(match.group(1))
        unit = match.group(2) or self.unit
        scales = _DIMENSIONS[_dimension(self.unit)]
        if unit not in scales:
            raise ValueError(f"{arg!r}: {unit} cannot be converted to {self.unit}")
        return value * scales[unit] / scales[self.unit]


def positive_int(arg: object) -> int:
    """Parse a strictly positive integer."""
    value = _int(arg)
    if value <= 0:
        raise ValueError(f"{arg} is not a positive integer")
    return value


def non_negative_int(arg: object) -> int:
    """Parse an integer greater or equal to zero."""
    value = _int(arg)
    if value < 0:
        raise ValueError(f"{arg} is negative")
    return value


def seed_parser(arg: object) -> int:
    """Parse a seed, an unsigned 64-bit integer."""
    value = non_negative_int(arg)
    if value > U64_MAX:
        raise ValueError(f"seed {arg} does not fit in 64 bits")
    return value


def _int(arg: object) -> int:
    if isinstance(arg, bool):
        raise TypeError("expected an integer, got a boolean")
    if isinstance(arg, int):
        return arg
    if isinstance(arg, float):
        if not arg.is_integer():
            raise ValueError(f"{arg} is not an integer")
        return int(arg)
    if isinstance(arg, str):
        return int(arg.strip())
    raise TypeError(f"cannot parse a {arg.__class__} into an integer")
