"""Canonical JSON helpers shared by the event log, HTTP API and scripts.

One serialization: lowerCamelCase field names, sorted keys, no whitespace,
fractions as exact "p/q" strings, timestamps as UTC milliseconds.
"""

from __future__ import annotations

import json
from fractions import Fraction


def canon_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canon_bytes(obj) -> bytes:
    return canon_dumps(obj).encode("utf-8")


def frac_str(f: Fraction) -> str:
    # str(Fraction) renders "3/5" and whole numbers as "3"
    return str(f)


def as_fraction(value) -> Fraction:
    """Accept ints, exact decimal floats/strings and "p/q" strings."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError("boolean is not a number")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        # decimal semantics: 0.1 means 1/10, not the binary float
        return Fraction(str(value))
    if isinstance(value, str):
        return Fraction(value)
    raise ValueError(f"cannot interpret {value!r} as a rational")
