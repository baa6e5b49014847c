"""JSON helpers: complex numbers travel as [re, im] pairs throughout."""

from __future__ import annotations

import numpy as np


def c_to_json(z):
    z = complex(z)
    return [z.real, z.imag]


def json_to_c(v) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(v[0], v[1])
    raise ValueError(f"not a complex value: {v!r}")


def cseq_to_json(seq):
    return [c_to_json(z) for z in np.asarray(seq).ravel()]


def json_to_cseq(seq):
    return np.array([json_to_c(v) for v in seq], dtype=complex)


def fmt_float(x: float) -> str:
    """Deterministic shortest round-trip float formatting for CSV output."""
    return format(float(x), ".17g")
