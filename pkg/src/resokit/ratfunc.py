"""Rational functions of one complex variable with exact differentiation.

Coefficients are constant-first, matching the JSON interchange format.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import polynomial as P


def _trim(c):
    c = np.atleast_1d(np.asarray(c, dtype=complex))
    return P.polytrim(c, tol=0.0)


class RationalFunction:
    """num(x) / den(x) with polynomial num, den."""

    def __init__(self, num, den=(1.0,)):
        self.num = _trim(num)
        self.den = _trim(den)
        if self.den.size == 1 and self.den[0] == 0:
            raise ValueError("zero denominator polynomial")

    @classmethod
    def const(cls, value):
        return cls([value])

    def __call__(self, x):
        return P.polyval(x, self.num) / P.polyval(x, self.den)

    def deriv(self) -> "RationalFunction":
        """Exact derivative (num' den - num den') / den^2."""
        n, d = self.num, self.den
        top = P.polysub(P.polymul(P.polyder(n), d), P.polymul(n, P.polyder(d)))
        return RationalFunction(top, P.polymul(d, d))

    def poles(self):
        if self.den.size < 2:
            return np.empty(0, dtype=complex)
        return P.polyroots(self.den)

    def is_constant(self) -> bool:
        return self.num.size == 1 and self.den.size == 1

    def to_spec(self) -> dict:
        from .serial import cseq_to_json
        return {"num": cseq_to_json(self.num), "den": cseq_to_json(self.den)}

    @classmethod
    def from_spec(cls, spec: dict) -> "RationalFunction":
        from .serial import json_to_cseq
        return cls(json_to_cseq(spec["num"]), json_to_cseq(spec.get("den", [1.0])))

    def __repr__(self):
        return f"RationalFunction(num={self.num.tolist()}, den={self.den.tolist()})"
