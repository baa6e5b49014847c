"""Base potentials of algebro-geometric type and their explicit solutions.

A base potential on the half line is

    q0(x) = lambda0 + sum_j s_j (s_j + 1) * pe(x - x_j)

where pe = xi'/xi^2 is built from xi(x) = x (rational case, period = inf) or
xi(x) = (p / 2 pi i) (exp(2 pi i x / p) - 1) (single period p). The poles x_j
must stay away from [0, inf). Solutions of the shifted equation

    -y'' + (q0 - lambda0) y = z^2 y

of plane-wave type are carried explicitly as

    psi0(z, x) = (z^g + r_{g-1}(xi(x)) z^{g-1} + ... + r_0(xi(x))) e^{izx}

with rational coefficient functions r_j of xi. All x-derivatives are exact:
xi' = 1 (rational) or xi' = 1 + (2 pi i / p) xi (periodic), and the r_j are
differentiated symbolically. The spectral parameter of every artifact in this
package is z for the lambda0-shifted equation; lambda0 is recorded alongside
so the original eigenvalue is z^2 + lambda0.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import PoleAt, ValidationFailure, XDependence
from .ratfunc import RationalFunction
from .serial import c_to_json, cseq_to_json, json_to_c, json_to_cseq

_TWO_PI_I = 2j * math.pi

# Poles closer than this to [0, inf) are rejected at construction time.
MIN_POLE_DISTANCE = 1e-6


def xi(x, period=math.inf):
    """Uniformizing coordinate: x itself, or the period-p exponential chart."""
    x = np.asarray(x, dtype=complex)
    if math.isinf(period):
        return x + 0.0
    return period / _TWO_PI_I * (np.exp(_TWO_PI_I * x / period) - 1.0)


def xi_prime(x, period=math.inf):
    x = np.asarray(x, dtype=complex)
    if math.isinf(period):
        return np.ones_like(x)
    return np.exp(_TWO_PI_I * x / period)


def xi_prime_of_xi(xi_val, period=math.inf):
    """xi' expressed through xi: 1 (rational) or 1 + (2 pi i / p) xi."""
    xi_val = np.asarray(xi_val, dtype=complex)
    if math.isinf(period):
        return np.ones_like(xi_val)
    return 1.0 + (_TWO_PI_I / period) * xi_val


def xi_second(x, period=math.inf):
    x = np.asarray(x, dtype=complex)
    if math.isinf(period):
        return np.zeros_like(x)
    return (_TWO_PI_I / period) * np.exp(_TWO_PI_I * x / period)


def pe(x, period=math.inf):
    """Building block xi'(x)/xi(x)^2; 1/x^2 in the rational case.

    Raises PoleAt when x sits on the pole lattice (xi vanishes there).
    """
    x = np.asarray(x, dtype=complex)
    xv = xi(x, period)
    scale = 1.0 if math.isinf(period) else abs(period)
    bad = np.abs(xv) < 1e-12 * scale
    if np.any(bad):
        raise PoleAt(np.asarray(x)[bad].ravel()[0])
    return xi_prime(x, period) / xv**2


class WronskianPoly:
    """The base Wronskian W(z) = Wr(psi0(z,.), psi0(-z,.)) as a polynomial.

    Odd, degree 2g+1; in the rational case W(z) = -2(iz)^{2g+1} exactly.
    """

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=complex)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(z, self.coeffs)

    def deriv_at(self, z, order=1):
        c = self.coeffs
        for _ in range(order):
            c = np.polynomial.polynomial.polyder(c)
        return complex(np.polynomial.polynomial.polyval(z, c)) if np.isscalar(z) \
            else np.polynomial.polynomial.polyval(z, c)

    def roots(self):
        c = np.trim_zeros(self.coeffs, "b")
        if len(c) <= 1:
            return np.empty(0, dtype=complex)
        return np.polynomial.polynomial.polyroots(c)

    def to_spec(self):
        return {"coeffs": cseq_to_json(self.coeffs)}

    @classmethod
    def from_spec(cls, spec):
        return cls(json_to_cseq(spec["coeffs"]))


class BasePotential:
    """Immutable description of a base potential plus its explicit solutions.

    Parameters
    ----------
    lambda0 : complex
        Constant offset of q0.
    period : float
        Period p, or math.inf for the rational case.
    poles : sequence of (location, s)
        Pole locations (complex, off the closed half line) and integer
        strengths s >= 1; each contributes s(s+1) pe(x - location).
    r : sequence of RationalFunction
        The g coefficient functions r_0 ... r_{g-1} of xi; genus g = len(r).
    """

    def __init__(self, lambda0=0.0, period=math.inf, poles=(), r=(), validate=True):
        self.lambda0 = complex(lambda0)
        self.period = float(period)
        self.poles = tuple((complex(loc), int(s)) for loc, s in poles)
        self.r = tuple(r)
        self.genus = len(self.r)
        self._r_d1 = tuple(f.deriv() for f in self.r)
        self._r_d2 = tuple(f.deriv() for f in self._r_d1)
        if validate:
            self.validate()

    # -- constructors -----------------------------------------------------

    @classmethod
    def free(cls, lambda0=0.0):
        """Genus 0: q0 = lambda0, psi0 = e^{izx}, W = -2iz."""
        return cls(lambda0=lambda0)

    @classmethod
    def rational_g1(cls, x0=-1.0, lambda0=0.0):
        """Genus 1 rational base q0 = lambda0 + 2/(x - x0)^2 with x0 < 0.

        psi0(z, x) = (z + i/(x - x0)) e^{izx}, W(z) = 2iz^3.
        """
        x0 = complex(x0)
        r0 = RationalFunction([1j], [-x0, 1.0])  # i / (xi - x0)
        return cls(lambda0=lambda0, poles=((x0, 1),), r=(r0,))

    # -- potential values --------------------------------------------------

    def q0_shifted(self, x):
        """q0(x) - lambda0 = sum s(s+1) pe(x - x_j)."""
        x = np.asarray(x, dtype=complex)
        total = np.zeros_like(x)
        for loc, s in self.poles:
            total = total + s * (s + 1) * pe(x - loc, self.period)
        return total

    def eval_q0(self, x):
        return self.lambda0 + self.q0_shifted(x)

    # -- explicit solutions ------------------------------------------------

    def correction_coefficients(self, x):
        """Stack [r_0(xi(x)), ..., r_{g-1}(xi(x)), 1] along a new first axis."""
        x = np.asarray(x, dtype=complex)
        xv = xi(x, self.period)
        rows = [f(xv) for f in self.r]
        rows.append(np.ones_like(xv))
        return np.stack([np.asarray(v, dtype=complex) for v in rows])

    def _q_polys(self, x):
        """Values of Q, dQ/dxi, d2Q/dxi2 coefficient stacks at xi(x)."""
        xv = xi(np.asarray(x, dtype=complex), self.period)
        q0 = [f(xv) for f in self.r] + [np.ones_like(xv)]
        q1 = [f(xv) for f in self._r_d1] + [np.zeros_like(xv)]
        q2 = [f(xv) for f in self._r_d2] + [np.zeros_like(xv)]
        return xv, q0, q1, q2

    @staticmethod
    def _zpowsum(coeff_rows, z):
        """sum_j coeff_rows[j] * z^j with broadcasting."""
        total = 0.0
        zp = np.ones_like(np.asarray(z, dtype=complex))
        for row in coeff_rows:
            total = total + row * zp
            zp = zp * z
        return total

    def psi0(self, z, x):
        z = np.asarray(z, dtype=complex)
        _, q0, _, _ = self._q_polys(x)
        return self._zpowsum(q0, z) * np.exp(1j * z * np.asarray(x, dtype=complex))

    def psi0_dx(self, z, x):
        z = np.asarray(z, dtype=complex)
        x = np.asarray(x, dtype=complex)
        xv, q0, q1, _ = self._q_polys(x)
        xp = xi_prime_of_xi(xv, self.period)
        Q = self._zpowsum(q0, z)
        Qxi = self._zpowsum(q1, z)
        return (Qxi * xp + 1j * z * Q) * np.exp(1j * z * x)

    def psi0_dxx(self, z, x):
        z = np.asarray(z, dtype=complex)
        x = np.asarray(x, dtype=complex)
        xv, q0, q1, q2 = self._q_polys(x)
        xp = xi_prime_of_xi(xv, self.period)
        xpp = xi_second(x, self.period)
        Q = self._zpowsum(q0, z)
        Qxi = self._zpowsum(q1, z)
        Qxixi = self._zpowsum(q2, z)
        bracket = Qxixi * xp**2 + Qxi * xpp + 2j * z * Qxi * xp - z**2 * Q
        return bracket * np.exp(1j * z * x)

    def psi0_dz(self, z, x):
        """d/dz psi0, used as initial data for Newton polish integrations."""
        z = np.asarray(z, dtype=complex)
        x = np.asarray(x, dtype=complex)
        _, q0, _, _ = self._q_polys(x)
        Q = self._zpowsum(q0, z)
        Qz = 0.0
        for j in range(1, len(q0)):
            Qz = Qz + j * q0[j] * z ** (j - 1)
        return (Qz + 1j * x * Q) * np.exp(1j * z * x)

    def psi0_dxdz(self, z, x):
        """d2/dx dz psi0, initial slope for the variational integration."""
        z = np.asarray(z, dtype=complex)
        x = np.asarray(x, dtype=complex)
        xv, q0, q1, _ = self._q_polys(x)
        xp = xi_prime_of_xi(xv, self.period)
        Q = self._zpowsum(q0, z)
        Qxi = self._zpowsum(q1, z)
        Qz = 0.0
        Qzxi = 0.0
        for j in range(1, len(q0)):
            Qz = Qz + j * q0[j] * z ** (j - 1)
            Qzxi = Qzxi + j * q1[j] * z ** (j - 1)
        bracket = (Qzxi * xp + 1j * Q + 1j * z * Qz
                   + 1j * x * (Qxi * xp + 1j * z * Q))
        return bracket * np.exp(1j * z * x)

    def equation_residual(self, z, x):
        """|-psi0'' + (q0 - lambda0) psi0 - z^2 psi0| at (z, x)."""
        lhs = -self.psi0_dxx(z, x) + self.q0_shifted(x) * self.psi0(z, x)
        return np.abs(lhs - np.asarray(z, dtype=complex) ** 2 * self.psi0(z, x))

    # -- Wronskian ----------------------------------------------------------

    def wronskian(self, z, x=0.0):
        """Wr(psi0(z,.), psi0(-z,.)) evaluated at x; x-independent in exact math."""
        z = np.asarray(z, dtype=complex)
        return (self.psi0(z, x) * self.psi0_dx(-z, x)
                - self.psi0(-z, x) * self.psi0_dx(z, x))

    def wronskian_poly(self, check_tol=1e-8) -> WronskianPoly:
        """Interpolate W as a polynomial of degree 2g+1 and check structure."""
        g = self.genus
        n = 2 * g + 2
        nodes = np.exp(2j * math.pi * (np.arange(n) + 0.37) / n)
        vals = np.array([self.wronskian(zk, x=0.0) for zk in nodes])
        vander = np.vander(nodes, n, increasing=True)
        coeffs = np.linalg.solve(vander, vals)
        scale = np.max(np.abs(coeffs))
        if scale == 0:
            raise XDependence("Wronskian vanished identically", path="r")
        even = coeffs[0::2]
        if np.max(np.abs(even)) > check_tol * scale:
            raise XDependence(
                "base Wronskian is not an odd polynomial; r coefficients "
                "are inconsistent", path="r")
        coeffs[0::2] = 0.0
        coeffs[np.abs(coeffs) < 1e-10 * scale] = 0.0  # interpolation noise
        # x-independence of the interpolated polynomial
        for zk in (0.83 + 0.31j, -1.1 + 0.62j):
            for xref in (0.0, 0.77):
                if abs(self.wronskian(zk, xref) - np.polynomial.polynomial.polyval(
                        zk, coeffs)) > check_tol * scale * (1 + abs(zk)) ** (2 * g + 1):
                    raise XDependence(
                        f"Wronskian depends on x at z={zk}, x={xref}", path="r")
        return WronskianPoly(coeffs)

    # -- validation ----------------------------------------------------------

    def _pole_distance(self, loc) -> float:
        """Distance of the pole lattice {loc + n*period} to [0, inf)."""
        if math.isinf(self.period):
            if loc.real >= 0:
                return abs(loc.imag)
            return abs(loc)
        # lattice marches in steps of period along the real axis
        if abs(loc.imag) > 0:
            return abs(loc.imag)
        return 0.0

    def validate(self):
        for loc, s in self.poles:
            if s < 1:
                raise ValidationFailure(f"pole strength must be >= 1, got {s}",
                                        path="poles")
            if self._pole_distance(loc) < MIN_POLE_DISTANCE:
                raise ValidationFailure(
                    f"pole at {loc} is within {MIN_POLE_DISTANCE} of [0, inf)",
                    path="poles")
        if len(self.poles) != len({self._pole_key(loc) for loc, _ in self.poles}):
            raise ValidationFailure("pole locations collide modulo the period",
                                    path="poles")
        self._check_equation_residual()
        self.wronskian_poly()
        self._check_normalization()

    def _pole_key(self, loc):
        if math.isinf(self.period):
            return (round(loc.real, 9), round(loc.imag, 9))
        return (round(loc.real % self.period, 9), round(loc.imag, 9))

    def _check_equation_residual(self, tol=1e-9, n=24, seed=20230731):
        rng = np.random.default_rng(seed)
        zs = rng.uniform(-10, 10, n) + 1j * rng.uniform(-5, 5, n)
        xs = rng.uniform(0.0, 5.0, n)
        for z, x in zip(zs, xs):
            mag = abs(self.psi0(z, x))
            # skip points where psi0 itself nearly vanishes; the relative
            # residual is meaningless there
            if mag < 1e-3 * (1 + abs(z)) ** self.genus * abs(np.exp(1j * z * x)):
                continue
            if self.equation_residual(z, x) > tol * (1 + abs(z) ** 2) * mag:
                raise ValidationFailure(
                    f"psi0 does not satisfy the base equation at z={z}, x={x}",
                    path="r")

    def _check_normalization(self, tol=1e-2):
        devs = [abs(complex(self.psi0(1j * y, 0.0)) / (1j * y) ** self.genus - 1.0)
                for y in (1e2, 1e3, 1e4)]
        if not (devs[2] <= devs[0] + 1e-12 and devs[2] < tol):
            raise ValidationFailure(
                "psi0(z,0)/z^g does not approach 1 up the imaginary axis",
                path="r", deviations=devs)

    # -- serialization --------------------------------------------------------

    def to_spec(self) -> dict:
        return {
            "lambda0": c_to_json(self.lambda0),
            "period": "inf" if math.isinf(self.period) else self.period,
            "poles": [[loc.real, loc.imag, s] for loc, s in self.poles],
            "genus": self.genus,
            "r": [f.to_spec() for f in self.r],
        }

    @classmethod
    def from_spec(cls, spec: dict, validate=True) -> "BasePotential":
        period = spec.get("period", "inf")
        period = math.inf if period in ("inf", None) else float(period)
        poles = [(complex(p[0], p[1]), int(p[2])) for p in spec.get("poles", [])]
        r = [RationalFunction.from_spec(s) for s in spec.get("r", [])]
        genus = spec.get("genus", len(r))
        if genus != len(r):
            raise ValidationFailure(
                f"genus {genus} does not match {len(r)} r coefficient functions",
                path="genus")
        lam = spec.get("lambda0", 0.0)
        return cls(lambda0=json_to_c(lam), period=period, poles=poles, r=r,
                   validate=validate)

    def __repr__(self):
        kind = "rational" if math.isinf(self.period) else f"period={self.period}"
        return (f"BasePotential(g={self.genus}, {kind}, lambda0={self.lambda0}, "
                f"poles={self.poles})")
