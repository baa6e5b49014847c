"""Transformation-operator kernel of a compactly supported perturbation.

The perturbed Jost solution is psi(z,x) = psi0(z,x) + int_x^{2R} K(t,x)
psi0(z,t) dt, where K solves a wave-type integral equation driven by
diff = q - q0 supported on [0, R]. K is built as a Neumann series

    K_0(t,x) = 1/2 int_{(t+x)/2}^{R} diff(s) ds
    K_n(t,x) = int_{(t+x)/2}^{R} int_0^{(t-x)/2}
               (q(a-b) - q0(a+b)) K_{n-1}(a+b, a-b) db da

in rotated coordinates u = (t+x)/2, v = (t-x)/2 on the triangle
0 <= v <= u <= R, where the recursion is a pair of cumulative integrals.
Every term obeys |K_n| <= 1/2 (M^n/n!) (R-u)^n int_u^R |diff|, with M the
mixed moment constant sup int_0^{v} |q(a-b) - q0(a+b)| db; the series is
truncated when 1/2 (M^N/N!) R^N ||diff||_1 e^{MR} drops below tol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import cumulative_simpson, cumulative_trapezoid, quad

from .errors import NonConvergence, ValidationFailure, ZeroContactDerivative
from .potential import BasePotential
from .serial import cseq_to_json, fmt_float, json_to_cseq

MOMENT_INFLATION = 1.1  # safety factor on the discretized moment constant


# ---------------------------------------------------------------------------
# perturbation
# ---------------------------------------------------------------------------

class Perturbation:
    """Piecewise-polynomial diff = q - q0 supported on [0, R].

    pieces are (a, b, coeffs) with constant-first polynomial coefficients in
    x. Intervals are matched in order with closed endpoints, so at shared
    breakpoints (including x = R) the left piece wins: diff(R) is the left
    limit. contact_order n declares the first j with diff^{(j)}(R) != 0; the
    declared value is verified against exact polynomial derivatives.
    """

    def __init__(self, R, contact_order, pieces, validate=True):
        self.R = float(R)
        self.contact_order = int(contact_order)
        self.pieces = [(float(a), float(b),
                        np.atleast_1d(np.asarray(c, dtype=complex)))
                       for a, b, c in pieces]
        self.pieces.sort(key=lambda p: p[0])
        if validate:
            self.validate()
        self._l1 = None

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, R=1.0):
        """The trivial perturbation q = q0."""
        return cls(R, 0, [], validate=False)

    @classmethod
    def constant(cls, c, R):
        """Step well: diff = c on [0, R], contact order 0."""
        return cls(R, 0, [(0.0, R, [c])])

    @classmethod
    def contact_form(cls, c, R, n, s=(1.0,)):
        """diff(x) = c (R - x)^n s(x) on [0, R] with polynomial s, s(R) != 0."""
        fac = np.array([1.0], dtype=complex)
        for _ in range(n):
            fac = P.polymul(fac, np.array([R, -1.0], dtype=complex))
        coeffs = complex(c) * P.polymul(fac, np.asarray(s, dtype=complex))
        return cls(R, n, [(0.0, R, coeffs)])

    # -- evaluation -----------------------------------------------------------

    def is_trivial(self):
        return all(np.all(c == 0) for _, _, c in self.pieces)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        claimed = np.zeros(x.shape, dtype=bool)
        for a, b, c in self.pieces:
            m = (~claimed) & (x >= a - 1e-15) & (x <= b + 1e-15)
            if np.any(m):
                out[m] = P.polyval(x[m], c)
                claimed |= m
        out[(x < -1e-15) | (x > self.R + 1e-15)] = 0.0
        return out if out.shape else complex(out)

    def deriv_at_R(self, order):
        """Exact left derivative diff^{(order)}(R-)."""
        piece = self._piece_ending_at_R()
        if piece is None:
            return 0.0 + 0.0j
        c = piece[2]
        for _ in range(order):
            c = P.polyder(c)
        return complex(P.polyval(self.R, c))

    def _piece_ending_at_R(self):
        for a, b, c in reversed(self.pieces):
            if abs(b - self.R) < 1e-12 * max(1.0, self.R):
                return a, b, c
        return None

    def cumulative_from(self, u):
        """int_u^R diff(s) ds, exact via piecewise antiderivatives."""
        u = np.asarray(u, dtype=float)
        out = np.zeros(u.shape, dtype=complex)
        for a, b, c in self.pieces:
            anti = P.polyint(c)
            lo = np.clip(u, a, b)
            seg = P.polyval(b, anti) - P.polyval(lo, anti)
            out = out + np.where(u < b, seg, 0.0)
        return out if out.shape else complex(out)

    def l1_norm(self):
        """int_0^R |diff|, adaptive quadrature per piece."""
        if self._l1 is None:
            total = 0.0
            for a, b, c in self.pieces:
                val, _ = quad(lambda s, c=c: abs(P.polyval(s, c)), a, b,
                              limit=200)
                total += val
            self._l1 = total
        return self._l1

    def abs_on(self, x):
        return np.abs(self.__call__(x))

    def is_real(self):
        return all(np.all(np.abs(c.imag) < 1e-14) for _, _, c in self.pieces)

    # -- validation -----------------------------------------------------------

    def validate(self):
        if not self.R > 0:
            raise ValidationFailure("support radius R must be positive",
                                    path="R")
        if self.contact_order < 0:
            raise ValidationFailure("contact_order must be >= 0",
                                    path="contact_order")
        prev_b = 0.0
        for a, b, c in self.pieces:
            if a < -1e-12 or b > self.R + 1e-12 or b <= a:
                raise ValidationFailure(
                    f"piece [{a}, {b}] outside [0, R] or empty", path="pieces")
            if a < prev_b - 1e-12:
                raise ValidationFailure(
                    f"piece [{a}, {b}] overlaps its predecessor", path="pieces")
            prev_b = b
        if self.is_trivial():
            return
        scale = max(float(np.max(np.abs(c))) for _, _, c in self.pieces)
        scale *= max(1.0, self.R) ** max(len(c) for _, _, c in self.pieces)
        n = self.contact_order
        for j in range(n):
            if abs(self.deriv_at_R(j)) > 1e-10 * scale:
                raise ZeroContactDerivative(
                    f"diff^({j})(R) = {self.deriv_at_R(j):.3e} but contact "
                    f"order {n} was declared", path="contact_order")
        if abs(self.deriv_at_R(n)) <= 1e-10 * scale:
            raise ZeroContactDerivative(
                f"diff^({n})(R) vanishes; declared contact order {n} is wrong "
                "(or the support ends before R)", path="contact_order")

    # -- serialization ----------------------------------------------------------

    def to_spec(self):
        return {
            "R": self.R,
            "contact_order": self.contact_order,
            "pieces": [{"interval": [a, b], "coeffs": cseq_to_json(c)}
                       for a, b, c in self.pieces],
        }

    @classmethod
    def from_spec(cls, spec, validate=True):
        pieces = [(p["interval"][0], p["interval"][1],
                   json_to_cseq(p["coeffs"])) for p in spec.get("pieces", [])]
        return cls(spec["R"], spec.get("contact_order", 0), pieces,
                   validate=validate)

    def __repr__(self):
        return (f"Perturbation(R={self.R}, n={self.contact_order}, "
                f"{len(self.pieces)} piece(s))")


# ---------------------------------------------------------------------------
# kernel grid
# ---------------------------------------------------------------------------

def _w_triangle(base: BasePotential, pert: Perturbation, u):
    """w(a, b) = diff(a-b) + q0s(a-b) - q0s(a+b) on the triangle b <= a.

    Entries above the diagonal are left at zero and are never read by the
    recursion (there b <= v <= u <= a keeps everything inside the triangle).
    """
    n = len(u)
    W = np.zeros((n, n), dtype=complex)
    ii, jj = np.tril_indices(n)
    am = u[ii]          # alpha
    bm = u[jj]          # beta
    vals = pert(am - bm)
    if base.poles:
        vals = vals + base.q0_shifted(am - bm) - base.q0_shifted(am + bm)
    W[ii, jj] = vals
    return W


def estimate_moment_constant(base, pert, n_nodes=513):
    """Discretized sup_alpha int_0^alpha |w(alpha, beta)| dbeta, inflated.

    The sup over the inner limit is attained at beta = alpha because the
    integrand is nonnegative, so only the full-column integrals are needed.
    """
    R = pert.R
    a = np.linspace(0.0, R, n_nodes)
    W = _w_triangle(base, pert, a)
    col = cumulative_trapezoid(np.abs(W), dx=a[1] - a[0], axis=1, initial=0.0)
    raw = float(np.max(col[np.arange(n_nodes), np.arange(n_nodes)]))
    return MOMENT_INFLATION * raw


def _rev_cumtrapz(f, dx, axis):
    """int_x^{end} f along axis, on the same nodes."""
    T = cumulative_trapezoid(f, dx=dx, axis=axis, initial=0.0)
    end = np.take(T, [-1], axis=axis)
    return end - T


def _cumsimpson_c(f, dx, axis):
    """Complex-safe cumulative Simpson (scipy casts complex to real)."""
    re = cumulative_simpson(f.real, dx=dx, axis=axis, initial=0.0)
    im = cumulative_simpson(f.imag, dx=dx, axis=axis, initial=0.0)
    return re + 1j * im


def _rev_cumsimpson(f, dx, axis):
    T = _cumsimpson_c(f, dx=dx, axis=axis)
    end = np.take(T, [-1], axis=axis)
    return end - T


@dataclass
class Kernel:
    """Grid representation of K and K^{(0,1)} in rotated coordinates.

    values[i, j] ~ K(u+v, u-v) and dvalues[i, j] ~ K^{(0,1)}(u+v, u-v) at
    u = i h, v = j h on the triangle 0 <= v <= u <= R; zero outside.
    """

    base: BasePotential
    pert: Perturbation
    h: float
    tol: float
    values: np.ndarray
    dvalues: np.ndarray
    terms_used: int
    tail_bound: float
    moment_constant: float
    diff_l1: float
    term_bound_ratios: list = field(default_factory=list)
    term_maxima: list = field(default_factory=list)

    @property
    def N(self):
        return self.values.shape[0] - 1

    @property
    def R(self):
        return self.pert.R

    @property
    def u(self):
        return np.arange(self.N + 1) * self.h

    def at_xx(self, x):
        """K(x, x) = L(x, 0) with linear interpolation in u."""
        k = x / self.h
        i = int(np.floor(k))
        if i >= self.N:
            return 0.0 + 0.0j
        f = k - i
        return (1 - f) * self.values[i, 0] + f * self.values[i + 1, 0]

    def to_csv(self, stride=None):
        """CSV rows (u, v, Re K, Im K) on the triangle, optionally strided."""
        if stride is None:
            stride = max(1, self.N // 128)
        lines = ["u,v,re_k,im_k"]
        u = self.u
        for i in range(0, self.N + 1, stride):
            for j in range(0, i + 1, stride):
                val = self.values[i, j]
                lines.append(",".join([fmt_float(u[i]), fmt_float(u[j]),
                                       fmt_float(val.real), fmt_float(val.imag)]))
        return "\n".join(lines) + "\n"


def build_kernel(base: BasePotential, pert: Perturbation, h, tol=1e-10,
                 max_terms=200) -> Kernel:
    """Sum the Neumann series for K on an h-grid; h must divide R."""
    R = pert.R
    ratio = R / h
    N = int(round(ratio))
    if abs(ratio - N) > 1e-9 or N < 8:
        raise ValidationFailure(
            f"grid step h={h} must divide R={R} with at least 8 cells",
            path="kernel.h")
    u = np.arange(N + 1) * h
    tri = np.tril(np.ones((N + 1, N + 1), dtype=bool))

    l1 = pert.l1_norm()
    M = estimate_moment_constant(base, pert, n_nodes=min(N + 1, 1025))

    # exact leading term, constant along v
    k0 = 0.5 * pert.cumulative_from(u)
    term = np.where(tri, k0[:, None], 0.0).astype(complex)
    total = term.copy()

    # |diff| tail for the per-term bound, oversampled then restricted
    fine = np.linspace(0.0, R, 8 * N + 1)
    absd = pert.abs_on(fine)
    cum = cumulative_trapezoid(absd, dx=fine[1] - fine[0], initial=0.0)
    tail1 = (cum[-1] - cum)[::8]

    W = _w_triangle(base, pert, u)

    def series_tail(n):
        if l1 == 0.0 or M == 0.0:
            return 0.0
        return 0.5 * math.exp(
            n * math.log(M * R) - math.lgamma(n + 1) + M * R) * l1

    ratios = []
    maxima = [float(np.max(np.abs(term)))]
    terms_used = 1
    n = 1
    while series_tail(n) >= tol:
        if n > max_terms:
            raise NonConvergence(
                f"Neumann series did not reach tol={tol} within {max_terms} "
                f"terms (moment constant {M:.3g}, tail {series_tail(n):.3g})")
        inner = cumulative_trapezoid(W * term, dx=h, axis=1, initial=0.0)
        term = _rev_cumtrapz(inner, dx=h, axis=0)
        term[~tri] = 0.0
        bound = 0.5 * np.exp(
            n * np.log(np.maximum(M * (R - u), 1e-300))
            - math.lgamma(n + 1)) * tail1
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.abs(term) / bound[:, None]
        r = r[tri & (bound[:, None] > 0)]
        ratios.append(float(np.max(r)) if r.size else 0.0)
        maxima.append(float(np.max(np.abs(term))))
        total += term
        n += 1
        terms_used = n

    total[~tri] = 0.0

    # K^{(0,1)} = -1/4 diff(u) - 1/2 int_0^v h(u,b) db - 1/2 int_u^R h(a,v) da
    hh = W * total
    A = cumulative_trapezoid(hh, dx=h, axis=1, initial=0.0)
    B = _rev_cumtrapz(hh, dx=h, axis=0)
    dvals = -0.25 * pert(u)[:, None] - 0.5 * A - 0.5 * B
    dvals = np.where(tri, dvals, 0.0)

    return Kernel(base=base, pert=pert, h=h, tol=tol, values=total,
                  dvalues=dvals, terms_used=terms_used,
                  tail_bound=series_tail(terms_used), moment_constant=M,
                  diff_l1=l1, term_bound_ratios=ratios, term_maxima=maxima)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def integral_equation_residual(kernel: Kernel) -> float:
    """sup over the grid of |K - K_0 - II(w K)| with the double integral
    re-evaluated by cumulative Simpson (order 4), so the result reflects the
    order-2 construction error plus the series truncation.
    """
    N, h = kernel.N, kernel.h
    tri = np.tril(np.ones((N + 1, N + 1), dtype=bool))
    u = kernel.u
    W = _w_triangle(kernel.base, kernel.pert, u)
    k0 = 0.5 * kernel.pert.cumulative_from(u)
    inner = _cumsimpson_c(W * kernel.values, dx=h, axis=1)
    dbl = _rev_cumsimpson(inner, dx=h, axis=0)
    resid = kernel.values - k0[:, None] - dbl
    return float(np.max(np.abs(resid[tri])))


def mixed_derivative_diagnostic(kernel: Kernel):
    """Loose O(h) check of d2H/du dv = -w K at interior triangle nodes.

    Returns (max_abs_defect, scale); the defect is first order near the
    breakpoints of diff and second order elsewhere.
    """
    N, h = kernel.N, kernel.h
    u = kernel.u
    k0 = 0.5 * kernel.pert.cumulative_from(u)
    H = kernel.values - np.where(
        np.tril(np.ones((N + 1, N + 1), dtype=bool)), k0[:, None], 0.0)
    W = _w_triangle(kernel.base, kernel.pert, u)
    mixed = (H[2:, 2:] - H[2:, :-2] - H[:-2, 2:] + H[:-2, :-2]) / (4 * h * h)
    target = -(W * kernel.values)[1:-1, 1:-1]
    ii, jj = np.tril_indices(N - 1, k=-2)  # all four stencil corners in triangle
    defect = np.abs(mixed[ii, jj] - target[ii, jj])
    scale = float(np.max(np.abs(W * kernel.values)) + 1.0)
    return (float(np.max(defect)) if defect.size else 0.0, scale)
