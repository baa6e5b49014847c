"""Base potentials, reference solutions, and their polynomial Wronskian."""

import numpy as np
import pytest

from resokit.errors import PoleAt, ValidationFailure, XDependence
from resokit.potential import BasePotential, WronskianPoly, pe, xi, xi_prime
from resokit.ratfunc import RationalFunction


# ---------------------------------------------------------------------------
# xi and pe
# ---------------------------------------------------------------------------

def test_xi_infinite_period_is_identity():
    x = np.linspace(-3, 5, 11)
    assert np.allclose(xi(x), x)
    assert np.allclose(xi_prime(x), 1.0)


def test_xi_quarter_period_value():
    # (p/2 pi i)(e^{2 pi i x/p} - 1) at x = p/4: (1/2 pi i)(i - 1) = (1+i)/2 pi
    val = xi(0.25, period=1.0)
    assert val == pytest.approx((1 + 1j) / (2 * np.pi), rel=1e-14)


def test_xi_prime_identity_periodic(rng):
    # the map satisfies xi' = 1 + (2 pi i / p) xi for finite period
    p = 2.7
    x = rng.uniform(-4, 4, size=16)
    lhs = xi_prime(x, period=p)
    rhs = 1.0 + (2j * np.pi / p) * xi(x, period=p)
    assert np.allclose(lhs, rhs, rtol=1e-13)


def test_xi_periodicity():
    p = 1.5
    x = np.array([0.2, 0.9, 1.3])
    assert np.allclose(xi(x + p, period=p), xi(x, period=p))


def test_pe_rational_is_inverse_square():
    assert pe(2.0) == pytest.approx(0.25)
    assert pe(-3.0) == pytest.approx(1.0 / 9.0)


def test_pe_periodic_matches_definition():
    p = 2.0
    x = 0.6
    expected = xi_prime(x, period=p) / xi(x, period=p) ** 2
    assert pe(x, period=p) == pytest.approx(expected, rel=1e-13)
    assert pe(x + p, period=p) == pytest.approx(expected, rel=1e-13)


def test_pe_raises_at_pole():
    with pytest.raises(PoleAt):
        pe(0.0)
    with pytest.raises(PoleAt):
        pe(2.0, period=2.0)


# ---------------------------------------------------------------------------
# free base
# ---------------------------------------------------------------------------

def test_free_psi0_is_plane_wave(free_base):
    z = 1.3 - 0.4j
    x = np.array([0.0, 0.7, 2.1])
    assert np.allclose(free_base.psi0(z, x), np.exp(1j * z * x))
    assert np.allclose(free_base.psi0_dx(z, x), 1j * z * np.exp(1j * z * x))


def test_free_wronskian_poly(free_base):
    w = free_base.wronskian_poly()
    # -2(iz)^{2g+1} with g = 0: -2iz
    assert np.allclose(w.coeffs, [0.0, -2j])
    assert w(1.7) == pytest.approx(-2j * 1.7)


def test_free_q0_is_lambda0():
    b = BasePotential.free(lambda0=2.5)
    assert b.eval_q0(np.array([0.3, 1.1])) == pytest.approx([2.5, 2.5])
    assert np.allclose(b.q0_shifted(np.array([0.3, 1.1])), 0.0)


# ---------------------------------------------------------------------------
# genus-one rational base
# ---------------------------------------------------------------------------

def test_g1_q0_value(g1_base):
    # s(s+1) pe(x - x0) = 2/(x+1)^2, so q0(0) = 2
    assert g1_base.eval_q0(np.array([0.0]))[0] == pytest.approx(2.0)
    assert g1_base.eval_q0(np.array([1.0]))[0] == pytest.approx(0.5)


def test_g1_psi0_closed_form(g1_base):
    # psi0(z,x) = (z + i/(x+1)) e^{izx} for the x0 = -1 rational base
    z = 0.9 + 0.3j
    x = np.array([0.0, 0.5, 2.0])
    expected = (z + 1j / (x + 1)) * np.exp(1j * z * x)
    assert np.allclose(g1_base.psi0(z, x), expected, rtol=1e-13)


def test_g1_m0_at_i(g1_base):
    # psi0(i,0) = 2i, psi0_dx(i,0) = i*i*2i - i = -3i, ratio -3/2
    m0 = g1_base.psi0_dx(1j, np.array([0.0]))[0] / g1_base.psi0(
        1j, np.array([0.0]))[0]
    assert m0 == pytest.approx(-1.5, rel=1e-13)


def test_g1_wronskian_poly(g1_base):
    w = g1_base.wronskian_poly()
    assert np.allclose(w.coeffs, [0.0, 0.0, 0.0, 2j], atol=1e-12)
    assert w(2.0) == pytest.approx(16j)


def test_g1_equation_residual(g1_base, rng):
    z = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    x = rng.uniform(0.1, 3.0, size=8)
    for zz, xx in zip(z, x):
        r = g1_base.equation_residual(zz, np.array([xx]))[0]
        scale = abs(g1_base.psi0(zz, np.array([xx]))[0]) + 1.0
        assert abs(r) < 1e-10 * scale * (1 + abs(zz)) ** 2


def test_psi0_dz_matches_finite_difference(g1_base):
    z, x = 0.8 - 0.6j, np.array([0.4, 1.3])
    eps = 1e-6
    fd = (g1_base.psi0(z + eps, x) - g1_base.psi0(z - eps, x)) / (2 * eps)
    assert np.allclose(g1_base.psi0_dz(z, x), fd, rtol=1e-8, atol=1e-8)


def test_wronskian_x_independence(g1_base):
    z = 1.1 + 0.7j
    w0 = g1_base.wronskian(z, x=0.0)
    w1 = g1_base.wronskian(z, x=0.83)
    assert w0 == pytest.approx(w1, rel=1e-10)


# ---------------------------------------------------------------------------
# validation and serialization
# ---------------------------------------------------------------------------

def test_validate_rejects_bad_reference_solution():
    # r0 = 1/(xi + 1) does not solve the equation: residual check must fail
    bad_r = RationalFunction([1.0], [1.0, 1.0])
    with pytest.raises(ValidationFailure):
        BasePotential(lambda0=0.0, period=np.inf,
                      poles=[(-1.0 + 0.0j, 1)], r=[bad_r])


def test_validate_rejects_near_real_periodic_pole():
    r0 = RationalFunction([1j], [1.0, 1.0])
    with pytest.raises(ValidationFailure):
        BasePotential(lambda0=0.0, period=2.0,
                      poles=[(0.5 + 0.0j, 1)], r=[r0])


def test_spec_roundtrip(g1_base):
    spec = g1_base.to_spec()
    back = BasePotential.from_spec(spec)
    z, x = 1.2 - 0.5j, np.array([0.0, 0.9])
    assert np.allclose(back.psi0(z, x), g1_base.psi0(z, x), rtol=1e-13)
    assert back.lambda0 == g1_base.lambda0


def test_from_spec_genus_mismatch(g1_base):
    spec = g1_base.to_spec()
    spec["genus"] = 2
    with pytest.raises(ValidationFailure):
        BasePotential.from_spec(spec)


def test_wronskian_poly_roots_free_and_g1(free_base, g1_base):
    assert np.allclose(free_base.wronskian_poly().roots(), [0.0])
    r = g1_base.wronskian_poly().roots()
    assert len(r) == 3 and np.allclose(np.abs(r), 0.0, atol=1e-8)


def test_wronskian_poly_spec_roundtrip(g1_base):
    w = g1_base.wronskian_poly()
    back = WronskianPoly.from_spec(w.to_spec())
    assert np.allclose(back.coeffs, w.coeffs)
