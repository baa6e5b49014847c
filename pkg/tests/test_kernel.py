"""Transformation-operator kernel: Neumann series, bounds, diagnostics.

Closed-form oracles used below, all derived by direct integration:

* constant diff = c on [0, R]:
    leading term    K_0(u)    = c (R - u) / 2
    first iterate   K_1(u, v) = c^2 v (R - u)^2 / 4
  (the iterate integrand is linear in each variable so the trapezoid rule
  reproduces it exactly).
* linear diff = c (R - x): int_u^R = c (R - u)^2 / 2, so K_0 = c (R-u)^2 / 4.
"""

import numpy as np
import pytest

from resokit.errors import (NonConvergence, ValidationFailure,
                            ZeroContactDerivative)
from resokit.kernel import (Kernel, Perturbation, build_kernel,
                            estimate_moment_constant,
                            integral_equation_residual,
                            mixed_derivative_diagnostic)


# ---------------------------------------------------------------------------
# perturbation algebra
# ---------------------------------------------------------------------------

def test_left_closed_breakpoints():
    p = Perturbation(1.0, 0, [(0.0, 0.5, [1.0]), (0.5, 1.0, [2.0])])
    assert p(0.25) == 1.0
    assert p(0.5) == 1.0          # left piece wins at the shared breakpoint
    assert p(0.75) == 2.0
    assert p(1.0) == 2.0          # value at R is the left limit
    assert p(1.0 + 1e-9) == 0.0   # zero beyond the support
    assert p(-0.5) == 0.0


def test_constant_l1_and_cumulative():
    p = Perturbation.constant(-4.0, 1.0)
    assert p.l1_norm() == pytest.approx(4.0)
    u = np.array([0.0, 0.25, 1.0])
    assert np.allclose(p.cumulative_from(u), -4.0 * (1.0 - u))


def test_linear_contact_form_cumulative():
    # diff = c (R - x): int_u^R diff = c (R - u)^2 / 2
    c, R = 3.0, 2.0
    p = Perturbation.contact_form(c, R, 1)
    u = np.linspace(0.0, R, 9)
    assert np.allclose(p.cumulative_from(u), c * (R - u) ** 2 / 2, rtol=1e-13)
    assert p.l1_norm() == pytest.approx(c * R ** 2 / 2)


def test_contact_order_validation():
    Perturbation.contact_form(1.0, 1.0, 2)  # fine
    with pytest.raises(ZeroContactDerivative):
        # declared order 1 but diff(R) != 0
        Perturbation(1.0, 1, [(0.0, 1.0, [2.0])])
    with pytest.raises(ZeroContactDerivative):
        # declared order 0 but diff(R) = 0
        Perturbation(1.0, 0, [(0.0, 1.0, [1.0, -1.0])])
    with pytest.raises(ZeroContactDerivative):
        # support ends before R: every derivative at R vanishes
        Perturbation(1.0, 0, [(0.0, 0.5, [1.0])])


def test_piece_validation():
    with pytest.raises(ValidationFailure):
        Perturbation(1.0, 0, [(0.0, 0.6, [1.0]), (0.5, 1.0, [1.0])])
    with pytest.raises(ValidationFailure):
        Perturbation(1.0, 0, [(0.0, 1.5, [1.0])])
    with pytest.raises(ValidationFailure):
        Perturbation(-1.0, 0, [])


def test_perturbation_spec_roundtrip():
    p = Perturbation(2.0, 1, [(0.0, 1.0, [1.0 + 2.0j]),
                              (1.0, 2.0, [4.0 + 4.0j, -2.0 - 2.0j])])
    back = Perturbation.from_spec(p.to_spec())
    x = np.linspace(0, 2, 17)
    assert np.allclose(back(x), p(x))
    assert back.contact_order == p.contact_order


def test_moment_constant_constant_well(free_base):
    # sup_alpha int_0^alpha |c| dbeta = |c| R, then the 1.1 safety factor
    p = Perturbation.constant(-4.0, 1.0)
    assert estimate_moment_constant(free_base, p) == pytest.approx(
        1.1 * 4.0, rel=1e-6)


# ---------------------------------------------------------------------------
# kernel construction
# ---------------------------------------------------------------------------

def test_zero_perturbation_kernel(free_base):
    ker = build_kernel(free_base, Perturbation.zero(1.0), h=1 / 64)
    assert ker.terms_used == 1
    assert np.max(np.abs(ker.values)) == 0.0
    assert np.max(np.abs(ker.dvalues)) == 0.0
    assert ker.tail_bound == 0.0


def test_leading_term_exact_on_diagonal(free_base):
    c, R = -4.0, 1.0
    ker = build_kernel(free_base, Perturbation.constant(c, R), h=R / 128)
    # K(x, x) equals the leading term since every iterate vanishes at v = 0
    for x in (0.0, 0.3, 0.71875):
        assert ker.at_xx(x) == pytest.approx(0.5 * c * (R - x), abs=1e-12)
    assert ker.at_xx(R) == 0.0


def test_first_iterate_closed_form(free_base):
    # stop the series after two terms and subtract the exact leading term:
    # what remains must be the hand-integrated first iterate.
    c, R = 0.01, 1.0
    p = Perturbation.constant(c, R)
    ker = build_kernel(free_base, p, h=R / 64, tol=1e-6)
    assert ker.terms_used == 2
    u = ker.u
    k0 = 0.5 * c * (R - u)[:, None]
    k1 = c ** 2 * u[None, :] * (R - u)[:, None] ** 2 / 4.0
    tri = np.tril(np.ones((ker.N + 1, ker.N + 1), dtype=bool))
    defect = np.abs(ker.values - np.where(tri, k0 + k1, 0.0))[tri]
    assert np.max(defect) < 1e-12


def test_support_edge_column_zero(free_base):
    ker = build_kernel(free_base, Perturbation.constant(-4.0, 1.0), h=1 / 64)
    assert np.max(np.abs(ker.values[-1, :])) == 0.0
    assert np.max(np.abs(ker.values[np.triu_indices(ker.N + 1, k=1)])) == 0.0


def test_term_bounds_hold_everywhere(free_base, g1_base, rng):
    perts = [Perturbation.constant(-4.0, 1.0),
             Perturbation.contact_form(2.0 + 1.5j, 1.0, 1),
             Perturbation(1.0, 0, [(0.0, 0.5, [1.0, 1.0]),
                                   (0.5, 1.0, [0.5, 0.2, -0.3])])]
    for base in (free_base, g1_base):
        for p in perts:
            ker = build_kernel(base, p, h=1 / 128)
            assert ker.term_bound_ratios, "series must need at least one iterate"
            assert max(ker.term_bound_ratios) < 1.0
            assert ker.tail_bound < 1e-10


def test_residual_second_order(free_base):
    p = Perturbation.constant(-4.0, 1.0)
    res = [integral_equation_residual(build_kernel(free_base, p, h=1 / n))
           for n in (128, 256, 512)]
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.4)
    assert res[1] / res[2] == pytest.approx(4.0, rel=0.4)


def test_residual_bounded_by_step_and_tol(free_base):
    # residual <= C (h^2 + tol) across tolerance settings
    p = Perturbation.constant(-4.0, 1.0)
    h = 1 / 256
    for tol in (1e-3, 1e-8, 1e-12):
        ker = build_kernel(free_base, p, h=h, tol=tol)
        assert integral_equation_residual(ker) <= 50 * (h ** 2 + tol)


def test_mixed_derivative_diagnostic(free_base):
    ker = build_kernel(free_base, Perturbation.constant(-4.0, 1.0), h=1 / 256)
    defect, scale = mixed_derivative_diagnostic(ker)
    assert defect <= ker.h * scale


def test_grid_must_divide_support(free_base):
    with pytest.raises(ValidationFailure):
        build_kernel(free_base, Perturbation.constant(1.0, 1.0), h=0.3)


def test_nonconvergence_raised(free_base):
    p = Perturbation.constant(-50.0, 1.0)
    with pytest.raises(NonConvergence):
        build_kernel(free_base, p, h=1 / 64, max_terms=10)


def test_random_perturbations_bounded(free_base, rng):
    # seeded sweep: every Neumann term respects its a-priori bound
    for _ in range(4):
        deg = rng.integers(1, 4)
        coeffs = rng.uniform(-2, 2, size=deg + 1)
        p = Perturbation(1.0, 0, [(0.0, 1.0, coeffs)], validate=False)
        if abs(p.deriv_at_R(0)) < 1e-3:
            continue
        ker = build_kernel(free_base, p, h=1 / 128)
        if ker.term_bound_ratios:
            assert max(ker.term_bound_ratios) < 1.0
        assert integral_equation_residual(ker) < 50 * (ker.h ** 2 + ker.tol)


def test_csv_export(free_base):
    ker = build_kernel(free_base, Perturbation.constant(-4.0, 1.0), h=1 / 64)
    text = ker.to_csv(stride=16)
    lines = text.strip().split("\n")
    assert lines[0] == "u,v,re_k,im_k"
    # triangle nodes at stride 16 on a 65-node grid: i in {0,16,32,48,64}
    assert len(lines) == 1 + sum(i // 16 + 1 for i in range(0, 65, 16))
    first = lines[1].split(",")
    assert float(first[0]) == 0.0 and float(first[1]) == 0.0
    assert float(first[2]) == pytest.approx(-2.0)
