"""Zero location: winding numbers, subdivision, polishing, certification.

Synthetic rational/polynomial functions with known zeros exercise the contour
machinery directly; the square well (whose zeros solve
k cos(kR) - i z sin(kR) = 0, k = sqrt(z^2 - c)) exercises the full pipeline
against an independently Newton-polished closed form.
"""

import json
import math

import numpy as np
import pytest

from resokit.errors import (ContourThroughZero, NonIntegerWinding,
                            ValidationFailure)
from resokit.jost import make_evaluator
from resokit.kernel import Perturbation
from resokit.roots import (ZeroSet, classify, circle_moment,
                           conjugate_symmetry_defect, locate_zeros, refine_cluster,
                           subdivide, winding_circle, winding_rectangle)

C_WELL = -4.0
R_WELL = 1.0


def sw_zero_equation(z, c=C_WELL, R=R_WELL):
    # cos(kR) - i z R sinc(kR/pi) = e^{-izR} psi(z, 0): same zeros as the
    # transcendental form k cos(kR) = i z sin(kR), but regular at k = 0
    # (where that multiplied-by-k form has spurious roots at z^2 = c)
    k = np.sqrt(np.asarray(z, dtype=complex) ** 2 - c)
    return np.cos(k * R) - 1j * z * R * np.sinc(k * R / np.pi)


def sw_zero_equation_dz(z, c=C_WELL, R=R_WELL, eps=1e-7):
    return (sw_zero_equation(z + eps, c, R)
            - sw_zero_equation(z - eps, c, R)) / (2 * eps)


def closed_form_zeros(rect, c=C_WELL, R=R_WELL):
    """Newton-polish the closed-form zero equation from a fine seed grid."""
    re0, re1, im0, im1 = rect
    seeds_re = np.linspace(re0, re1, 161)
    seeds_im = np.linspace(im0, im1, 41)
    z = (seeds_re[:, None] + 1j * seeds_im[None, :]).ravel()
    with np.errstate(all="ignore"):  # diverging seeds overflow, then drop out
        for _ in range(60):
            step = sw_zero_equation(z) / sw_zero_equation_dz(z)
            z = z - step
        resid = np.abs(sw_zero_equation(z))
    keep = np.isfinite(z) & (resid < 1e-10) \
        & (z.real >= re0 - 1e-6) & (z.real <= re1 + 1e-6) \
        & (z.imag >= im0 - 1e-6) & (z.imag <= im1 + 1e-6)
    z = z[keep]
    out = []
    for zi in sorted(z, key=lambda w: (round(w.real, 6), round(w.imag, 6))):
        if not out or abs(zi - out[-1]) > 1e-5:
            out.append(zi)
    return np.array(out)


# ---------------------------------------------------------------------------
# winding numbers on synthetic functions
# ---------------------------------------------------------------------------

def poly_f(zeros_mults):
    def f(z):
        z = np.asarray(z, dtype=complex)
        out = np.ones(z.shape, dtype=complex)
        for z0, m in zeros_mults:
            out = out * (z - z0) ** m
        return out
    return f

def test_winding_counts_multiplicities():
    f = poly_f([(0.3 + 0.2j, 1), (-0.5 - 0.4j, 2)])
    assert winding_rectangle(f, (-1, 1, -1, 1)) == 3
    assert winding_rectangle(f, (0, 1, 0, 1)) == 1
    assert winding_rectangle(f, (-1, 0, -1, 0)) == 2
    assert winding_rectangle(f, (2, 3, 2, 3)) == 0

def test_winding_circle_and_moment():
    a = 0.7 - 0.3j
    f = poly_f([(a, 1), (5.0, 2)])
    assert winding_circle(f, 0.7 - 0.3j, 0.5) == 1
    # the midpoint moment rule is second order in the node spacing
    w, s1 = circle_moment(f, 0.6 - 0.2j, 0.6, max_spacing=0.002)
    assert w == 1
    assert abs(s1 - a) < 1e-6  # Delves-Lyness first moment is the zero itself

def test_moment_rule_order_is_two():
    a = 0.7 - 0.3j
    f = poly_f([(a, 1), (5.0, 2)])
    errs = [abs(circle_moment(f, 0.6 - 0.2j, 0.6, max_spacing=s)[1] - a)
            for s in (0.04, 0.02)]
    assert 3.0 < errs[0] / errs[1] < 5.0

def test_moment_of_double_zero_is_weighted():
    a = -0.2 + 0.4j
    f = poly_f([(a, 2)])
    w, s1 = circle_moment(f, a + 0.05, 0.3, max_spacing=0.002)
    assert w == 2
    assert abs(s1 / w - a) < 1e-6

def test_fast_phase_needs_fine_spacing():
    # e^{2iz} rotates at rate 2: a long edge sampled coarsely aliases whole
    # turns, the rate-aware spacing does not
    f = lambda z: np.exp(2j * np.asarray(z)) + 0.001
    rect = (-20, 20, -1.5, -0.5)  # no zeros inside (|e^{2iz}| = e^2 > 0.001)
    assert winding_rectangle(f, rect, max_spacing=math.pi / 16) == 0

def test_contour_through_zero_detected():
    # zero exactly on a sampled boundary node: floor check trips at once
    with pytest.raises(ContourThroughZero):
        winding_rectangle(poly_f([(1.0 + 0j, 1)]), (-1, 1, -1, 1))
    # zero on an edge between nodes: refinement collapses onto it
    with pytest.raises(ContourThroughZero):
        winding_rectangle(poly_f([(0.1234 - 1j, 1)]), (-1, 1, -1, 1))

def test_subdivide_finds_clusters_and_nudges_split():
    # zeros placed exactly on the midline: the 0.5 split is rejected by the
    # floor check and a nudged split succeeds
    zs = [(0.0 + 0.25j, 1), (0.0 - 0.25j, 1), (0.4 + 0.1j, 2)]
    f = poly_f(zs)
    total, clusters = subdivide(f, (-1, 1, -1, 1), coarse_tol=1e-3)
    assert total == 4
    assert sorted(m for _, m in clusters) == [1, 1, 2]
    for z0, m in zs:
        assert min(abs(c - z0) for c, _ in clusters) < 2e-3

def test_refine_cluster_polishes_to_machine():
    a = 0.31 - 0.57j
    f = poly_f([(a, 2)])
    df = lambda z: 2 * (z - a)
    z = refine_cluster(f, lambda z: (f(np.array([z]))[0], df(z)),
                       center=a + 3e-4, mult=2, start_radius=1e-3)
    assert abs(z - a) < 1e-12


# ---------------------------------------------------------------------------
# full pipeline on the square well
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def sw_evaluator(free_base):
    return make_evaluator(free_base, Perturbation.constant(C_WELL, R_WELL),
                          h=R_WELL / 512)

@pytest.fixture(scope="module")
def sw_zeroset(sw_evaluator):
    return locate_zeros(sw_evaluator, (-20, 20, -5, 5), threads=2,
                        metadata={"case": "square well"})

def test_square_well_zero_count_and_certification(sw_zeroset):
    # every zero was certified (winding == multiplicity) inside locate_zeros
    assert len(sw_zeroset.zeros) == 11
    assert sw_zeroset.total_multiplicity == 11
    assert all(z.mult == 1 for z in sw_zeroset.zeros)

def test_square_well_zeros_match_closed_form(sw_zeroset):
    ref = closed_form_zeros((-20, 20, -5, 5))
    assert len(ref) == len(sw_zeroset.zeros)
    got = np.array([z.z for z in sw_zeroset.zeros])
    for zr in ref:
        assert np.min(np.abs(got - zr)) < 1e-8

def test_square_well_classification(sw_zeroset):
    kinds = [z.klass for z in sw_zeroset.zeros]
    assert kinds.count("eigenvalue") == 1          # single bound state
    assert kinds.count("resonance") == len(kinds) - 1
    bound = [z for z in sw_zeroset.zeros if z.klass == "eigenvalue"][0]
    assert abs(bound.z - 0.638045048285238j) < 1e-9  # root of k cot k = -y
    assert bound.lam == bound.z * bound.z          # lambda0 = 0

def test_square_well_conjugate_symmetry(sw_zeroset):
    assert sw_zeroset.conjugate_defect < 1e-8
    zs = [z.z for z in sw_zeroset.zeros]
    assert conjugate_symmetry_defect(zs) == sw_zeroset.conjugate_defect

def test_threads_do_not_change_result(sw_evaluator, sw_zeroset):
    again = locate_zeros(sw_evaluator, (-20, 20, -5, 5), threads=4)
    assert [z.z for z in again.zeros] == [z.z for z in sw_zeroset.zeros]
    assert [z.mult for z in again.zeros] == [z.mult for z in sw_zeroset.zeros]

def test_empty_rectangle_is_validation_failure(sw_evaluator):
    with pytest.raises(ValidationFailure):
        locate_zeros(sw_evaluator, (2, 2, -1, 1))

def test_zero_free_region_returns_empty(sw_evaluator):
    zs = locate_zeros(sw_evaluator, (2, 5, 1, 3))
    assert zs.zeros == [] and zs.total_multiplicity == 0


# ---------------------------------------------------------------------------
# classification and serialization
# ---------------------------------------------------------------------------

def test_classify_bands():
    assert classify(1 + 1j) == "eigenvalue"
    assert classify(1 - 1j) == "resonance"
    assert classify(1.0 + 0j) == "real_axis"
    assert classify(1 + 5e-9j) == "real_axis"

def test_zeroset_json_roundtrip(sw_zeroset):
    text = sw_zeroset.to_json()
    back = ZeroSet.from_json(text)
    assert [z.z for z in back.zeros] == [z.z for z in sw_zeroset.zeros]
    assert [z.klass for z in back.zeros] == [z.klass for z in sw_zeroset.zeros]
    assert back.lambda0 == sw_zeroset.lambda0
    assert back.genus == sw_zeroset.genus
    assert math.isinf(back.period)
    assert back.rectangle == sw_zeroset.rectangle
    assert np.allclose(back.wronskian_coeffs, sw_zeroset.wronskian_coeffs)
    assert back.metadata == {"case": "square well"}

def test_zeroset_rejects_malformed_json():
    with pytest.raises(ValidationFailure) as err:
        ZeroSet.from_json("{ not json")
    assert "line" in str(err.value)
    with pytest.raises(ValidationFailure):
        ZeroSet.from_json(json.dumps({"lambda0": [0, 0]}))  # no zeros key

def test_zeroset_rejects_wrong_shapes():
    doc = {"zeros": [{"z": "oops", "mult": 1}]}
    with pytest.raises(ValidationFailure):
        ZeroSet.from_spec(doc)
