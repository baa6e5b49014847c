"""Resonance band model: curve values, safe radii, semicircle lower bound.

The square well (step perturbation, contact order 0) gives the exactly known
model nu = 2, c1 = i^2 (-4) / 2^2 = 1, so sigma = 0, kappa = 0, tau = 0 and
the safe radii are n pi. The located resonances and an amplitude fit along
the band cross-check the edge-derivative formula for c1.
"""

import math

import numpy as np
import pytest

from resokit import asymptotics as asym
from resokit.errors import ValidationFailure, ZeroContactDerivative
from resokit.jost import make_evaluator
from resokit.kernel import Perturbation
from resokit.roots import locate_zeros


@pytest.fixture(scope="module")
def sw_model(free_base):
    return asym.band_from_perturbation(free_base,
                                       Perturbation.constant(-4.0, 1.0))


@pytest.fixture(scope="module")
def sw_evaluator(free_base):
    return make_evaluator(free_base, Perturbation.constant(-4.0, 1.0),
                          h=1 / 512)


@pytest.fixture(scope="module")
def band_zeros(sw_evaluator):
    rect = (10 * math.pi, 30 * math.pi, -6.5, -1.2)
    return locate_zeros(sw_evaluator, rect, threads=2)


# ---------------------------------------------------------------------------
# model construction
# ---------------------------------------------------------------------------

def test_square_well_model_values(sw_model):
    assert sw_model.nu == 2
    assert sw_model.c1 == pytest.approx(1.0 + 0j)
    assert sw_model.sigma == pytest.approx(0.0)
    assert sw_model.kappa == pytest.approx(0.0)
    assert sw_model.tau == pytest.approx(0.0)
    assert sw_model.R == 1.0

def test_contact_order_one_model(free_base):
    # diff = 0.7 (1 - x): contact order 1, diff'(R) = -0.7, nu = 3,
    # c1 = i^3 (-0.7) / 8 = 0.0875 i
    pert = Perturbation.contact_form(0.7, 1.0, n=1)
    model = asym.band_from_perturbation(free_base, pert)
    assert model.nu == 3
    assert model.c1 == pytest.approx(0.0875j)
    assert model.sigma == pytest.approx(math.log(0.0875))
    assert model.kappa == pytest.approx(math.pi / 2)
    # tau + nu pi/2 must land in {0, pi} modulo 2 pi
    phase = (model.tau + model.nu * math.pi / 2) % (2 * math.pi)
    assert min(abs(phase), abs(phase - math.pi),
               abs(phase - 2 * math.pi)) < 1e-12

def test_trivial_perturbation_has_no_band(free_base):
    with pytest.raises(ZeroContactDerivative):
        asym.band_from_perturbation(free_base, Perturbation.zero(1.0))


# ---------------------------------------------------------------------------
# curve values
# ---------------------------------------------------------------------------

def test_band_curve_reference_value(sw_model):
    # nu = 2, sigma = 0, R = 1: depth at |Re z| = 10 pi is -log(10 pi)
    assert asym.band_curve(10 * math.pi, sw_model) == pytest.approx(
        -math.log(10 * math.pi), rel=1e-14)

def test_band_curve_doubling_increment(sw_model):
    # curve(2x) - curve(x) = -nu log 2 / (2R) independently of x
    for x in (3.0, 10.0, 200.0):
        inc = asym.band_curve(2 * x, sw_model) - asym.band_curve(x, sw_model)
        assert inc == pytest.approx(-sw_model.nu * math.log(2)
                                    / (2 * sw_model.R), rel=1e-12)

def test_band_curve_rejects_nonpositive(sw_model):
    with pytest.raises(ValidationFailure):
        asym.band_curve(0.0, sw_model)
    with pytest.raises(ValidationFailure):
        asym.band_curve(np.array([1.0, -2.0]), sw_model)

def test_in_band_and_half_width(sw_model):
    assert asym.band_half_width(sw_model) == pytest.approx(0.75)
    x = 20.0
    depth = asym.band_curve(x, sw_model)
    assert asym.in_band(x + 1j * depth, sw_model)
    assert asym.in_band(x + 1j * (depth - 1.4), sw_model)
    assert not asym.in_band(x + 1j * (depth - 1.6), sw_model)
    assert not asym.in_band(1j * depth, sw_model)  # on the imaginary axis

def test_safe_radii_square_well(sw_model):
    assert asym.safe_radii(sw_model, range(1, 4)) == pytest.approx(
        [math.pi, 2 * math.pi, 3 * math.pi])


# ---------------------------------------------------------------------------
# against the located resonances
# ---------------------------------------------------------------------------

def test_located_resonances_sit_in_band(sw_model, band_zeros):
    rows = asym.band_report_rows(band_zeros.zeros, sw_model)
    assert len(rows) == 20
    assert all(ok for *_, ok in rows)
    # and much more tightly than the acceptance envelope.
    assert max(abs(dev) for _, _, _, dev, _ in rows) < 0.1

def test_resonance_density_near_r_over_pi(sw_model, band_zeros):
    lo, hi = band_zeros.rectangle[0], band_zeros.rectangle[1]
    dens = asym.resonance_density(band_zeros.zeros, lo, hi)
    expect = sw_model.R / math.pi
    assert abs(dens - expect) <= 0.2 * expect

def test_c1_amplitude_recovered_from_zeros(sw_model, band_zeros):
    ests = asym.c1_estimates_from_zeros(band_zeros.zeros, sw_model)
    assert len(ests) == 20
    med = float(np.median(ests))
    assert abs(med - abs(sw_model.c1)) < 0.25 * abs(sw_model.c1)

def test_semicircle_lower_bound(sw_evaluator, sw_model):
    for n in (15, 20, 25):
        r = asym.safe_radii(sw_model, [n])[0]
        assert asym.semicircle_min(sw_evaluator, r) >= 1.0 / 3.0

def test_no_resonance_near_safe_semicircles(sw_model, band_zeros):
    margin = 0.1 / (2 * sw_model.R)
    radii = asym.safe_radii(sw_model, range(10, 31))
    for zr in band_zeros.zeros:
        gap = min(abs(abs(zr.z) - r) for r in radii)
        assert gap > margin

def test_band_report_csv_shape(sw_model, band_zeros):
    text = asym.band_report_csv(band_zeros.zeros, sw_model)
    lines = text.strip().splitlines()
    assert lines[0] == "re_z,im_z,predicted_im,deviation,in_band"
    assert len(lines) == 21
    parts = lines[1].split(",")
    assert len(parts) == 5 and parts[4] in {"0", "1"}
    # deviation column is consistent with the first two columns
    re, im, pred, dev = map(float, parts[:4])
    assert dev == pytest.approx(im - pred, abs=1e-15)
