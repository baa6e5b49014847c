"""Resonance band prediction and safe semicircles.

For a perturbation with contact order n at the support edge R, repeated
integration by parts of the kernel correction gives

    psi(z, 0) / z^g  ~  1 + c1 z^{-nu} e^{2izR},      nu = n + 2,

where c1 = i^nu diff^{(n)}(R) / 2^nu (the sub-leading rational factor is
frozen at its large-z limit 1). Zeros of the right side force
|c1| |z|^{-nu} e^{-2 R Im z} = 1, i.e. resonances accumulate along

    Im z = -(nu log|Re z| - log|c1|) / (2R)

up to O(log n / n) reparametrization. Between consecutive resonances the
correction term passes through +1-ish phases on circles of radius
(2 n pi + tau)/(2R), where tau is fixed so that the phase at the real-axis
crossings is 0 rather than pi; on those semicircles |psi|/|z|^g stays away
from zero (the 1/3 bound checked here).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationFailure, ZeroContactDerivative
from .serial import fmt_float


@dataclass(frozen=True)
class BandModel:
    nu: int
    c1: complex
    sigma: float        # log|c1|
    kappa: float        # arg c1
    R: float
    tau: float

    def __post_init__(self):
        if self.nu < 2:
            raise ValidationFailure("band exponent nu must be >= 2",
                                    path="contact_order")


def band_from_perturbation(base, pert) -> BandModel:
    """Band model of the perturbed problem from exact edge derivatives."""
    if pert.is_trivial():
        raise ZeroContactDerivative(
            "the zero perturbation has no resonance band",
            path="pieces")
    n = pert.contact_order
    nu = n + 2
    dn = pert.deriv_at_R(n)
    c1 = (1j ** nu) * dn / (2.0 ** nu)
    sigma = math.log(abs(c1))
    kappa = math.atan2(c1.imag, c1.real)
    # choose tau with tau + nu pi/2 in {0, pi} so the crossing phase avoids -1
    if math.cos(kappa + 3 * nu * math.pi / 2) < 0:
        tau = math.pi - nu * math.pi / 2
    else:
        tau = -nu * math.pi / 2
    tau = tau % (2 * math.pi)
    return BandModel(nu=nu, c1=c1, sigma=sigma, kappa=kappa, R=pert.R,
                     tau=tau)


def band_curve(x, model: BandModel):
    """Predicted resonance depth Im z at |Re z| = x (x > 0)."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValidationFailure("band curve is defined for |Re z| > 0",
                                path="x")
    out = -(model.nu * np.log(x) - model.sigma) / (2 * model.R)
    return out if out.shape else float(out)


def band_half_width(model: BandModel):
    """Nominal half width of the band around the central curve."""
    return 1.5 / (2 * model.R)


def in_band(z, model: BandModel, tol=None):
    """Whether a (resonance) z lies within tol of the predicted curve."""
    if tol is None:
        tol = 2 * band_half_width(model)  # acceptance envelope 3/(2R)
    x = abs(z.real)
    if x <= 0:
        return False
    return abs(z.imag - band_curve(x, model)) <= tol


def safe_radii(model: BandModel, n_range):
    """|z| = (2 n pi + tau)/(2R) for the given circle indices."""
    return [(2 * n * math.pi + model.tau) / (2 * model.R) for n in n_range]


def semicircle_min(evaluator, radius, n_theta=720):
    """min over the lower semicircle of |psi(z, 0)| / |z|^g."""
    th = np.linspace(math.pi, 2 * math.pi, n_theta + 1)
    z = radius * np.exp(1j * th)
    vals = np.abs(evaluator.psi(z, 0.0)) / np.abs(z) ** evaluator.base.genus
    return float(np.min(vals))


def c1_estimates_from_zeros(zeros, model: BandModel, re_min=None):
    """|c1| read off each located resonance: at a zero of 1 + c1 z^{-nu}
    e^{2izR} one has |c1| = |z|^nu e^{2 R Im z}. An independent check of the
    edge-derivative formula."""
    out = []
    for zr in zeros:
        z = zr.z if hasattr(zr, "z") else zr
        if z.imag >= 0 or (re_min is not None and abs(z.real) < re_min):
            continue
        out.append(abs(z) ** model.nu * math.exp(2 * model.R * z.imag))
    return out


def resonance_density(zeros, re_lo, re_hi):
    """Resonances per unit Re z in [re_lo, re_hi] (expected about R/pi)."""
    count = sum(1 for zr in zeros
                if zr.klass == "resonance" and re_lo <= zr.z.real <= re_hi)
    return count / (re_hi - re_lo)


def band_report_rows(zeros, model: BandModel, tol=None):
    """Per-resonance rows: re, im, predicted depth, deviation, in-band."""
    rows = []
    for zr in zeros:
        if zr.klass != "resonance" or abs(zr.z.real) <= 0:
            continue
        pred = band_curve(abs(zr.z.real), model)
        dev = zr.z.imag - pred
        rows.append((zr.z.real, zr.z.imag, float(pred), float(dev),
                     in_band(zr.z, model, tol)))
    return rows


def band_report_csv(zeros, model: BandModel, tol=None):
    lines = ["re_z,im_z,predicted_im,deviation,in_band"]
    for re, im, pred, dev, ok in band_report_rows(zeros, model, tol):
        lines.append(",".join([fmt_float(re), fmt_float(im), fmt_float(pred),
                               fmt_float(dev), "1" if ok else "0"]))
    return "\n".join(lines) + "\n"
