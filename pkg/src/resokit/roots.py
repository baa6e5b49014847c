"""Zero location and certification for psi(., 0) by the argument principle.

Contours are closed polylines; the winding number is the accumulated
principal argument of consecutive value ratios, with every segment refined
until its phase jump is below pi/4, which pins the branch uniquely. A
rectangle is quadrisected while its winding is positive; boxes at the
target resolution become clusters that are refined by Delves-Lyness
centroids (contour integral of zeta dlog f, needing no derivative), then
polished by a modified Newton iteration fed by the ODE evaluation of
(psi, dpsi/dz). Each zero is certified by re-counting the winding on a
small circle around it, which must equal the recorded multiplicity.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (ContourThroughZero, MaxDepth, NonConvergence,
                     NonIntegerWinding, ValidationFailure)
from .serial import c_to_json, cseq_to_json, json_to_c, json_to_cseq

PHASE_CAP = math.pi / 4
SPLIT_NUDGES = (0.5, 0.53, 0.47, 0.56)
ORIGIN_NOTCH = 1e-6


# ---------------------------------------------------------------------------
# winding numbers on closed polylines
# ---------------------------------------------------------------------------

class _Contour:
    """Closed polyline with cached f values, refinable per segment."""

    def __init__(self, f, pts):
        self.f = f
        self.pts = list(np.asarray(pts, dtype=complex))
        self.vals = list(np.asarray(f(np.array(self.pts)), dtype=complex))
        self._check_floor(self.pts, self.vals)

    @staticmethod
    def _check_floor(pts, vals):
        for p, v in zip(pts, vals):
            if not np.isfinite(v) or abs(v) < 1e-280:
                raise ContourThroughZero(
                    f"contour point z={p:.8g} has |f| = {abs(v):.3g}")

    def refine(self, max_rounds=48):
        """Insert chord midpoints until every phase jump is under the cap."""
        for _ in range(max_rounds):
            n = len(self.pts)
            ratios = [self.vals[(k + 1) % n] / self.vals[k] for k in range(n)]
            dargs = np.angle(np.array(ratios))
            bad = [k for k in range(n) if abs(dargs[k]) > PHASE_CAP]
            if not bad:
                return dargs
            newpts = []
            for k in bad:
                a, b = self.pts[k], self.pts[(k + 1) % n]
                if abs(b - a) < 1e-13 * (1 + abs(a)):
                    raise ContourThroughZero(
                        f"phase jump stays above cap on a collapsed segment "
                        f"near z={a:.8g}")
                newpts.append(0.5 * (a + b))
            newvals = np.asarray(self.f(np.array(newpts)), dtype=complex)
            self._check_floor(newpts, newvals)
            for k, p, v in sorted(zip(bad, newpts, newvals),
                                  key=lambda t: -t[0]):
                self.pts.insert(k + 1, p)
                self.vals.insert(k + 1, v)
        raise MaxDepth("contour refinement exceeded its round budget")

    def winding(self):
        dargs = self.refine()
        total = float(np.sum(dargs)) / (2 * math.pi)
        w = round(total)
        if abs(total - w) > 1e-6:
            raise NonIntegerWinding(
                f"accumulated phase {total:.3e} turns is not an integer")
        return w

    def log_moment(self):
        """(1/2 pi i) oint zeta dlog f and the winding, from the same walk."""
        dargs = self.refine()
        n = len(self.pts)
        pts = np.array(self.pts)
        vals = np.array(self.vals)
        mids = 0.5 * (pts + np.roll(pts, -1))
        dlog = (np.log(np.abs(np.roll(vals, -1))) - np.log(np.abs(vals))
                + 1j * dargs)
        s1 = np.sum(mids * dlog) / (2j * math.pi)
        total = float(np.sum(dargs)) / (2 * math.pi)
        w = round(total)
        if abs(total - w) > 1e-6:
            raise NonIntegerWinding(
                f"accumulated phase {total:.3e} turns is not an integer")
        return w, s1


def _rect_points(re0, re1, im0, im1, max_spacing):
    """Rectangle boundary, sampled finely enough that the fastest global
    phase rotation (the e^{2izR} factor, rate 2R) cannot alias a full turn
    between neighbours. Local bursts near zeros are left to refinement."""
    def edge(a, b):
        n = max(4, int(math.ceil(abs(b - a) / max_spacing)))
        return a + (b - a) * np.arange(n) / n

    return np.concatenate([
        edge(re0 + 1j * im0, re1 + 1j * im0),
        edge(re1 + 1j * im0, re1 + 1j * im1),
        edge(re1 + 1j * im1, re0 + 1j * im1),
        edge(re0 + 1j * im1, re0 + 1j * im0)])


def winding_rectangle(f, rect, max_spacing=0.25):
    re0, re1, im0, im1 = rect
    return _Contour(f, _rect_points(re0, re1, im0, im1,
                                    max_spacing)).winding()


def _circle_points(center, radius, max_spacing):
    n0 = max(48, int(math.ceil(2 * math.pi * radius / max_spacing)))
    th = np.linspace(0.0, 2 * math.pi, n0, endpoint=False)
    return center + radius * np.exp(1j * th)


def winding_circle(f, center, radius, max_spacing=0.25):
    return _Contour(f, _circle_points(center, radius, max_spacing)).winding()


def circle_moment(f, center, radius, max_spacing=0.25):
    return _Contour(f, _circle_points(center, radius,
                                      max_spacing)).log_moment()


# ---------------------------------------------------------------------------
# quadrisection search
# ---------------------------------------------------------------------------

def _split_rect(f, rect, w_parent, max_spacing):
    """Quadrisect with nudged split lines; children windings must sum."""
    re0, re1, im0, im1 = rect
    last_err = None
    for fx in SPLIT_NUDGES:
        for fy in SPLIT_NUDGES:
            xm = re0 + (re1 - re0) * fx
            ym = im0 + (im1 - im0) * fy
            subs = [(re0, xm, im0, ym), (xm, re1, im0, ym),
                    (re0, xm, ym, im1), (xm, re1, ym, im1)]
            try:
                ws = [winding_rectangle(f, s, max_spacing) for s in subs]
            except ContourThroughZero as err:
                last_err = err
                continue
            if sum(ws) != w_parent:
                raise NonIntegerWinding(
                    f"child windings {ws} do not sum to parent {w_parent} "
                    f"on {rect}")
            return list(zip(subs, ws))
    raise last_err or ContourThroughZero(
        f"every nudged split of {rect} passes through a zero")


def subdivide(f, rect, coarse_tol=1e-3, max_spacing=0.25, max_boxes=20000):
    """All clusters (center, winding) of zeros of f inside rect."""
    w0 = winding_rectangle(f, rect, max_spacing)
    stack = [(tuple(rect), w0)]
    clusters = []
    seen = 0
    while stack:
        r, w = stack.pop()
        seen += 1
        if seen > max_boxes:
            raise MaxDepth("quadrisection produced too many boxes")
        if w == 0:
            continue
        re0, re1, im0, im1 = r
        if max(re1 - re0, im1 - im0) <= coarse_tol:
            clusters.append((0.5 * (re0 + re1) + 0.5j * (im0 + im1), w))
            continue
        stack.extend(_split_rect(f, r, w, max_spacing))
    return w0, clusters


# ---------------------------------------------------------------------------
# refinement of one cluster
# ---------------------------------------------------------------------------

def refine_cluster(f_vec, ode_pair, center, mult, start_radius,
                   max_spacing=0.25, newton_tol=1e-11, max_iter=48):
    """Centroid contractions, then modified Newton on the ODE values."""
    z, r = center, start_radius
    for _ in range(6):
        w, s1 = circle_moment(f_vec, z, r, max_spacing)
        if w == 0:
            raise NonConvergence(
                f"cluster near {z:.8g} lost its zeros during contraction")
        znew = s1 / w
        if abs(znew - z) > 0.75 * r:
            r *= 1.6  # centroid outside the trust region: widen
            continue
        z, r = znew, max(abs(znew - z) * 0.5, r * 0.25)
        if r < 1e-7:
            break
    scale = 1.0 + abs(z)
    # cheap pre-polish: finite-difference Newton on the vectorized grid
    # evaluator, down to its own noise floor; the ODE Newton below then
    # needs only a final step or two
    for _ in range(24):
        d = 1e-6 * scale
        v0, vp, vm = f_vec(np.array([z, z + d, z - d]))
        dval = (vp - vm) / (2 * d)
        if dval == 0:
            break
        step = -mult * v0 / dval
        z = z + step
        if abs(step) < 1e-8 * scale:
            break
    for it in range(max_iter):
        val, dval = ode_pair(z)
        if val == 0:
            return z  # exact hit
        if dval == 0:
            raise NonConvergence(f"zero derivative in Newton at {z:.8g}")
        step = -mult * val / dval
        z = z + step
        if abs(step) < newton_tol * scale:
            return z
    raise NonConvergence(
        f"Newton polish did not converge near {z:.8g} (mult {mult})")


# ---------------------------------------------------------------------------
# zero set container
# ---------------------------------------------------------------------------

@dataclass
class Zero:
    z: complex
    mult: int
    klass: str
    lam: complex

    def to_spec(self):
        return {"z": c_to_json(self.z), "mult": self.mult,
                "class": self.klass, "lambda": c_to_json(self.lam)}

    @classmethod
    def from_spec(cls, d):
        return cls(z=json_to_c(d["z"]), mult=int(d["mult"]),
                   klass=d.get("class", "unclassified"),
                   lam=json_to_c(d.get("lambda", [0.0, 0.0])))


@dataclass
class ZeroSet:
    zeros: list
    lambda0: complex
    genus: int
    period: float
    rectangle: tuple
    psi_at_origin: complex
    wronskian_coeffs: np.ndarray
    conjugate_defect: float = float("nan")
    metadata: dict = field(default_factory=dict)

    @property
    def total_multiplicity(self):
        return sum(z.mult for z in self.zeros)

    def to_spec(self):
        return {
            "lambda0": c_to_json(self.lambda0),
            "genus": self.genus,
            "period": "inf" if math.isinf(self.period) else self.period,
            "rectangle": list(self.rectangle),
            "psi_at_origin": c_to_json(self.psi_at_origin),
            "wronskian": {"coeffs": cseq_to_json(self.wronskian_coeffs)},
            "conjugate_defect": self.conjugate_defect,
            "zeros": [zr.to_spec() for zr in self.zeros],
            "metadata": self.metadata,
        }

    def to_json(self):
        return json.dumps(self.to_spec(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_spec(cls, d):
        try:
            period = (float("inf") if d.get("period", "inf") == "inf"
                      else float(d["period"]))
            return cls(
                zeros=[Zero.from_spec(e) for e in d["zeros"]],
                lambda0=json_to_c(d.get("lambda0", 0.0)),
                genus=int(d.get("genus", 0)),
                period=period,
                rectangle=tuple(d.get("rectangle", (0, 0, 0, 0))),
                psi_at_origin=json_to_c(d.get("psi_at_origin", [1.0, 0.0])),
                wronskian_coeffs=json_to_cseq(
                    d.get("wronskian", {}).get("coeffs", [])),
                conjugate_defect=float(d.get("conjugate_defect", "nan")),
                metadata=d.get("metadata", {}))
        except (KeyError, TypeError, IndexError, ValueError) as err:
            raise ValidationFailure(f"malformed zero-set document: {err}",
                                    path="zeros") from err

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as err:
            raise ValidationFailure(
                f"zero-set file is not valid JSON (line {err.lineno}, "
                f"column {err.colno}): {err.msg}", path="") from err
        return cls.from_spec(doc)


def classify(z, lambda0=0.0, delta=1e-8):
    if z.imag > delta:
        return "eigenvalue"
    if z.imag < -delta:
        return "resonance"
    return "real_axis"


# ---------------------------------------------------------------------------
# top-level search
# ---------------------------------------------------------------------------

def locate_zeros(evaluator, rect, coarse_tol=1e-3, threads=1,
                 cert_scale=1e-4, metadata=None) -> ZeroSet:
    """Find, polish, and certify all zeros of psi(., 0) inside rect."""
    rect = tuple(float(v) for v in rect)
    if rect[0] >= rect[1] or rect[2] >= rect[3]:
        raise ValidationFailure("empty or inverted search rectangle",
                                path="rectangle")
    f_vec = lambda zz: evaluator.psi(zz, 0.0)
    # worst-case global phase rate along a contour is 2R (the e^{2izR}
    # factor); keep initial samples at ~pi/4 of a turn at that rate
    max_spacing = math.pi / (8.0 * evaluator.kernel.R)

    def ode_pair(z):
        y, _, u, _ = evaluator.psi_ode(complex(z), 0.0, with_dz=True)
        return y, u

    total_w, clusters = subdivide(f_vec, rect, coarse_tol=coarse_tol,
                                  max_spacing=max_spacing)

    def work(item):
        center, mult = item
        z = refine_cluster(f_vec, ode_pair, center, mult,
                           start_radius=0.75 * coarse_tol,
                           max_spacing=max_spacing)
        return z, mult

    if threads > 1 and len(clusters) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            polished = list(pool.map(work, clusters))
    else:
        polished = [work(c) for c in clusters]
    polished.sort(key=lambda t: (t[0].real, t[0].imag))

    # certification: the winding on a small circle equals the multiplicity
    zs = np.array([p[0] for p in polished])
    for idx, (z, mult) in enumerate(polished):
        r = cert_scale * (1.0 + abs(z))
        if len(polished) > 1:
            others = np.abs(zs - z)
            others[idx] = np.inf
            r = min(r, 0.4 * float(np.min(others)))
        w = winding_circle(f_vec, z, max(r, 1e-9), max_spacing)
        if w != mult:
            raise NonIntegerWinding(
                f"certification failed at {z:.10g}: circle winding {w} != "
                f"recorded multiplicity {mult}")

    base = evaluator.base
    lam0 = base.lambda0
    zeros = [Zero(z=z, mult=m, klass=classify(z, lam0), lam=z * z + lam0)
             for z, m in polished]

    defect = float("nan")
    if _is_real_problem(evaluator):
        defect = conjugate_symmetry_defect([z.z for z in zeros])

    return ZeroSet(
        zeros=zeros, lambda0=lam0, genus=base.genus, period=base.period,
        rectangle=rect, psi_at_origin=complex(evaluator.psi(0.0, 0.0)),
        wronskian_coeffs=evaluator._wpoly.coeffs,
        conjugate_defect=defect,
        metadata=metadata or {})


def _is_real_problem(evaluator):
    base = evaluator.base
    if abs(complex(base.lambda0).imag) > 1e-14 or not evaluator.pert.is_real():
        return False
    xs = np.linspace(0.05, 2.0, 7)
    try:
        q = base.q0_shifted(xs)
    except Exception:
        return False
    return bool(np.max(np.abs(np.asarray(q).imag)) < 1e-12)


def conjugate_symmetry_defect(zs):
    """max over zeros of the distance from -conj(z) to the set (scaled)."""
    if not zs:
        return 0.0
    arr = np.array(zs)
    worst = 0.0
    for z in arr:
        d = np.min(np.abs(arr - (-np.conj(z)))) / (1.0 + abs(z))
        worst = max(worst, float(d))
    return worst
