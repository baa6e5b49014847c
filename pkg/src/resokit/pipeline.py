"""Artifact pipeline: the five commands behind the CLI and the service.

Every function here is pure with respect to the filesystem: it returns a
dict with a ``files`` mapping (relative name -> full text content) and a
``summary`` payload. :func:`write_artifacts` persists a ``files`` mapping
single-threaded. All emitted documents start with a header block carrying
the config hash and the tool version, and all float formatting is
deterministic, so identical configs produce byte-identical artifacts.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (band_from_perturbation, band_half_width,
                          band_report_csv, c1_estimates_from_zeros,
                          resonance_density, safe_radii, semicircle_min)
from .config import ExperimentConfig, scaled
from .errors import ValidationFailure
from .inverse import comparison_csv, reconstruct_m
from .jost import make_evaluator
from .roots import ZeroSet, locate_zeros
from .serial import c_to_json, fmt_float

TOOL = "resokit"

log = logging.getLogger("resokit.pipeline")


# ---------------------------------------------------------------------------
# deterministic document framing
# ---------------------------------------------------------------------------

def _meta(cfg_hash: str) -> dict:
    return {"tool": TOOL, "version": __version__, "config_sha256": cfg_hash}


def json_safe(value):
    """Recursively replace non-finite floats with None (strict JSON)."""
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def csv_document(body: str, cfg_hash: str) -> str:
    header = f"# {TOOL} {__version__}\n# config_sha256: {cfg_hash}\n"
    return header + body


def json_document(payload: dict, cfg_hash: str) -> str:
    doc = {"meta": _meta(cfg_hash), **payload}
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_artifacts(files: dict[str, str], out_dir) -> list[str]:
    """Persist a files mapping; single-threaded by design."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(files):
        target = out / name
        target.write_text(files[name])
        written.append(str(target))
    return written


def _as_config(config) -> ExperimentConfig:
    if isinstance(config, ExperimentConfig):
        return config
    if isinstance(config, dict):
        return ExperimentConfig.from_dict(config)
    return ExperimentConfig.load(config)


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

def _kernel_diagnostics(kernel) -> dict:
    return {
        "h": kernel.h,
        "tol": kernel.tol,
        "grid_points": kernel.N + 1,
        "support_radius": kernel.R,
        "contact_order": kernel.pert.contact_order,
        "terms_used": kernel.terms_used,
        "tail_bound": kernel.tail_bound,
        "moment_constant": kernel.moment_constant,
        "perturbation_l1": kernel.diff_l1,
        "term_bound_ratios": [float(r) for r in kernel.term_bound_ratios],
        "term_maxima": [float(m) for m in kernel.term_maxima],
    }


def _m_samples_csv(evaluator, grid) -> str:
    lines = ["re_z,im_z,re_psi,im_psi,re_m,im_m,method"]
    psi = evaluator.psi(grid, 0.0)
    m = evaluator.m_direct(grid)
    for z, p, mv in zip(grid, np.atleast_1d(psi), np.atleast_1d(m)):
        lines.append(",".join([
            fmt_float(z.real), fmt_float(z.imag),
            fmt_float(p.real), fmt_float(p.imag),
            fmt_float(mv.real), fmt_float(mv.imag), "direct"]))
    return "\n".join(lines) + "\n"


def run_forward(config, threads: int = 1, tol_scale: float = 1.0) -> dict:
    """Kernel build, zero search, M sampling; the forward data products."""
    cfg = scaled(_as_config(config), tol_scale)
    cfg_hash = cfg.config_sha256()
    log.info("forward: config %s", cfg_hash[:12])
    base = cfg.build_base()
    pert = cfg.build_perturbation()
    evaluator = make_evaluator(base, pert, h=cfg.kernel.h, tol=cfg.kernel.tol,
                               max_terms=cfg.kernel.max_terms)
    log.debug("forward: kernel built, %d Neumann terms",
              evaluator.kernel.terms_used)
    zero_set = locate_zeros(
        evaluator, cfg.roots.rectangle, coarse_tol=cfg.roots.coarse_tol,
        threads=max(1, int(threads)), cert_scale=cfg.roots.cert_scale,
        metadata=_meta(cfg_hash))
    log.info("forward: %d zeros certified in %s", len(zero_set.zeros),
             cfg.roots.rectangle)

    grid = cfg.m_samples.grid()
    files = {
        "kernel_diagnostics.json": json_document(
            {"kernel": _kernel_diagnostics(evaluator.kernel)}, cfg_hash),
        "kernel.csv": csv_document(evaluator.kernel.to_csv(), cfg_hash),
        "zero_set.json": zero_set.to_json(),
        "m_samples.csv": csv_document(_m_samples_csv(evaluator, grid),
                                      cfg_hash),
    }
    classes = [z.klass for z in zero_set.zeros]
    summary = {
        "config_sha256": cfg_hash,
        "zero_count": len(zero_set.zeros),
        "total_multiplicity": zero_set.total_multiplicity,
        "eigenvalues": classes.count("eigenvalue"),
        "resonances": classes.count("resonance"),
        "conjugate_defect": zero_set.conjugate_defect,
        "psi_at_origin": c_to_json(zero_set.psi_at_origin),
        "kernel_terms_used": evaluator.kernel.terms_used,
    }
    return {"files": files, "summary": summary, "zero_set": zero_set,
            "evaluator": evaluator, "config": cfg}


# ---------------------------------------------------------------------------
# inverse
# ---------------------------------------------------------------------------

def _retain(zero_set: ZeroSet, count) -> list[tuple[complex, int]]:
    pairs = [(z.z, z.mult) for z in zero_set.zeros]
    if count is None or count >= len(pairs):
        return pairs
    pairs.sort(key=lambda t: (abs(t[0]), t[0].real, t[0].imag))
    kept = pairs[:count]
    kept_zs = [z for z, _ in kept]
    # keep conjugate pairs whole so truncation preserves the symmetry class
    for z, m in pairs[count:]:
        partner = -z.conjugate()
        if any(abs(partner - w) < 1e-9 * (1 + abs(w)) for w in kept_zs) \
                and not any(abs(z - w) < 1e-9 * (1 + abs(w))
                            for w in kept_zs):
            kept.append((z, m))
            kept_zs.append(z)
    kept.sort(key=lambda t: (abs(t[0]), t[0].real, t[0].imag))
    return kept


def _load_zero_set(zero_set) -> ZeroSet:
    if isinstance(zero_set, ZeroSet):
        return zero_set
    if isinstance(zero_set, dict):
        return ZeroSet.from_spec(zero_set)
    if isinstance(zero_set, (str, Path)):
        path = Path(zero_set)
        if not path.exists():
            raise ValidationFailure(f"zero-set file not found: {path}",
                                    path=str(path))
        return ZeroSet.from_json(path.read_text())
    raise ValidationFailure("unsupported zero-set input type",
                            path="zero_set")


def run_inverse(zero_set, config, forward=None, tol_scale: float = 1.0
                ) -> dict:
    """M-function reconstruction from a zero-set document."""
    cfg = scaled(_as_config(config), tol_scale)
    cfg_hash = cfg.config_sha256()
    zs = _load_zero_set(zero_set)
    if len(zs.wronskian_coeffs) == 0:
        raise ValidationFailure(
            "zero-set document carries no Wronskian coefficients",
            path="wronskian.coeffs")
    rc = cfg.reconstruction
    pairs = _retain(zs, rc.retain)
    log.info("inverse: reconstructing from %d of %d zeros", len(pairs),
             len(zs.zeros))
    rec = reconstruct_m(
        pairs, g=zs.genus, W=list(zs.wronskian_coeffs), p=rc.p,
        ray=rc.ray, n_points=rc.n_points,
        metadata={"retained": len(pairs), "of": len(zs.zeros)},
        hadamard_kwargs={"residual_threshold": rc.residual_threshold})

    grid = cfg.m_samples.grid()
    comparison = comparison_csv(rec, grid, forward=forward)
    files = {
        "reconstruction_report.json": json_document(
            {"reconstruction": rec.report()}, cfg_hash),
        "m_comparison.csv": csv_document(comparison, cfg_hash),
    }
    summary = {
        "config_sha256": cfg_hash,
        "retained_zeros": len(pairs),
        "m_at_0": c_to_json(rec.m0),
        "m_prime_at_0": c_to_json(rec.m1),
        "data_scale": c_to_json(rec.data_scale),
        "hadamard_fit_residual": rec.hadamard.fit_residual,
    }
    if forward is not None:
        rel = []
        for line in comparison.strip().splitlines()[1:]:
            cell = line.split(",")[6]
            if cell:
                rel.append(float(cell))
        if rel:
            summary["max_rel_err"] = max(rel)
            summary["median_rel_err"] = float(np.median(rel))
    return {"files": files, "summary": summary, "reconstruction": rec,
            "config": cfg}


# ---------------------------------------------------------------------------
# composition and band report
# ---------------------------------------------------------------------------

def run_roundtrip(config, threads: int = 1, tol_scale: float = 1.0) -> dict:
    """Forward stage, then reconstruction from its zero set, then compare."""
    fwd = run_forward(config, threads=threads, tol_scale=tol_scale)
    cfg = fwd["config"]
    evaluator = fwd["evaluator"]
    inv = run_inverse(fwd["zero_set"], cfg,
                      forward=lambda z: evaluator.m_direct(z))
    cfg_hash = cfg.config_sha256()
    summary = {
        "config_sha256": cfg_hash,
        "forward": fwd["summary"],
        "inverse": inv["summary"],
    }
    files = dict(fwd["files"])
    files.update(inv["files"])
    files["roundtrip_summary.json"] = json_document(
        {"roundtrip": summary}, cfg_hash)
    return {"files": files, "summary": summary,
            "reconstruction": inv["reconstruction"], "config": cfg}


def run_band(config, threads: int = 1, tol_scale: float = 1.0) -> dict:
    """Resonance-band prediction versus located resonances."""
    fwd = run_forward(config, threads=threads, tol_scale=tol_scale)
    cfg = fwd["config"]
    cfg_hash = cfg.config_sha256()
    base = cfg.build_base()
    pert = cfg.build_perturbation()
    model = band_from_perturbation(base, pert)
    zeros = fwd["zero_set"].zeros

    rows_csv = band_report_csv(zeros, model)
    in_band_count = sum(
        1 for line in rows_csv.strip().splitlines()[1:]
        if line.endswith(",1"))
    resonances = [z for z in zeros if z.klass == "resonance"]
    c1_est = c1_estimates_from_zeros(
        zeros, model, re_min=4.0 * math.pi / pert.R)
    rect = cfg.roots.rectangle
    density = (resonance_density(zeros, max(rect[0], 0.0) + 1.0, rect[1])
               if rect[1] > max(rect[0], 0.0) + 2.0 else float("nan"))
    radii = safe_radii(model, [15, 20, 25])
    minima = [semicircle_min(fwd["evaluator"], r) for r in radii]

    summary = {
        "config_sha256": cfg_hash,
        "nu": model.nu,
        "c1": c_to_json(model.c1),
        "sigma": model.sigma,
        "kappa": model.kappa,
        "tau": model.tau,
        "half_width": band_half_width(model),
        "resonance_count": len(resonances),
        "in_band_count": in_band_count,
        "median_c1_estimate": (float(np.median(c1_est)) if c1_est
                               else float("nan")),
        "resonance_density": density,
        "safe_semicircles": [
            {"n": n, "radius": r, "min_scaled_psi": m}
            for n, r, m in zip([15, 20, 25], radii, minima)],
    }
    files = dict(fwd["files"])
    files["band_report.csv"] = csv_document(rows_csv, cfg_hash)
    files["band_summary.json"] = json_document({"band": summary}, cfg_hash)
    return {"files": files, "summary": summary, "config": cfg}


def validate_config(config) -> dict:
    """Parse + validate a config document; returns its canonical identity."""
    cfg = _as_config(config)
    return {
        "valid": True,
        "config_sha256": cfg.config_sha256(),
        "resolved": cfg.resolved(),
    }
