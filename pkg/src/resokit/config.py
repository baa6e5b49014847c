"""Experiment configuration: validated models, canonical hash, file loading.

A config document is JSON. The ``base`` and ``perturbation`` entries are
either inline spec objects (the formats owned by :mod:`resokit.potential`
and :mod:`resokit.kernel`) or string paths to JSON files holding them;
paths are resolved relative to the config file. Hashing always happens on
the *resolved* form, so a config that inlines a spec and one that
references the identical file produce the same hash and therefore
byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import pydantic
from pydantic import BaseModel, Field, field_validator, model_validator

from .errors import ValidationFailure

ORIGIN_NOTCH = 1e-6


class KernelParams(BaseModel):
    """Neumann-series grid parameters."""

    model_config = pydantic.ConfigDict(extra="forbid")

    h: float = Field(gt=0, description="grid step in the rotated coordinate")
    tol: float = Field(default=1e-10, gt=0)
    max_terms: int = Field(default=200, gt=0)


class RootSearchParams(BaseModel):
    """Search rectangle and certification tolerances for the zero finder."""

    model_config = pydantic.ConfigDict(extra="forbid")

    rectangle: tuple[float, float, float, float]
    coarse_tol: float = Field(default=1e-3, gt=0)
    cert_scale: float = Field(default=1e-4, gt=0)

    @model_validator(mode="after")
    def _rectangle_sane(self):
        x0, x1, y0, y1 = self.rectangle
        if not all(math.isfinite(v) for v in self.rectangle):
            raise ValueError("rectangle coordinates must be finite")
        if x0 >= x1 or y0 >= y1:
            raise ValueError("rectangle is empty or inverted")
        # the contour must clear the origin notch: a boundary edge passing
        # through z = 0 could sit on a degenerate zero of the Wronskian
        dx = max(x0, 0.0, -x1)
        dy = max(y0, 0.0, -y1)
        on_edge_x = (abs(x0) <= ORIGIN_NOTCH or abs(x1) <= ORIGIN_NOTCH) \
            and y0 <= ORIGIN_NOTCH and y1 >= -ORIGIN_NOTCH
        on_edge_y = (abs(y0) <= ORIGIN_NOTCH or abs(y1) <= ORIGIN_NOTCH) \
            and x0 <= ORIGIN_NOTCH and x1 >= -ORIGIN_NOTCH
        inside_notch = math.hypot(dx, dy) <= ORIGIN_NOTCH and (
            on_edge_x or on_edge_y)
        if inside_notch:
            raise ValueError(
                "rectangle boundary passes through the origin notch "
                f"(|z| <= {ORIGIN_NOTCH}); move an edge off the origin")
        return self


class ReconstructionParams(BaseModel):
    """Inverse-stage controls: truncation, fit ray, tolerances."""

    model_config = pydantic.ConfigDict(extra="forbid")

    retain: Optional[int] = Field(default=None, gt=0,
                                  description="keep this many smallest-|z| "
                                  "zeros (conjugate pairs kept whole)")
    ray: tuple[float, float] = (0.03, 0.2)
    n_points: int = Field(default=48, ge=8)
    p: int = Field(default=1, ge=1)
    residual_threshold: float = Field(default=1.0, gt=0)

    @field_validator("ray")
    @classmethod
    def _ray_ordered(cls, v):
        lo, hi = v
        if not (0 < lo < hi):
            raise ValueError("fit ray fractions must satisfy 0 < lo < hi")
        return v


class MSampleParams(BaseModel):
    """Where the pipeline samples M for the batch-evaluation CSV."""

    model_config = pydantic.ConfigDict(extra="forbid")

    start: tuple[float, float] = (0.0, 0.5)
    stop: tuple[float, float] = (0.0, 5.0)
    count: int = Field(default=20, ge=2)

    def grid(self) -> np.ndarray:
        a = complex(*self.start)
        b = complex(*self.stop)
        return a + (b - a) * np.linspace(0.0, 1.0, self.count)


class ExperimentConfig(BaseModel):
    """Full pipeline configuration (forward, roots, inverse, outputs)."""

    model_config = pydantic.ConfigDict(extra="forbid")

    base: Union[dict, str]
    perturbation: Union[dict, str]
    kernel: KernelParams
    roots: RootSearchParams
    reconstruction: ReconstructionParams = ReconstructionParams()
    m_samples: MSampleParams = MSampleParams()
    out_dir: Optional[str] = None

    _anchor: Optional[Path] = pydantic.PrivateAttr(default=None)

    # ------------------------------------------------------------------
    # loading and resolution
    # ------------------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict, anchor: Optional[Path] = None
                  ) -> "ExperimentConfig":
        try:
            cfg = cls.model_validate(doc)
        except pydantic.ValidationError as err:
            first = err.errors()[0]
            loc = ".".join(str(p) for p in first["loc"]) or "<root>"
            raise ValidationFailure(
                f"invalid config field '{loc}': {first['msg']}",
                path=loc) from err
        cfg._anchor = anchor
        cfg._resolve_refs()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ValidationFailure(f"config file not found: {path}",
                                    path=str(path))
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise ValidationFailure(
                f"config is not valid JSON at line {err.lineno}, column "
                f"{err.colno}: {err.msg}", path=str(path)) from err
        if not isinstance(doc, dict):
            raise ValidationFailure("config document must be a JSON object",
                                    path=str(path))
        return cls.from_dict(doc, anchor=path.parent)

    def _resolve_refs(self):
        """Load file-referenced sub-specs so hashing sees actual content."""
        for name in ("base", "perturbation"):
            value = getattr(self, name)
            if isinstance(value, str):
                ref = Path(value)
                if not ref.is_absolute() and self._anchor is not None:
                    ref = self._anchor / ref
                if not ref.exists():
                    raise ValidationFailure(
                        f"config field '{name}' references a missing file: "
                        f"{ref}", path=name)
                try:
                    loaded = json.loads(ref.read_text())
                except json.JSONDecodeError as err:
                    raise ValidationFailure(
                        f"file for '{name}' is not valid JSON at line "
                        f"{err.lineno}: {err.msg}", path=name) from err
                setattr(self, name, loaded)

    # ------------------------------------------------------------------
    # canonical form
    # ------------------------------------------------------------------

    def resolved(self) -> dict[str, Any]:
        doc = self.model_dump(mode="json", exclude_none=True)
        doc.pop("out_dir", None)  # output location must not change content
        return doc

    def config_sha256(self) -> str:
        canonical = json.dumps(self.resolved(), sort_keys=True,
                               separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    # ------------------------------------------------------------------
    # object construction
    # ------------------------------------------------------------------

    def build_base(self):
        from .potential import BasePotential
        return BasePotential.from_spec(self.base)

    def build_perturbation(self):
        from .kernel import Perturbation
        return Perturbation.from_spec(self.perturbation)


def scaled(cfg: ExperimentConfig, tol_scale: float) -> ExperimentConfig:
    """A copy of cfg with every tolerance multiplied by tol_scale."""
    if tol_scale <= 0 or not math.isfinite(tol_scale):
        raise ValidationFailure("tol-scale must be a positive finite number",
                                path="tol_scale")
    if tol_scale == 1.0:
        return cfg
    doc = cfg.model_dump(mode="json", exclude_none=True)
    doc["kernel"]["tol"] = cfg.kernel.tol * tol_scale
    doc["roots"]["coarse_tol"] = cfg.roots.coarse_tol * tol_scale
    doc["roots"]["cert_scale"] = cfg.roots.cert_scale * tol_scale
    doc["reconstruction"]["residual_threshold"] = \
        cfg.reconstruction.residual_threshold * tol_scale
    return ExperimentConfig.from_dict(doc)
