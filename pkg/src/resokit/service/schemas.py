"""Request and response bodies for the pipeline service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class RunRequest(BaseModel):
    """Body for /forward, /roundtrip and /band."""

    config: dict
    threads: int = Field(default=1, ge=1, le=64)
    tol_scale: float = Field(default=1.0, gt=0)


class InverseRequest(BaseModel):
    """Body for /inverse: a zero-set document plus the config."""

    config: dict
    zero_set: dict
    tol_scale: float = Field(default=1.0, gt=0)


class ValidateRequest(BaseModel):
    config: dict


class RunResponse(BaseModel):
    """Artifact payload: file name -> full text content, plus a summary."""

    summary: dict
    files: dict[str, str]


class ValidateResponse(BaseModel):
    valid: bool
    config_sha256: str
    resolved: dict
