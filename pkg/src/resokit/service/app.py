"""FastAPI application wrapping the pipeline.

Error mapping (mirrors the CLI exit codes): ValidationFailure -> 422,
NumericalFailure -> 500, both with a structured ``error`` body naming the
exception type, the message, and any details the computation attached.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import NumericalFailure, ValidationFailure
from ..pipeline import (json_safe, run_band, run_forward, run_inverse,
                        run_roundtrip, validate_config)
from .schemas import (InverseRequest, RunRequest, RunResponse,
                      ValidateRequest, ValidateResponse)

log = logging.getLogger("resokit.service")


def _jsonable(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return json_safe(value)


def _error_body(exc: Exception, kind: str) -> dict:
    body = {
        "kind": kind,
        "type": type(exc).__name__,
        "message": str(exc),
    }
    path = getattr(exc, "path", None)
    if path:
        body["path"] = path
    details = getattr(exc, "details", None)
    if details:
        body["details"] = _jsonable(details)
    return {"error": body}


def create_app() -> FastAPI:
    app = FastAPI(title="resokit", version=__version__)

    @app.exception_handler(ValidationFailure)
    async def _on_validation(request, exc):
        log.info("validation failure: %s", exc)
        return JSONResponse(status_code=422,
                            content=_error_body(exc, "validation"))

    @app.exception_handler(NumericalFailure)
    async def _on_numerical(request, exc):
        log.warning("numerical failure: %s", exc)
        return JSONResponse(status_code=500,
                            content=_error_body(exc, "numerical"))

    def _respond(result: dict) -> RunResponse:
        return RunResponse(summary=json_safe(result["summary"]),
                           files=result["files"])

    @app.post("/forward", response_model=RunResponse)
    def forward(req: RunRequest):
        return _respond(run_forward(req.config, threads=req.threads,
                                    tol_scale=req.tol_scale))

    @app.post("/inverse", response_model=RunResponse)
    def inverse(req: InverseRequest):
        return _respond(run_inverse(req.zero_set, req.config,
                                    tol_scale=req.tol_scale))

    @app.post("/roundtrip", response_model=RunResponse)
    def roundtrip(req: RunRequest):
        return _respond(run_roundtrip(req.config, threads=req.threads,
                                      tol_scale=req.tol_scale))

    @app.post("/band", response_model=RunResponse)
    def band(req: RunRequest):
        return _respond(run_band(req.config, threads=req.threads,
                                 tol_scale=req.tol_scale))

    @app.post("/validate", response_model=ValidateResponse)
    def validate(req: ValidateRequest):
        return ValidateResponse(**validate_config(req.config))

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/version")
    def version():
        return {"tool": "resokit", "version": __version__}

    return app


app = create_app()
