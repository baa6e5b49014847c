"""HTTP service exposing the pipeline; the CLI is a thin client of it."""

from .app import app, create_app  # noqa: F401
