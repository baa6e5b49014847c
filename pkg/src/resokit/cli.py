"""Command-line front end.

The CLI is a thin client of the pipeline service: every subcommand posts a
request to the FastAPI app (in-process by default, over the network when
RESOKIT_URL names a running server), writes the returned artifact files,
and prints the summary as JSON on stdout.

Exit codes: 0 success, 2 validation failure (bad config, bad input files,
bad arguments), 3 numerical failure (non-convergence, certification or
reconstruction breakdown), 1 anything unexpected.

Set RESONANCE_LOG=debug|info|warning|error to control verbosity (stderr).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import httpx

from . import __version__
from .pipeline import write_artifacts

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("resokit.cli")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def _setup_logging():
    level_name = os.environ.get("RESONANCE_LOG", "warning").strip().lower()
    levels = {"debug": logging.DEBUG, "info": logging.INFO,
              "warning": logging.WARNING, "error": logging.ERROR}
    level = levels.get(level_name)
    if level is None:
        try:
            level = int(level_name)
        except ValueError:
            level = logging.WARNING
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: "
                                           "%(message)s"))
    root = logging.getLogger("resokit")
    root.handlers[:] = [handler]
    root.setLevel(level)


def _request(endpoint: str, body: dict) -> httpx.Response:
    url = os.environ.get("RESOKIT_URL", "").strip()
    if url:
        log.debug("using remote service at %s", url)
        with httpx.Client(base_url=url, timeout=None) as client:
            return client.post(endpoint, json=body)

    import asyncio

    from .service.app import app

    async def _go():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(
                transport=transport, base_url="http://resokit.internal",
                timeout=None) as client:
            return await client.post(endpoint, json=body)

    return asyncio.run(_go())


def _load_json_file(path: Path, what: str) -> dict:
    if not path.exists():
        raise CliError(f"{what} file not found: {path}", EXIT_VALIDATION)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise CliError(
            f"{what} file {path} is not valid JSON at line {err.lineno}, "
            f"column {err.colno}: {err.msg}", EXIT_VALIDATION) from err
    if not isinstance(doc, dict):
        raise CliError(f"{what} file {path} must hold a JSON object",
                       EXIT_VALIDATION)
    return doc


def _load_config(path_str: str) -> dict:
    path = Path(path_str)
    doc = _load_json_file(path, "config")
    # inline file-referenced sub-specs: the service must never need the
    # client's filesystem
    for name in ("base", "perturbation"):
        value = doc.get(name)
        if isinstance(value, str):
            ref = Path(value)
            if not ref.is_absolute():
                ref = path.parent / ref
            doc[name] = _load_json_file(ref, f"config field '{name}'")
    return doc


def _post(endpoint: str, body: dict) -> dict:
    try:
        resp = _request(endpoint, body)
    except httpx.HTTPError as err:
        raise CliError(f"service request failed: {err}",
                       EXIT_UNEXPECTED) from err
    try:
        payload = resp.json()
    except ValueError:
        payload = {}
    if resp.status_code == 200:
        return payload
    error = payload.get("error") if isinstance(payload, dict) else None
    if error:
        where = f" (at {error['path']})" if error.get("path") else ""
        message = f"{error.get('type', 'error')}: " \
                  f"{error.get('message', '')}{where}"
        code = (EXIT_NUMERICAL if error.get("kind") == "numerical"
                else EXIT_VALIDATION)
        raise CliError(message, code)
    if resp.status_code == 422:
        raise CliError(f"invalid request: {json.dumps(payload)}",
                       EXIT_VALIDATION)
    raise CliError(f"service error {resp.status_code}: "
                   f"{json.dumps(payload)[:500]}", EXIT_UNEXPECTED)


def _deliver(payload: dict, out_dir: str) -> None:
    files = payload.get("files", {})
    written = write_artifacts(files, out_dir)
    for path in written:
        log.info("wrote %s", path)
    print(json.dumps({"summary": payload.get("summary", {}),
                      "files": written}, indent=2, sort_keys=True))


def _out_dir(args, config_doc: dict) -> str:
    if args.out:
        return args.out
    if config_doc.get("out_dir"):
        return config_doc["out_dir"]
    return "."


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_forward(args) -> int:
    doc = _load_config(args.config)
    payload = _post("/forward", {"config": doc, "threads": args.threads,
                                 "tol_scale": args.tol_scale})
    _deliver(payload, _out_dir(args, doc))
    return EXIT_OK


def cmd_inverse(args) -> int:
    doc = _load_config(args.config)
    zero_doc = _load_json_file(Path(args.zero_set), "zero-set")
    payload = _post("/inverse", {"config": doc, "zero_set": zero_doc,
                                 "tol_scale": args.tol_scale})
    _deliver(payload, _out_dir(args, doc))
    return EXIT_OK


def cmd_roundtrip(args) -> int:
    doc = _load_config(args.config)
    payload = _post("/roundtrip", {"config": doc, "threads": args.threads,
                                   "tol_scale": args.tol_scale})
    _deliver(payload, _out_dir(args, doc))
    return EXIT_OK


def cmd_band(args) -> int:
    doc = _load_config(args.config)
    payload = _post("/band", {"config": doc, "threads": args.threads,
                              "tol_scale": args.tol_scale})
    _deliver(payload, _out_dir(args, doc))
    return EXIT_OK


def cmd_validate(args) -> int:
    doc = _load_config(args.config)
    payload = _post("/validate", {"config": doc})
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resokit",
        description="forward and inverse resonance computations for "
                    "half-line Schrodinger operators")
    parser.add_argument("--version", action="version",
                        version=f"resokit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, threads=True):
        p.add_argument("--config", required=True,
                       help="experiment config (JSON)")
        p.add_argument("--out", default=None,
                       help="output directory (default: config out_dir "
                            "or cwd)")
        if threads:
            p.add_argument("--threads", type=int, default=1,
                           help="worker threads for the zero search")
        p.add_argument("--tol-scale", dest="tol_scale", type=float,
                       default=1.0,
                       help="multiply every tolerance by this factor")

    p = sub.add_parser("forward", help="kernel, zero set, M samples")
    common(p)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("inverse",
                       help="reconstruct M from a zero-set document")
    common(p, threads=False)
    p.add_argument("--zero-set", dest="zero_set", required=True,
                   help="zero-set JSON produced by the forward stage")
    p.set_defaults(func=cmd_inverse)

    p = sub.add_parser("roundtrip", help="forward then inverse, compared")
    common(p)
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("band", help="resonance-band report")
    common(p)
    p.set_defaults(func=cmd_band)

    p = sub.add_parser("validate", help="check a config and print its hash")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8077)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except KeyboardInterrupt:
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
