"""Shared test plumbing: fixture paths, archive building, synthetic units,
and a tiny local HTTP server for wire-format tests."""

from __future__ import annotations

import io
import json
import tarfile
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from simaudit.extract import FunctionUnit, UnitKind, content_hash, normalize

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


def make_archive(path: Path, files: dict[str, str]) -> Path:
    """Write a gzip tar whose members appear in dict order, metadata pinned
    so repeated builds ingest identically."""
    with tarfile.open(path, "w:gz") as tf:
        for name, text in files.items():
            data = text.encode("utf-8")
            info = tarfile.TarInfo(name=name)
            info.size = len(data)
            info.mtime = 0
            tf.addfile(info, io.BytesIO(data))
    return path


def mk_unit(unit_id: str, *, name: str | None = None, contract: str = "C",
            file_path: str = "f.sol", calls: tuple[str, ...] = (),
            body: str | None = None, kind: UnitKind = UnitKind.FUNCTION) -> FunctionUnit:
    """A structurally valid unit without going through the extractor.

    The raw source is synthesized from the body (or the unit id, so distinct
    ids get distinct content by default) and normalized/hashed for real.
    """
    if name is None:
        name = unit_id.rsplit("::", 1)[-1].split("#", 1)[0]
    raw = body if body is not None else f"function {name}() public {{ /* {unit_id} */ }}"
    norm = normalize(raw)
    return FunctionUnit(
        unit_id=unit_id,
        kind=kind,
        name=name,
        contract=contract,
        file_path=file_path,
        raw_source=raw,
        normalized_source=norm,
        content_hash=content_hash(norm),
        declared_calls=tuple(calls),
        source_span=(0, len(raw)),
    )


class CannedHTTPServer:
    """One-endpoint HTTP server that records request bodies and headers and
    replies with a fixed status and JSON payload (or a callable on the body).
    """

    def __init__(self, payload, status: int = 200):
        self.payload = payload
        self.status = status
        self.requests: list[dict] = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                outer.requests.append({
                    "path": self.path,
                    "body": body,
                    "headers": dict(self.headers),
                })
                reply = outer.payload(body) if callable(outer.payload) else outer.payload
                data = json.dumps(reply).encode("utf-8")
                self.send_response(outer.status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self._server.server_port}/"
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def __enter__(self) -> "CannedHTTPServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()
