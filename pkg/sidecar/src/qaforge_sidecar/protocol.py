"""Line-delimited JSON protocol over stdio.

Requests are single lines ``{"id": n, "op": name, "params": {...}}``;
every request gets exactly one reply line, either ``{"id", "result"}``
or ``{"id", "error": {"type", "message", ...}}``. The loop is
single-threaded, so replies happen to come back in request order, but
clients match on id and must not rely on that.

Totality is the load-bearing property: no input line, however broken,
may crash the loop or go unanswered. Unparseable lines are answered
with id null since the request id never decoded.
"""

from __future__ import annotations

import json
import sys

from .errors import InvalidRequestError, MissingPageError, SidecarError

_OPS = ("rasterize", "extract_char_counts", "detect_layout", "enrich_page")


class SidecarServer:
    def __init__(self, service):
        self._handlers = {name: getattr(service, name) for name in _OPS}
        self._stop = False

    def handle_line(self, line: str) -> dict:
        request_id = None
        try:
            try:
                message = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidRequestError(f"unparseable request line: {exc}") from exc
            if not isinstance(message, dict):
                raise InvalidRequestError("request must be a JSON object")
            request_id = message.get("id")
            op = message.get("op")
            if not isinstance(op, str):
                raise InvalidRequestError("request is missing an op")
            params = message.get("params") or {}
            if not isinstance(params, dict):
                raise InvalidRequestError("params must be an object")
            if op == "shutdown":
                self._stop = True
                return {"id": request_id, "result": {"ok": True}}
            handler = self._handlers.get(op)
            if handler is None:
                raise InvalidRequestError(f"unknown op {op!r}")
            return {"id": request_id, "result": handler(params)}
        except SidecarError as exc:
            error = {"type": exc.wire_type, "message": str(exc)}
            if isinstance(exc, MissingPageError):
                error["page_index"] = exc.page_index
            return {"id": request_id, "error": error}
        except Exception as exc:  # totality: the loop must answer, not die
            return {
                "id": request_id,
                "error": {"type": type(exc).__name__, "message": str(exc)},
            }

    def serve(self, stdin=None, stdout=None) -> None:
        source = stdin if stdin is not None else sys.stdin
        sink = stdout if stdout is not None else sys.stdout
        for line in source:
            if not line.strip():
                continue
            reply = self.handle_line(line)
            sink.write(json.dumps(reply, separators=(",", ":")) + "\n")
            sink.flush()
            if self._stop:
                return
