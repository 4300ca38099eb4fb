"""Client side of the page-preparation sidecar.

The heavy lifting (rasterization, layout detection, page enrichment,
character counting) happens in a separate process speaking line-delimited
JSON over stdio. This module holds the domain types for page artifacts,
a client for that protocol, and an in-process handle that serves the same
data straight from a fixture pack directory so the core pipeline can run
with no imaging stack at all.

Fixture pack layout (one directory per document)::

    <pack>/page_<n>.png    rasterized page image, n is 1-based
    <pack>/layout.jsonl    one layout element per line
    <pack>/chars.json      per-page character counts (defines page count)
"""

from __future__ import annotations

import json
import struct
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    MissingPageError,
    SidecarProtocolError,
    UnreadableDocumentError,
)

NONTEXT_CLASSES = frozenset({"table", "figure", "chart"})


@dataclass(frozen=True)
class PageImage:
    """One rasterized page. ``payload_ref`` points at the encoded image."""

    doc_id: str
    page_index: int  # 1-based, document-global
    width: int
    height: int
    payload_ref: str

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"page {self.page_index}: non-positive dimensions")
        if self.page_index < 1:
            raise ValueError("page_index is 1-based")


@dataclass(frozen=True)
class LayoutElement:
    """A detected region on a page, in pixel coordinates."""

    page_index: int
    bbox: tuple[float, float, float, float]  # x0, y0, x1, y1
    element_class: str  # heading | paragraph | table | figure | chart | other
    confidence: float

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        if not (0 <= x0 < x1 and 0 <= y0 < y1):
            raise ValueError(f"degenerate bbox {self.bbox}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def is_nontext(self) -> bool:
        return self.element_class in NONTEXT_CLASSES

    def to_dict(self) -> dict:
        return {
            "page_index": self.page_index,
            "bbox": list(self.bbox),
            "element_class": self.element_class,
            "confidence": self.confidence,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LayoutElement":
        return cls(
            page_index=int(d["page_index"]),
            bbox=tuple(float(v) for v in d["bbox"]),
            element_class=str(d["element_class"]),
            confidence=float(d["confidence"]),
        )


@dataclass(frozen=True)
class EnrichedPage:
    """A page plus its layout elements and the recomposed image."""

    base: PageImage
    elements: tuple[LayoutElement, ...]
    composite_ref: str

    @property
    def has_nontext(self) -> bool:
        return any(e.is_nontext for e in self.elements)


def png_dimensions(path: Path | str) -> tuple[int, int]:
    """Read (width, height) from a PNG header without an imaging library."""
    with open(path, "rb") as fh:
        header = fh.read(24)
    if len(header) < 24 or header[:8] != b"\x89PNG\r\n\x1a\n" or header[12:16] != b"IHDR":
        raise UnreadableDocumentError(f"not a PNG file: {path}")
    width, height = struct.unpack(">II", header[16:24])
    return int(width), int(height)


class FixturePackHandle:
    """Serves page artifacts directly from fixture pack directories.

    The manifest entry's ``uri`` is the pack directory. Used for all
    offline/simulator runs; no child process, no imaging dependencies.
    """

    def __init__(self):
        self._cache: dict[str, dict] = {}
        self._lock = threading.Lock()

    def _load(self, doc_id: str, uri: str) -> dict:
        with self._lock:
            if uri in self._cache:
                return self._cache[uri]
        pack = Path(uri)
        chars_path = pack / "chars.json"
        if not chars_path.is_file():
            raise UnreadableDocumentError(f"no fixture pack at {uri}")
        chars = json.loads(chars_path.read_text())
        if not isinstance(chars, list) or any(int(c) < 0 for c in chars):
            raise UnreadableDocumentError(f"bad chars.json in {uri}")
        layout: dict[int, list[LayoutElement]] = {}
        layout_path = pack / "layout.jsonl"
        if layout_path.is_file():
            for line in layout_path.read_text().splitlines():
                if not line.strip():
                    continue
                el = LayoutElement.from_dict(json.loads(line))
                layout.setdefault(el.page_index, []).append(el)
        entry = {"chars": [int(c) for c in chars], "layout": layout, "pack": pack}
        with self._lock:
            self._cache[uri] = entry
        return entry

    def page_count(self, doc_id: str, uri: str) -> int:
        return len(self._load(doc_id, uri)["chars"])

    def char_counts(self, doc_id: str, uri: str) -> list[int]:
        return list(self._load(doc_id, uri)["chars"])

    def page(self, doc_id: str, uri: str, page_index: int) -> PageImage:
        entry = self._load(doc_id, uri)
        if not 1 <= page_index <= len(entry["chars"]):
            raise MissingPageError(page_index)
        path = entry["pack"] / f"page_{page_index}.png"
        if not path.is_file():
            raise MissingPageError(page_index, f"page_{page_index}.png missing in {uri}")
        width, height = png_dimensions(path)
        return PageImage(doc_id, page_index, width, height, str(path))

    def layout(self, doc_id: str, uri: str, page_index: int) -> list[LayoutElement]:
        entry = self._load(doc_id, uri)
        return list(entry["layout"].get(page_index, ()))

    def enriched(self, doc_id: str, uri: str, page_index: int) -> EnrichedPage:
        # Packs carry no separate composites; the base image stands in.
        base = self.page(doc_id, uri, page_index)
        elements = tuple(self.layout(doc_id, uri, page_index))
        return EnrichedPage(base=base, elements=elements, composite_ref=base.payload_ref)

    def close(self):
        pass


class ProcessSidecarClient:
    """Talks to a live sidecar process over the stdio line protocol.

    Requests carry a monotonically increasing id; every request gets
    exactly one reply, matched by id (out-of-order completion allowed).
    """

    def __init__(self, cmd: list[str], dpi: int = 150, min_confidence: float = 0.25):
        self.dpi = dpi
        self.min_confidence = min_confidence
        self._proc = subprocess.Popen(
            cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lock = threading.Lock()
        self._next_id = 0
        self._raster_cache: dict[str, list[PageImage]] = {}
        self._chars_cache: dict[str, list[int]] = {}
        self._pending: dict[int, dict] = {}

    def _call(self, op: str, params: dict) -> dict | list:
        with self._lock:
            self._next_id += 1
            req_id = self._next_id
            line = json.dumps({"id": req_id, "op": op, "params": params})
            assert self._proc.stdin is not None and self._proc.stdout is not None
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
            while req_id not in self._pending:
                reply_line = self._proc.stdout.readline()
                if not reply_line:
                    raise SidecarProtocolError("sidecar closed its stdout")
                try:
                    reply = json.loads(reply_line)
                except json.JSONDecodeError as exc:
                    raise SidecarProtocolError(f"unparseable sidecar reply: {exc}")
                if "id" not in reply:
                    raise SidecarProtocolError("sidecar reply without id")
                self._pending[reply["id"]] = reply
            reply = self._pending.pop(req_id)
        if "error" in reply:
            err = reply["error"]
            etype = err.get("type", "")
            message = err.get("message", "")
            if etype == "UnreadableDocument":
                raise UnreadableDocumentError(message)
            if etype == "MissingPage":
                raise MissingPageError(int(err.get("page_index", 0)), message)
            raise SidecarProtocolError(f"{etype}: {message}")
        return reply["result"]

    def _rasterize(self, doc_id: str, uri: str) -> list[PageImage]:
        if uri not in self._raster_cache:
            result = self._call("rasterize", {"doc_uri": uri, "dpi": self.dpi})
            self._raster_cache[uri] = [
                PageImage(doc_id, int(p["page_index"]), int(p["width"]), int(p["height"]), p["payload_ref"])
                for p in result
            ]
        return self._raster_cache[uri]

    def page_count(self, doc_id: str, uri: str) -> int:
        return len(self._rasterize(doc_id, uri))

    def char_counts(self, doc_id: str, uri: str) -> list[int]:
        if uri not in self._chars_cache:
            counts = self._call("extract_char_counts", {"doc_uri": uri})
            self._chars_cache[uri] = [int(c) for c in counts]
        return list(self._chars_cache[uri])

    def page(self, doc_id: str, uri: str, page_index: int) -> PageImage:
        pages = self._rasterize(doc_id, uri)
        if not 1 <= page_index <= len(pages):
            raise MissingPageError(page_index)
        return pages[page_index - 1]

    def layout(self, doc_id: str, uri: str, page_index: int) -> list[LayoutElement]:
        page = self.page(doc_id, uri, page_index)
        result = self._call(
            "detect_layout",
            {
                "page": {
                    "page_index": page.page_index,
                    "width": page.width,
                    "height": page.height,
                    "payload_ref": page.payload_ref,
                },
                "min_confidence": self.min_confidence,
            },
        )
        return [LayoutElement.from_dict(d) for d in result]

    def enriched(self, doc_id: str, uri: str, page_index: int) -> EnrichedPage:
        page = self.page(doc_id, uri, page_index)
        elements = self.layout(doc_id, uri, page_index)
        result = self._call(
            "enrich_page",
            {
                "page": {
                    "page_index": page.page_index,
                    "width": page.width,
                    "height": page.height,
                    "payload_ref": page.payload_ref,
                },
                "elements": [e.to_dict() for e in elements],
            },
        )
        return EnrichedPage(base=page, elements=tuple(elements), composite_ref=result["composite_ref"])

    def close(self):
        try:
            if self._proc.poll() is None:
                self._call("shutdown", {})
        except (SidecarProtocolError, BrokenPipeError, OSError):
            pass
        finally:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.wait(timeout=10)


def open_sidecar(config: dict) -> FixturePackHandle | ProcessSidecarClient:
    """Build a sidecar handle from the backend file's ``sidecar`` section.

    ``{"mode": "fixtures"}`` serves packs in-process;
    ``{"mode": "process", "cmd": [...], "dpi": 150}`` spawns the sidecar.
    """
    mode = config.get("mode", "fixtures")
    if mode == "fixtures":
        return FixturePackHandle()
    if mode == "process":
        cmd = config.get("cmd")
        if not cmd:
            raise ValueError("sidecar mode 'process' requires a 'cmd' list")
        return ProcessSidecarClient(
            cmd, dpi=int(config.get("dpi", 150)), min_confidence=float(config.get("min_confidence", 0.25))
        )
    raise ValueError(f"unknown sidecar mode: {mode!r}")
