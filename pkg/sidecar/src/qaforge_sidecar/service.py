"""Operation handlers behind the wire protocol.

Two interchangeable services expose the same four operations:

* DocumentService opens real documents, renders them, and runs the
  layout detector over the rendered pixels.
* FixtureService replays a baked fixture pack (page PNGs, layout
  records, char counts) so protocol behavior can be exercised with no
  document parsing at all. Enrichment still composes for real; packs
  carry no canned composites.

Handlers take the decoded ``params`` dict and return a JSON-ready
value; anything contract-violating raises a SidecarError subclass for
the protocol layer to encode.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from . import chars, enrich, layout
from .errors import (
    InvalidRequestError,
    MissingPageError,
    UnreadableDocumentError,
)
from .pdfmini import PdfDocument
from .raster import PayloadStore, load_image

DPI_MIN = 72
DPI_MAX = 600
DEFAULT_DPI = 150
DEFAULT_MIN_CONFIDENCE = 0.25


def _require(params: dict, key: str):
    value = params.get(key)
    if value is None:
        raise InvalidRequestError(f"missing required param {key!r}")
    return value


def _page_param(params: dict) -> dict:
    page = _require(params, "page")
    if not isinstance(page, dict) or "payload_ref" not in page:
        raise InvalidRequestError("param 'page' must carry a payload_ref")
    return page


def _load_page_pixels(page: dict) -> np.ndarray:
    ref = page["payload_ref"]
    if not Path(ref).is_file():
        raise MissingPageError(
            f"payload {ref} does not exist", page_index=int(page.get("page_index", 0))
        )
    return np.asarray(load_image(ref).convert("L"))


class DocumentService:
    """Serves real documents: parse, render, detect, compose."""

    def __init__(self, workdir: Path | str, detector: str = "heuristic"):
        self.store = PayloadStore(workdir)
        self._detect = layout.resolve_detector(detector)
        self._docs: dict[str, PdfDocument] = {}

    def _doc(self, params: dict) -> PdfDocument:
        uri = str(_require(params, "doc_uri"))
        doc = self._docs.get(uri)
        if doc is None:
            doc = PdfDocument.open(uri)
            self._docs[uri] = doc
        return doc

    def rasterize(self, params: dict) -> list[dict]:
        doc = self._doc(params)
        dpi = int(params.get("dpi", DEFAULT_DPI))
        if not DPI_MIN <= dpi <= DPI_MAX:
            raise InvalidRequestError(f"dpi {dpi} outside [{DPI_MIN}, {DPI_MAX}]")
        pages = []
        for index in range(1, doc.page_count + 1):
            image, corrupt = doc.render_page(index, dpi)
            entry = {
                "page_index": index,
                "width": image.width,
                "height": image.height,
                "payload_ref": self.store.put_image(image),
            }
            if corrupt:
                entry["corrupt"] = True
            pages.append(entry)
        return pages

    def extract_char_counts(self, params: dict) -> list[int]:
        return chars.count_document(self._doc(params))

    def detect_layout(self, params: dict) -> list[dict]:
        page = _page_param(params)
        min_confidence = float(params.get("min_confidence", DEFAULT_MIN_CONFIDENCE))
        pixels = _load_page_pixels(page)
        elements = self._detect(pixels, int(page.get("page_index", 1)))
        return [e for e in elements if e["confidence"] >= min_confidence]

    def enrich_page(self, params: dict) -> dict:
        page = _page_param(params)
        elements = params.get("elements") or []
        if not Path(page["payload_ref"]).is_file():
            raise MissingPageError(
                f"payload {page['payload_ref']} does not exist",
                page_index=int(page.get("page_index", 0)),
            )
        return {"composite_ref": enrich.compose(page, list(elements), self.store)}


class FixtureService:
    """Replays a baked pack directory instead of opening documents."""

    def __init__(self, workdir: Path | str):
        self.store = PayloadStore(workdir)
        self._packs: dict[str, dict] = {}

    def _pack(self, params: dict) -> dict:
        uri = str(_require(params, "doc_uri"))
        pack = self._packs.get(uri)
        if pack is None:
            root = Path(uri)
            chars_path = root / "chars.json"
            if not chars_path.is_file():
                raise UnreadableDocumentError(f"no fixture pack at {uri}")
            counts = json.loads(chars_path.read_text())
            records = []
            layout_path = root / "layout.jsonl"
            if layout_path.is_file():
                for line in layout_path.read_text().splitlines():
                    if line.strip():
                        records.append(json.loads(line))
            pack = {"root": root, "chars": [int(c) for c in counts], "layout": records}
            self._packs[uri] = pack
        return pack

    def rasterize(self, params: dict) -> list[dict]:
        pack = self._pack(params)
        pages = []
        for index in range(1, len(pack["chars"]) + 1):
            path = pack["root"] / f"page_{index}.png"
            if not path.is_file():
                raise MissingPageError(f"page_{index}.png missing", page_index=index)
            with Image.open(path) as image:
                width, height = image.size
            pages.append(
                {
                    "page_index": index,
                    "width": width,
                    "height": height,
                    "payload_ref": str(path),
                }
            )
        return pages

    def extract_char_counts(self, params: dict) -> list[int]:
        return list(self._pack(params)["chars"])

    def detect_layout(self, params: dict) -> list[dict]:
        page = _page_param(params)
        min_confidence = float(params.get("min_confidence", DEFAULT_MIN_CONFIDENCE))
        pack_root = Path(page["payload_ref"]).parent
        pack = self._pack({"doc_uri": str(pack_root)})
        index = int(page.get("page_index", 0))
        return [
            r
            for r in pack["layout"]
            if int(r.get("page_index", -1)) == index
            and float(r.get("confidence", 0.0)) >= min_confidence
        ]

    def enrich_page(self, params: dict) -> dict:
        page = _page_param(params)
        elements = params.get("elements") or []
        if not Path(page["payload_ref"]).is_file():
            raise MissingPageError(
                f"payload {page['payload_ref']} does not exist",
                page_index=int(page.get("page_index", 0)),
            )
        return {"composite_ref": enrich.compose(page, list(elements), self.store)}
