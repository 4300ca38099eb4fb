"""Command line entry points.

serve
    Speak the stdio protocol until shutdown or EOF. ``--mock`` replays
    fixture packs instead of opening documents, for driving the
    protocol in tests and offline runs.

bake
    Render a document into a fixture pack directory: page_<n>.png for
    every page plus layout.jsonl and chars.json. Packs are what the
    mock service and in-process fixture handles consume.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import chars as chars_mod
from . import layout as layout_mod
from .errors import SidecarError
from .pdfmini import PdfDocument
from .protocol import SidecarServer
from .service import (
    DEFAULT_DPI,
    DEFAULT_MIN_CONFIDENCE,
    DPI_MAX,
    DPI_MIN,
    DocumentService,
    FixtureService,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qaforge-sidecar",
        description="Page preparation sidecar: rasterize, detect layout, enrich, count.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="speak the stdio line protocol")
    serve.add_argument("--mock", action="store_true", help="replay fixture packs instead of documents")
    serve.add_argument("--workdir", default=".sidecar-cache", help="payload store directory")
    serve.add_argument("--detector", default="heuristic", help="'heuristic' or module:attr")

    bake = sub.add_parser("bake", help="render a document into a fixture pack")
    bake.add_argument("document", help="path to the source document")
    bake.add_argument("--out", required=True, help="pack directory to create")
    bake.add_argument("--dpi", type=int, default=DEFAULT_DPI)
    bake.add_argument("--min-confidence", type=float, default=DEFAULT_MIN_CONFIDENCE)
    bake.add_argument("--detector", default="heuristic", help="'heuristic' or module:attr")
    return parser


def _serve(args: argparse.Namespace) -> int:
    if args.mock:
        service = FixtureService(args.workdir)
    else:
        service = DocumentService(args.workdir, detector=args.detector)
    SidecarServer(service).serve()
    return 0


def _bake(args: argparse.Namespace) -> int:
    if not DPI_MIN <= args.dpi <= DPI_MAX:
        print(f"error: dpi {args.dpi} outside [{DPI_MIN}, {DPI_MAX}]", file=sys.stderr)
        return 1
    detect = layout_mod.resolve_detector(args.detector)
    doc = PdfDocument.open(args.document)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    counts = []
    records = []
    corrupt_pages = []
    for index in range(1, doc.page_count + 1):
        image, corrupt = doc.render_page(index, args.dpi)
        image.save(out / f"page_{index}.png", format="PNG")
        if corrupt:
            corrupt_pages.append(index)
        counts.append(chars_mod.count_page(doc, index))
        pixels = np.asarray(image.convert("L"))
        for element in detect(pixels, index):
            if element["confidence"] >= args.min_confidence:
                records.append(element)

    (out / "chars.json").write_text(json.dumps(counts))
    with open(out / "layout.jsonl", "w") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")

    summary = {
        "pack": str(out),
        "pages": doc.page_count,
        "elements": len(records),
        "chars_total": sum(counts),
    }
    if corrupt_pages:
        summary["corrupt_pages"] = corrupt_pages
    print(json.dumps(summary))
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            return _serve(args)
        return _bake(args)
    except SidecarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
