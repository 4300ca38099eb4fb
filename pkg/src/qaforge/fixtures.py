"""Synthetic fixture corpora for tests and desk-scale experiments.

Writes fixture packs in the sidecar's pack layout (page_<n>.png,
layout.jsonl, chars.json) with tiny solid-color PNGs encoded via zlib
directly, so nothing beyond the stdlib is needed to fabricate a corpus.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

from .sidecar import LayoutElement

_PNG_SIG = b"\x89PNG\r\n\x1a\n"
_png_cache: dict[tuple, bytes] = {}

NONTEXT_ROTATION = ("table", "figure", "chart")


def _png_chunk(tag: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data))


def encode_png(width: int, height: int, rgb: tuple[int, int, int] = (250, 250, 245)) -> bytes:
    key = (width, height, rgb)
    if key not in _png_cache:
        row = b"\x00" + bytes(rgb) * width
        ihdr = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
        _png_cache[key] = (
            _PNG_SIG
            + _png_chunk(b"IHDR", ihdr)
            + _png_chunk(b"IDAT", zlib.compress(row * height))
            + _png_chunk(b"IEND", b"")
        )
    return _png_cache[key]


def write_png(path: Path | str, width: int = 64, height: int = 80, rgb=(250, 250, 245)):
    Path(path).write_bytes(encode_png(width, height, rgb))


def build_fixture_pack(
    root: Path | str,
    doc_id: str,
    page_count: int,
    *,
    chars_per_page: int | list[int] = 1200,
    nontext_every: int = 0,
    nontext_pages: dict[int, str] | None = None,
    size: tuple[int, int] = (64, 80),
) -> str:
    """Create one fixture pack; returns its directory path (the doc uri).

    nontext_every=k puts a rotating table/figure/chart element on every
    k-th page; nontext_pages pins specific pages to specific classes.
    """
    width, height = size
    pack = Path(root) / doc_id
    pack.mkdir(parents=True, exist_ok=True)
    if isinstance(chars_per_page, int):
        chars = [chars_per_page] * page_count
    else:
        chars = list(chars_per_page)
        if len(chars) != page_count:
            raise ValueError("chars_per_page list must match page_count")
    (pack / "chars.json").write_text(json.dumps(chars))
    png = encode_png(width, height)
    elements: list[LayoutElement] = []
    pinned = nontext_pages or {}
    for page in range(1, page_count + 1):
        (pack / f"page_{page}.png").write_bytes(png)
        if chars[page - 1] > 0:
            elements.append(
                LayoutElement(
                    page_index=page,
                    bbox=(4, 4, width - 4, height // 2),
                    element_class="paragraph",
                    confidence=0.95,
                )
            )
        cls = pinned.get(page)
        if cls is None and nontext_every and page % nontext_every == 0:
            cls = NONTEXT_ROTATION[(page // nontext_every) % len(NONTEXT_ROTATION)]
        if cls is not None:
            elements.append(
                LayoutElement(
                    page_index=page,
                    bbox=(8, height // 2 + 4, width - 8, height - 4),
                    element_class=cls,
                    confidence=0.9,
                )
            )
    with open(pack / "layout.jsonl", "w") as fh:
        for el in elements:
            fh.write(json.dumps(el.to_dict(), sort_keys=True) + "\n")
    return str(pack)


def build_corpus(root: Path | str, specs: list[dict]) -> str:
    """Build packs plus a source manifest; returns the manifest path.

    Each spec: {doc_id, pages, license?, kind?, chars?, nontext_every?,
    nontext_pages?}.
    """
    root = Path(root)
    manifest_path = root / "corpus.jsonl"
    root.mkdir(parents=True, exist_ok=True)
    with open(manifest_path, "w") as fh:
        for spec in specs:
            uri = build_fixture_pack(
                root,
                spec["doc_id"],
                spec["pages"],
                chars_per_page=spec.get("chars", 1200),
                nontext_every=spec.get("nontext_every", 0),
                nontext_pages=spec.get("nontext_pages"),
            )
            fh.write(
                json.dumps(
                    {
                        "doc_id": spec["doc_id"],
                        "uri": uri,
                        "license_tag": spec.get("license", "CC-BY"),
                        "kind": spec.get("kind", "native_pdf"),
                    }
                )
                + "\n"
            )
    return str(manifest_path)


def baseline_script(seed: int = 0, **overrides) -> dict:
    """Simulator script with the default behavior tables used in tests.

    Per-level swarm accuracy falls with level (0.9 / 0.6 / 0.2); two
    thirds of eligible questions draw non-text evidence. Fault knobs are
    off unless overridden.
    """
    script = {
        "seed": seed,
        "screener": {"default_pass": True},
        "q_gen": {"multimodal_prob": 0.65, "escalate_on_refine": True, "escalate_prob_23": 0.4},
        "answerer": {"accuracy_by_level": {"1": 0.9, "2": 0.6, "3": 0.2}, "round_decay": 0.55},
        "judge": {"difficulty_by_level": {"1": 2, "2": 3, "3": 5}},
        "validator": {"detector_recall": 1.0, "false_alarm_rate": 0.0},
        "faults": {},
    }
    for key, value in overrides.items():
        if key not in script:
            raise KeyError(f"unknown script section {key!r}")
        if isinstance(script[key], dict) and isinstance(value, dict):
            script[key] = {**script[key], **value}
        else:
            script[key] = value
    return script
