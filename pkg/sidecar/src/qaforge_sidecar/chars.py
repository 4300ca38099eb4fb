"""Per-page character counting.

Pages that carry native text get an exact count: the summed length of
every shown string in the content stream. Pages with no text operators
at all (pure raster scans, corrupt content) fall back to counting
glyph-sized ink blobs in the rendered pixels, which approximates the
character total closely enough for screening thresholds.
"""

from __future__ import annotations

import cv2
import numpy as np

from .pdfmini import PdfDocument

PROXY_DPI = 150


def native_count(doc: PdfDocument, index: int) -> int | None:
    """Exact character count from text operators; None when corrupt."""
    runs, corrupt = doc.text_runs(index)
    if corrupt:
        return None
    return sum(len(run.text) for run in runs)


def glyph_proxy_count(image: np.ndarray) -> int:
    """Estimate characters on a rendered page by counting glyph blobs.

    Joined letters undercount and dotted glyphs overcount, so this is a
    proxy, not a measurement. Blobs much larger than a glyph (rules,
    pictures) are ignored.
    """
    if image.ndim == 3:
        gray = cv2.cvtColor(image, cv2.COLOR_BGR2GRAY)
    else:
        gray = image
    height, width = gray.shape
    unit = max(1.0, width / 900.0)
    ink = (gray < 200).astype(np.uint8)
    count, _, stats, _ = cv2.connectedComponentsWithStats(ink, connectivity=8)
    limit = (40 * unit) ** 2
    floor = max(2.0, unit * unit)
    glyphs = 0
    for i in range(1, count):
        _, _, w, h, area = stats[i]
        if floor <= area <= limit and h <= 40 * unit and w <= 40 * unit:
            glyphs += 1
    return glyphs


def count_page(doc: PdfDocument, index: int) -> int:
    count = native_count(doc, index)
    if count is not None and count > 0:
        return count
    image, corrupt = doc.render_page(index, PROXY_DPI)
    if corrupt:
        return 0
    pixels = np.asarray(image.convert("L"))
    return glyph_proxy_count(pixels)


def count_document(doc: PdfDocument) -> list[int]:
    return [count_page(doc, i) for i in range(1, doc.page_count + 1)]
