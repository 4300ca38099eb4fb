"""Heuristic page-layout detector.

Works on rendered page pixels only, no model weights: ruled grids
become tables, runs of bottom-aligned solid bars become charts, large
dense regions become figures, and what remains is banded into text
lines and grouped into heading/paragraph blocks by line height.

The heuristics are tuned for clean digital renders (crisp ink on a
white ground). Scanned or photographed pages need a trained detector;
plug one in with a ``module:attr`` spec, which must expose the same
callable signature as :func:`detect_page`.

Coordinates are pixels in the supplied image, bbox as [x0, y0, x1, y1]
with the origin at the top-left corner.
"""

from __future__ import annotations

import importlib
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import ModelLoadError

INK_THRESHOLD = 200  # gray levels below this count as ink

CONF_TABLE = 0.90
CONF_FIGURE = 0.80
CONF_CHART = 0.75
CONF_HEADING = 0.70
CONF_PARAGRAPH = 0.60


@dataclass(frozen=True)
class _Component:
    x: int
    y: int
    w: int
    h: int
    area: int

    @property
    def x1(self) -> int:
        return self.x + self.w

    @property
    def y1(self) -> int:
        return self.y + self.h

    @property
    def fill(self) -> float:
        return self.area / float(max(1, self.w * self.h))


def _components(mask: np.ndarray, min_area: int = 1) -> list[_Component]:
    count, _, stats, _ = cv2.connectedComponentsWithStats(mask, connectivity=8)
    out = []
    for i in range(1, count):
        x, y, w, h, area = stats[i]
        if area >= min_area:
            out.append(_Component(int(x), int(y), int(w), int(h), int(area)))
    return out


def _element(page_index: int, x0, y0, x1, y1, cls: str, conf: float, width: int, height: int) -> dict:
    return {
        "page_index": page_index,
        "bbox": [
            float(max(0, min(width, x0))),
            float(max(0, min(height, y0))),
            float(max(0, min(width, x1))),
            float(max(0, min(height, y1))),
        ],
        "element_class": cls,
        "confidence": conf,
    }


def detect_page(image: np.ndarray, page_index: int) -> list[dict]:
    """Detect layout elements in a grayscale or BGR page image."""
    if image.ndim == 3:
        gray = cv2.cvtColor(image, cv2.COLOR_BGR2GRAY)
    else:
        gray = image
    height, width = gray.shape
    unit = max(1.0, width / 900.0)  # heuristics were sized on 900px-wide pages

    def u(k: float) -> int:
        return max(1, int(round(k * unit)))

    ink = (gray < INK_THRESHOLD).astype(np.uint8)
    if not ink.any():
        return []

    elements: list[dict] = []
    claimed = np.zeros_like(ink)

    def claim(x0: int, y0: int, x1: int, y1: int) -> None:
        pad = u(3)
        claimed[max(0, y0 - pad) : y1 + pad, max(0, x0 - pad) : x1 + pad] = 1

    # -- ruled tables: need at least two long lines in each direction ----
    h_kernel = cv2.getStructuringElement(cv2.MORPH_RECT, (u(40), 1))
    v_kernel = cv2.getStructuringElement(cv2.MORPH_RECT, (1, u(40)))
    h_lines = cv2.morphologyEx(ink, cv2.MORPH_OPEN, h_kernel)
    v_lines = cv2.morphologyEx(ink, cv2.MORPH_OPEN, v_kernel)
    h_segments = [c for c in _components(h_lines) if c.w >= u(80) and c.h <= u(6)]
    v_segments = [c for c in _components(v_lines) if c.h >= u(60) and c.w <= u(6)]

    grid = cv2.bitwise_or(h_lines, v_lines)
    grid = cv2.dilate(grid, cv2.getStructuringElement(cv2.MORPH_RECT, (u(9), u(9))))
    for group in _components(grid, min_area=u(40) * 4):
        rows = sum(
            1
            for s in h_segments
            if group.x <= s.x + s.w // 2 <= group.x1 and group.y <= s.y + s.h // 2 <= group.y1
        )
        cols = sum(
            1
            for s in v_segments
            if group.x <= s.x + s.w // 2 <= group.x1 and group.y <= s.y + s.h // 2 <= group.y1
        )
        # a bare frame is 2+2; real grids have interior rules on an axis
        if (rows >= 3 and cols >= 2) or (rows >= 2 and cols >= 3):
            elements.append(
                _element(page_index, group.x, group.y, group.x1, group.y1, "table", CONF_TABLE, width, height)
            )
            claim(group.x, group.y, group.x1, group.y1)

    # -- bar charts: three or more solid bars sharing a baseline ---------
    free = cv2.bitwise_and(ink, cv2.bitwise_not(claimed))
    bars = [
        c
        for c in _components(free, min_area=u(8) * u(25))
        if c.fill >= 0.55 and c.h >= u(25) and u(6) <= c.w <= u(80)
    ]
    used: set[int] = set()
    for i, anchor in enumerate(bars):
        if i in used:
            continue
        aligned = [
            j
            for j, c in enumerate(bars)
            if j not in used and abs(c.y1 - anchor.y1) <= u(8)
        ]
        if len(aligned) >= 3:
            members = [bars[j] for j in aligned]
            used.update(aligned)
            x0 = min(c.x for c in members)
            y0 = min(c.y for c in members)
            x1 = max(c.x1 for c in members)
            y1 = max(c.y1 for c in members)
            # fold in an axis line sitting just under the shared baseline
            for s in h_segments:
                if s.y >= y1 - u(4) and s.y <= y1 + u(15) and s.x < x1 and s.x1 > x0:
                    x0, x1 = min(x0, s.x), max(x1, s.x1)
                    y1 = max(y1, s.y1)
            elements.append(_element(page_index, x0, y0, x1, y1, "chart", CONF_CHART, width, height))
            claim(x0, y0, x1, y1)

    # -- figures: large dense regions that are not text-sized ------------
    free = cv2.bitwise_and(ink, cv2.bitwise_not(claimed))
    closed = cv2.morphologyEx(
        free, cv2.MORPH_CLOSE, cv2.getStructuringElement(cv2.MORPH_RECT, (u(5), u(5)))
    )
    for c in _components(closed, min_area=u(55) * u(55) // 4):
        if min(c.w, c.h) >= u(55) and c.fill >= 0.40:
            elements.append(_element(page_index, c.x, c.y, c.x1, c.y1, "figure", CONF_FIGURE, width, height))
            claim(c.x, c.y, c.x1, c.y1)

    # -- text: band into lines, group lines into blocks ------------------
    free = cv2.bitwise_and(ink, cv2.bitwise_not(claimed))
    banded = cv2.morphologyEx(
        free, cv2.MORPH_CLOSE, cv2.getStructuringElement(cv2.MORPH_RECT, (u(25), 1))
    )
    lines = [c for c in _components(banded, min_area=u(4) * u(4)) if c.h >= u(5) and c.w >= u(10)]
    lines.sort(key=lambda c: (c.y, c.x))

    blocks: list[list[_Component]] = []
    for line in lines:
        home = None
        for block in blocks:
            last = block[-1]
            gap = line.y - last.y1
            overlap = min(line.x1, last.x1) - max(line.x, last.x)
            same_height = abs(line.h - last.h) <= max(u(4), 0.35 * max(line.h, last.h))
            if -u(4) <= gap <= 0.9 * max(line.h, last.h) and overlap > 0 and same_height:
                home = block
                break
        if home is None:
            blocks.append([line])
        else:
            home.append(line)

    if blocks:
        heights = sorted(line.h for block in blocks for line in block)
        median_h = heights[len(heights) // 2]
        for block in blocks:
            x0 = min(c.x for c in block)
            y0 = min(c.y for c in block)
            x1 = max(c.x1 for c in block)
            y1 = max(c.y1 for c in block)
            block_h = max(c.h for c in block)
            if block_h >= 1.45 * median_h:
                cls, conf = "heading", CONF_HEADING
            else:
                cls, conf = "paragraph", CONF_PARAGRAPH
            elements.append(_element(page_index, x0, y0, x1, y1, cls, conf, width, height))

    elements.sort(key=lambda e: (e["bbox"][1], e["bbox"][0]))
    return elements


def resolve_detector(spec: str):
    """Turn a detector spec into a callable(image, page_index) -> elements.

    "heuristic" is built in; anything else must be "module:attr" naming
    an importable callable. Import or lookup failures raise
    ModelLoadError so the protocol layer can report them as such.
    """
    if spec == "heuristic":
        return detect_page
    module_name, _, attr = spec.partition(":")
    if not module_name or not attr:
        raise ModelLoadError(f"detector spec {spec!r} is not 'module:attr'")
    try:
        module = importlib.import_module(module_name)
    except ImportError as exc:
        raise ModelLoadError(f"cannot import detector module {module_name!r}: {exc}") from exc
    detector = getattr(module, attr, None)
    if not callable(detector):
        raise ModelLoadError(f"detector {spec!r} is missing or not callable")
    return detector
