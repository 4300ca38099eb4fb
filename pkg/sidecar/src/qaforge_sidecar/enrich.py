"""Composite enriched pages for multimodal prompting.

Enrichment draws an accent border around every non-text element so a
vision model's attention lands on the regions the question is about,
without changing page geometry: the composite always has exactly the
base page's dimensions. With no non-text elements the base payload is
returned untouched, so text-only pages cost nothing.
"""

from __future__ import annotations

from PIL import ImageDraw

from .raster import PayloadStore, load_image

NONTEXT_CLASSES = {"table", "figure", "chart"}
BORDER_RGB = (204, 82, 0)
BORDER_PX = 3


def compose(page: dict, elements: list[dict], store: PayloadStore) -> str:
    """Render highlights onto a page copy; returns the composite ref."""
    marked = [e for e in elements if e.get("element_class") in NONTEXT_CLASSES]
    if not marked:
        return page["payload_ref"]
    image = load_image(page["payload_ref"])
    draw = ImageDraw.Draw(image)
    # stable paint order so identical inputs hash to the same composite
    marked.sort(key=lambda e: (e.get("page_index", 0), e["bbox"][1], e["bbox"][0]))
    for element in marked:
        x0, y0, x1, y1 = element["bbox"]
        x0 = max(0, min(image.width - 1, int(round(x0))))
        y0 = max(0, min(image.height - 1, int(round(y0))))
        x1 = max(x0 + 1, min(image.width, int(round(x1))))
        y1 = max(y0 + 1, min(image.height, int(round(y1))))
        draw.rectangle([x0, y0, x1 - 1, y1 - 1], outline=BORDER_RGB, width=BORDER_PX)
    return store.put_image(image)
