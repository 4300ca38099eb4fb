"""Content-addressed PNG store for rendered and composited pages.

Payload references handed over the wire are plain file paths into a
work directory. Names are derived from pixel content, so re-rendering
an identical page reuses the same file and references stay stable
across runs.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from PIL import Image


class PayloadStore:
    def __init__(self, workdir: Path | str):
        self.root = Path(workdir)
        self.root.mkdir(parents=True, exist_ok=True)

    def put_image(self, image: Image.Image) -> str:
        """Persist an RGB image; returns its payload reference."""
        if image.mode != "RGB":
            image = image.convert("RGB")
        digest = hashlib.sha256()
        digest.update(f"{image.width}x{image.height}:".encode("ascii"))
        digest.update(image.tobytes())
        path = self.root / f"{digest.hexdigest()[:32]}.png"
        if not path.exists():
            tmp = path.with_suffix(".tmp")
            image.save(tmp, format="PNG")
            tmp.replace(path)
        return str(path)


def load_image(payload_ref: str) -> Image.Image:
    return Image.open(payload_ref).convert("RGB")
