"""Reader and rasterizer for the narrow PDF slice our corpus uses.

Parses the object graph directly (generation-0 objects, flat or nested
page trees, Flate/ASCII85 stream filters) and interprets the small
operator vocabulary vector-drawing canvases emit: positioned text,
straight-line and rectangle paths, flattened beziers, RGB/gray paint,
and axis-aligned raster XObjects. Geometry, page dimensions, and
reading order are exact. Text is drawn with a bundled vector font at
the requested size, so glyph metrics are approximate; the layout and
counting stages only depend on position and extent, not exact widths.

Failure policy: a document that cannot be opened at all raises
UnreadableDocumentError; a single page whose content stream will not
interpret renders blank and is flagged corrupt instead of failing the
document.

This is not a general PDF renderer and never will be: no encryption,
no xref tables (objects are found by scanning), no embedded fonts, no
shading, no transparency groups.
"""

from __future__ import annotations

import base64
import io
import math
import re
import zlib
from dataclasses import dataclass
from typing import BinaryIO

from PIL import Image, ImageDraw, ImageFont

from .errors import MissingPageError, UnreadableDocumentError

_WHITESPACE = b"\x00\t\n\x0c\r "
_DELIMITERS = b"()<>[]{}/%"
_OBJ_HEAD = re.compile(rb"(\d+)\s+(\d+)\s+obj\b")
_NUMBER = re.compile(rb"[+-]?(?:\d+\.?\d*|\.\d+)")

Matrix = tuple[float, float, float, float, float, float]
IDENTITY: Matrix = (1.0, 0.0, 0.0, 1.0, 0.0, 0.0)


def mat_mul(m: Matrix, n: Matrix) -> Matrix:
    """Compose transforms: apply m first, then n."""
    return (
        m[0] * n[0] + m[1] * n[2],
        m[0] * n[1] + m[1] * n[3],
        m[2] * n[0] + m[3] * n[2],
        m[2] * n[1] + m[3] * n[3],
        m[4] * n[0] + m[5] * n[2] + n[4],
        m[4] * n[1] + m[5] * n[3] + n[5],
    )


def mat_apply(m: Matrix, x: float, y: float) -> tuple[float, float]:
    return (m[0] * x + m[2] * y + m[4], m[1] * x + m[3] * y + m[5])


@dataclass(frozen=True)
class Ref:
    num: int


@dataclass(frozen=True)
class StreamObject:
    attrs: dict
    raw: bytes


@dataclass(frozen=True)
class TextRun:
    """One shown string in page user space (origin at the baseline)."""

    x: float
    y: float
    size: float
    text: str
    bold: bool
    color: tuple[float, float, float]


@dataclass(frozen=True)
class PathPaint:
    # subpaths hold points already in page user space
    subpaths: tuple[tuple[tuple[tuple[float, float], ...], bool], ...]
    stroke: tuple[float, float, float] | None
    fill: tuple[float, float, float] | None
    width: float


@dataclass(frozen=True)
class ImagePlacement:
    x0: float
    y0: float
    x1: float
    y1: float
    image: Image.Image


class _PageCorrupt(Exception):
    """Internal: this page's content cannot be interpreted."""


class _Scanner:
    """Token reader over raw PDF bytes."""

    __slots__ = ("data", "pos")

    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def _skip_filler(self) -> None:
        data, n = self.data, len(self.data)
        while self.pos < n:
            b = data[self.pos]
            if b in _WHITESPACE:
                self.pos += 1
            elif b == 0x25:  # % comment runs to end of line
                eol = data.find(b"\n", self.pos)
                self.pos = n if eol < 0 else eol + 1
            else:
                return

    def next_token(self) -> tuple[str, object] | None:
        self._skip_filler()
        data, pos = self.data, self.pos
        if pos >= len(data):
            return None
        b = data[pos]
        if b == 0x2F:  # /Name
            end = pos + 1
            while end < len(data) and data[end] not in _WHITESPACE and data[end] not in _DELIMITERS:
                end += 1
            self.pos = end
            return ("name", _decode_name(data[pos + 1 : end]))
        if data.startswith(b"<<", pos):
            self.pos = pos + 2
            return ("dict_open", None)
        if data.startswith(b">>", pos):
            self.pos = pos + 2
            return ("dict_close", None)
        if b == 0x5B:
            self.pos = pos + 1
            return ("array_open", None)
        if b == 0x5D:
            self.pos = pos + 1
            return ("array_close", None)
        if b == 0x28:
            return ("string", self._read_literal_string())
        if b == 0x3C:
            return ("string", self._read_hex_string())
        m = _NUMBER.match(data, pos)
        if m and m.end() > pos:
            self.pos = m.end()
            text = m.group()
            return ("number", float(text) if b"." in text else int(text))
        end = pos
        while end < len(data) and data[end] not in _WHITESPACE and data[end] not in _DELIMITERS:
            end += 1
        if end == pos:  # stray delimiter ({, }, lone >): skip it
            self.pos = pos + 1
            return ("keyword", data[pos : pos + 1])
        self.pos = end
        return ("keyword", data[pos:end])

    def _read_literal_string(self) -> bytes:
        data = self.data
        pos = self.pos + 1  # past (
        depth = 1
        out = bytearray()
        while pos < len(data):
            b = data[pos]
            if b == 0x5C:  # backslash escape
                pos += 1
                if pos >= len(data):
                    break
                e = data[pos]
                simple = {0x6E: 0x0A, 0x72: 0x0D, 0x74: 0x09, 0x62: 0x08, 0x66: 0x0C}
                if e in simple:
                    out.append(simple[e])
                    pos += 1
                elif 0x30 <= e <= 0x37:
                    end = pos + 1
                    while end < len(data) and end - pos < 3 and 0x30 <= data[end] <= 0x37:
                        end += 1
                    out.append(int(data[pos:end], 8) & 0xFF)
                    pos = end
                elif e in (0x0A, 0x0D):  # line continuation
                    pos += 1
                    if e == 0x0D and pos < len(data) and data[pos] == 0x0A:
                        pos += 1
                else:
                    out.append(e)
                    pos += 1
            elif b == 0x28:
                depth += 1
                out.append(b)
                pos += 1
            elif b == 0x29:
                depth -= 1
                pos += 1
                if depth == 0:
                    break
                out.append(b)
            else:
                out.append(b)
                pos += 1
        self.pos = pos
        return bytes(out)

    def _read_hex_string(self) -> bytes:
        data = self.data
        end = data.find(b">", self.pos + 1)
        if end < 0:
            end = len(data)
        digits = bytes(c for c in data[self.pos + 1 : end] if c not in _WHITESPACE)
        self.pos = end + 1
        if len(digits) % 2:
            digits += b"0"
        try:
            return bytes.fromhex(digits.decode("ascii"))
        except ValueError:
            return b""

    def parse_value(self):
        token = self.next_token()
        if token is None:
            raise ValueError("unexpected end of data")
        kind, value = token
        if kind == "number" and isinstance(value, int) and value >= 0:
            # disambiguate "N G R" indirect references from bare ints
            save = self.pos
            second = self.next_token()
            if second and second[0] == "number" and isinstance(second[1], int):
                third = self.next_token()
                if third == ("keyword", b"R"):
                    return Ref(value)
            self.pos = save
            return value
        if kind == "dict_open":
            attrs: dict = {}
            while True:
                key = self.next_token()
                if key is None or key[0] == "dict_close":
                    return attrs
                if key[0] != "name":
                    raise ValueError("dictionary key is not a name")
                attrs[key[1]] = self.parse_value()
        if kind == "array_open":
            items = []
            while True:
                self._skip_filler()
                if self.data.startswith(b"]", self.pos):
                    self.pos += 1
                    return items
                items.append(self.parse_value())
        if kind == "keyword":
            if value == b"true":
                return True
            if value == b"false":
                return False
            if value == b"null":
                return None
            raise ValueError(f"unexpected keyword {value!r}")
        return value


def _decode_name(raw: bytes) -> str:
    if b"#" not in raw:
        return raw.decode("latin-1")
    out = bytearray()
    i = 0
    while i < len(raw):
        if raw[i] == 0x23 and i + 2 < len(raw):
            try:
                out.append(int(raw[i + 1 : i + 3], 16))
                i += 3
                continue
            except ValueError:
                pass
        out.append(raw[i])
        i += 1
    return out.decode("latin-1")


def _ascii85(raw: bytes) -> bytes:
    text = raw.strip()
    if text.startswith(b"<~"):
        text = text[2:]
    if not text.endswith(b"~>"):
        text += b"~>"
    return base64.a85decode(text, adobe=True)


class PdfDocument:
    """A parsed document: page count, per-page raster, text runs."""

    def __init__(self, data: bytes):
        if not data.startswith(b"%PDF-"):
            raise UnreadableDocumentError("missing %PDF header")
        self._objects = self._scan_objects(data)
        self._pages = self._collect_pages()
        if not self._pages:
            raise UnreadableDocumentError("document has no pages")
        self._display_cache: dict[int, tuple[list, bool]] = {}

    @classmethod
    def open(cls, path) -> "PdfDocument":
        try:
            with open(path, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise UnreadableDocumentError(f"cannot read {path}: {exc}") from exc
        return cls(data)

    # -- object graph ---------------------------------------------------

    def _scan_objects(self, data: bytes) -> dict[int, object]:
        objects: dict[int, object] = {}
        pos = 0
        while True:
            m = _OBJ_HEAD.search(data, pos)
            if m is None:
                break
            num = int(m.group(1))
            sc = _Scanner(data, m.end())
            try:
                value = sc.parse_value()
            except ValueError as exc:
                raise UnreadableDocumentError(f"malformed object {num}: {exc}") from exc
            if isinstance(value, dict):
                save = sc.pos
                token = sc.next_token()
                if token == ("keyword", b"stream"):
                    raw, end = self._slice_stream(data, sc.pos, value)
                    objects[num] = StreamObject(value, raw)
                    pos = end
                    continue
                sc.pos = save
            objects[num] = value
            pos = sc.pos
        if not objects:
            raise UnreadableDocumentError("no objects found")
        return objects

    def _slice_stream(self, data: bytes, pos: int, attrs: dict) -> tuple[bytes, int]:
        if data.startswith(b"\r\n", pos):
            pos += 2
        elif data.startswith(b"\n", pos) or data.startswith(b"\r", pos):
            pos += 1
        length = attrs.get("Length")
        if isinstance(length, Ref):
            length = self._objects.get(length.num)
        if isinstance(length, int) and 0 <= length <= len(data) - pos:
            raw = data[pos : pos + length]
            marker = data.find(b"endstream", pos + length)
        else:
            # /Length missing or forward-referenced: fall back to the marker
            marker = data.find(b"endstream", pos)
            end = marker if marker >= 0 else len(data)
            raw = data[pos:end].rstrip(b"\r\n")
        after = marker + len(b"endstream") if marker >= 0 else len(data)
        return raw, after

    def _resolve(self, value):
        seen = 0
        while isinstance(value, Ref):
            value = self._objects.get(value.num)
            seen += 1
            if seen > 32:
                raise UnreadableDocumentError("reference cycle")
        return value

    def _decode_stream(self, obj: StreamObject) -> bytes:
        filters = self._resolve(obj.attrs.get("Filter"))
        if filters is None:
            chain = []
        elif isinstance(filters, list):
            chain = [self._resolve(f) for f in filters]
        else:
            chain = [filters]
        data = obj.raw
        for name in chain:
            if name == "FlateDecode":
                data = zlib.decompress(data)
            elif name == "ASCII85Decode":
                data = _ascii85(data)
            elif name == "ASCIIHexDecode":
                digits = bytes(c for c in data.split(b">")[0] if c not in _WHITESPACE)
                if len(digits) % 2:
                    digits += b"0"
                data = bytes.fromhex(digits.decode("ascii"))
            elif name == "DCTDecode":
                return data  # JPEG payload, decoded by the image loader
            else:
                raise ValueError(f"unsupported stream filter {name}")
        return data

    # -- page tree ------------------------------------------------------

    _INHERITED = ("Resources", "MediaBox")

    def _collect_pages(self) -> list[dict]:
        catalog = None
        for value in self._objects.values():
            attrs = value.attrs if isinstance(value, StreamObject) else value
            if isinstance(attrs, dict) and attrs.get("Type") == "Catalog":
                catalog = attrs
                break
        if catalog is None:
            raise UnreadableDocumentError("no document catalog")
        root = self._resolve(catalog.get("Pages"))
        if not isinstance(root, dict):
            raise UnreadableDocumentError("catalog has no page tree")
        pages: list[dict] = []

        def walk(node: dict, inherited: dict, depth: int) -> None:
            if depth > 32:
                raise UnreadableDocumentError("page tree too deep")
            passed = dict(inherited)
            for key in self._INHERITED:
                if key in node:
                    passed[key] = node[key]
            if node.get("Type") == "Page" or ("Contents" in node and "Kids" not in node):
                merged = dict(passed)
                merged.update(node)
                pages.append(merged)
                return
            kids = self._resolve(node.get("Kids"))
            for kid in kids if isinstance(kids, list) else []:
                child = self._resolve(kid)
                if isinstance(child, dict):
                    walk(child, passed, depth + 1)

        walk(root, {}, 0)
        return pages

    @property
    def page_count(self) -> int:
        return len(self._pages)

    def _page(self, index: int) -> dict:
        if not 1 <= index <= len(self._pages):
            raise MissingPageError(
                f"page {index} out of range 1..{len(self._pages)}", page_index=index
            )
        return self._pages[index - 1]

    def page_size(self, index: int) -> tuple[float, float]:
        """Page extent in points."""
        box = self._resolve(self._page(index).get("MediaBox")) or [0, 0, 612, 792]
        x0, y0, x1, y1 = (float(self._resolve(v)) for v in box)
        return (abs(x1 - x0), abs(y1 - y0))

    # -- content interpretation ------------------------------------------

    def _display_list(self, index: int) -> tuple[list, bool]:
        """Interpret page content once; (items, corrupt) is cached."""
        if index in self._display_cache:
            return self._display_cache[index]
        page = self._page(index)
        try:
            items = self._interpret_page(page)
            result: tuple[list, bool] = (items, False)
        except (MissingPageError, UnreadableDocumentError):
            raise
        except Exception:
            result = ([], True)
        self._display_cache[index] = result
        return result

    def _interpret_page(self, page: dict) -> list:
        contents = self._resolve(page.get("Contents"))
        streams = contents if isinstance(contents, list) else [contents]
        payload = b"\n".join(
            self._decode_stream(s)
            for s in (self._resolve(c) for c in streams)
            if isinstance(s, StreamObject)
        )
        resources = self._resolve(page.get("Resources")) or {}
        box = self._resolve(page.get("MediaBox")) or [0, 0, 612, 792]
        x0, y0 = float(self._resolve(box[0])), float(self._resolve(box[1]))
        base: Matrix = (1.0, 0.0, 0.0, 1.0, -x0, -y0)
        items: list = []
        self._run_content(payload, resources, base, items, depth=0)
        return items

    def _run_content(
        self, payload: bytes, resources: dict, base: Matrix, items: list, depth: int
    ) -> None:
        if depth > 8:
            raise ValueError("form nesting too deep")
        fonts = self._resolve(resources.get("Font")) or {}
        xobjects = self._resolve(resources.get("XObject")) or {}

        ctm = base
        fill = (0.0, 0.0, 0.0)
        stroke = (0.0, 0.0, 0.0)
        width = 1.0
        stack: list[tuple] = []

        subpaths: list[tuple[list, bool]] = []
        current: list | None = None

        tm: Matrix = IDENTITY
        lm: Matrix = IDENTITY
        size = 0.0
        leading = 0.0
        bold = False

        operands: list = []
        sc = _Scanner(payload)

        def pt(x: float, y: float) -> tuple[float, float]:
            return mat_apply(ctm, x, y)

        def begin_subpath(x: float, y: float) -> None:
            nonlocal current
            current = [pt(x, y)]
            subpaths.append((current, False))

        def close_subpath() -> None:
            nonlocal current
            if current is not None and subpaths:
                pts, _ = subpaths[-1]
                subpaths[-1] = (pts, True)
            current = None

        def paint(do_fill: bool, do_stroke: bool, close: bool) -> None:
            nonlocal subpaths, current
            if close:
                close_subpath()
            if subpaths:
                frozen = tuple(
                    (tuple(pts), closed) for pts, closed in subpaths if len(pts) >= 2
                )
                if frozen:
                    items.append(
                        PathPaint(
                            subpaths=frozen,
                            stroke=stroke if do_stroke else None,
                            fill=fill if do_fill else None,
                            width=width,
                        )
                    )
            subpaths = []
            current = None

        def unwind_bezier_point(offset: int) -> tuple[float, float]:
            return (float(operands[offset]), float(operands[offset + 1]))

        def show(text_bytes: bytes) -> None:
            nonlocal tm
            text = text_bytes.decode("latin-1")
            trm = mat_mul(tm, ctm)
            run_size = size * math.hypot(trm[2], trm[3])
            if text:
                items.append(
                    TextRun(
                        x=trm[4],
                        y=trm[5],
                        size=run_size,
                        text=text,
                        bold=bold,
                        color=fill,
                    )
                )
            # approximate advance; only matters when strings chain on a line
            advance = 0.55 * size * len(text)
            tm = mat_mul((1, 0, 0, 1, advance, 0), tm)

        while True:
            save = sc.pos
            token = sc.next_token()
            if token is None:
                break
            kind, value = token
            if kind != "keyword" or value in (b"true", b"false", b"null"):
                sc.pos = save
                operands.append(sc.parse_value())
                continue

            op = value
            try:
                if op == b"q":
                    stack.append((ctm, fill, stroke, width))
                elif op == b"Q":
                    if stack:
                        ctm, fill, stroke, width = stack.pop()
                elif op == b"cm":
                    m = tuple(float(v) for v in operands[-6:])
                    ctm = mat_mul(m, ctm)  # type: ignore[arg-type]
                elif op == b"m":
                    begin_subpath(float(operands[-2]), float(operands[-1]))
                elif op == b"l":
                    if current is not None:
                        current.append(pt(float(operands[-2]), float(operands[-1])))
                elif op == b"re":
                    x, y, w, h = (float(v) for v in operands[-4:])
                    rect = [pt(x, y), pt(x + w, y), pt(x + w, y + h), pt(x, y + h)]
                    subpaths.append((rect, True))
                    current = rect
                elif op == b"h":
                    close_subpath()
                elif op == b"c":
                    if current is not None:
                        # flatten on transformed control points; ctm is affine
                        # so the curve commutes with it up to sampling error
                        start = current[-1]
                        c1 = pt(*unwind_bezier_point(-6))
                        c2 = pt(*unwind_bezier_point(-4))
                        end = pt(*unwind_bezier_point(-2))
                        for i in range(1, 9):
                            t = i / 8.0
                            u = 1.0 - t
                            xx = u**3 * start[0] + 3 * u * u * t * c1[0] + 3 * u * t * t * c2[0] + t**3 * end[0]
                            yy = u**3 * start[1] + 3 * u * u * t * c1[1] + 3 * u * t * t * c2[1] + t**3 * end[1]
                            current.append((xx, yy))
                elif op in (b"v", b"y"):
                    if current is not None:
                        start = current[-1]
                        a = pt(*unwind_bezier_point(-4))
                        b = pt(*unwind_bezier_point(-2))
                        c1, c2 = (start, a) if op == b"v" else (a, b)
                        for i in range(1, 9):
                            t = i / 8.0
                            u = 1.0 - t
                            xx = u**3 * start[0] + 3 * u * u * t * c1[0] + 3 * u * t * t * c2[0] + t**3 * b[0]
                            yy = u**3 * start[1] + 3 * u * u * t * c1[1] + 3 * u * t * t * c2[1] + t**3 * b[1]
                            current.append((xx, yy))
                elif op == b"S":
                    paint(False, True, False)
                elif op == b"s":
                    paint(False, True, True)
                elif op in (b"f", b"F", b"f*"):
                    paint(True, False, False)
                elif op in (b"B", b"B*"):
                    paint(True, True, False)
                elif op in (b"b", b"b*"):
                    paint(True, True, True)
                elif op == b"n":
                    subpaths = []
                    current = None
                elif op == b"w":
                    width = float(operands[-1])
                elif op == b"rg":
                    fill = tuple(float(v) for v in operands[-3:])  # type: ignore[assignment]
                elif op == b"RG":
                    stroke = tuple(float(v) for v in operands[-3:])  # type: ignore[assignment]
                elif op == b"g":
                    v = float(operands[-1])
                    fill = (v, v, v)
                elif op == b"G":
                    v = float(operands[-1])
                    stroke = (v, v, v)
                elif op == b"k":
                    fill = _cmyk(operands[-4:])
                elif op == b"K":
                    stroke = _cmyk(operands[-4:])
                elif op in (b"sc", b"scn", b"SC", b"SCN"):
                    nums = [v for v in operands if isinstance(v, (int, float))]
                    rgb = None
                    if len(nums) >= 3:
                        rgb = tuple(float(v) for v in nums[-3:])
                    elif len(nums) == 1:
                        v = float(nums[0])
                        rgb = (v, v, v)
                    if rgb is not None:
                        if op in (b"sc", b"scn"):
                            fill = rgb  # type: ignore[assignment]
                        else:
                            stroke = rgb  # type: ignore[assignment]
                elif op == b"BT":
                    tm = lm = IDENTITY
                elif op == b"ET":
                    pass
                elif op == b"Tf":
                    size = float(operands[-1])
                    font_name = operands[-2] if len(operands) >= 2 else None
                    font = self._resolve(fonts.get(font_name)) if isinstance(font_name, str) else None
                    basefont = font.get("BaseFont", "") if isinstance(font, dict) else ""
                    bold = "Bold" in str(basefont)
                elif op == b"TL":
                    leading = float(operands[-1])
                elif op == b"Tm":
                    tm = lm = tuple(float(v) for v in operands[-6:])  # type: ignore[assignment]
                elif op == b"Td":
                    lm = mat_mul((1, 0, 0, 1, float(operands[-2]), float(operands[-1])), lm)
                    tm = lm
                elif op == b"TD":
                    leading = -float(operands[-1])
                    lm = mat_mul((1, 0, 0, 1, float(operands[-2]), float(operands[-1])), lm)
                    tm = lm
                elif op == b"T*":
                    lm = mat_mul((1, 0, 0, 1, 0.0, -leading), lm)
                    tm = lm
                elif op == b"Tj":
                    show(operands[-1] if isinstance(operands[-1], bytes) else b"")
                elif op == b"'":
                    lm = mat_mul((1, 0, 0, 1, 0.0, -leading), lm)
                    tm = lm
                    show(operands[-1] if isinstance(operands[-1], bytes) else b"")
                elif op == b'"':
                    lm = mat_mul((1, 0, 0, 1, 0.0, -leading), lm)
                    tm = lm
                    show(operands[-1] if isinstance(operands[-1], bytes) else b"")
                elif op == b"TJ":
                    parts = operands[-1] if isinstance(operands[-1], list) else []
                    for part in parts:
                        if isinstance(part, bytes):
                            show(part)
                        elif isinstance(part, (int, float)):
                            tm = mat_mul((1, 0, 0, 1, -float(part) / 1000.0 * size, 0), tm)
                elif op == b"Do":
                    name = operands[-1]
                    xobj = self._resolve(xobjects.get(name)) if isinstance(name, str) else None
                    if isinstance(xobj, StreamObject):
                        self._run_xobject(xobj, ctm, items, depth)
                elif op == b"BI":
                    raise ValueError("inline images unsupported")
                # remaining operators (gs, Tc, Tw, Tz, Ts, Tr, W, W*, d,
                # j, J, M, i, ri, MP, DP, BMC, BDC, EMC, cs, CS) carry
                # state this renderer does not model; skip them
            except (ValueError, TypeError, IndexError) as exc:
                raise _PageCorrupt(str(exc)) from exc
            operands = []

    def _run_xobject(self, xobj: StreamObject, ctm: Matrix, items: list, depth: int) -> None:
        subtype = self._resolve(xobj.attrs.get("Subtype"))
        if subtype == "Image":
            image = self._decode_image(xobj)
            corners = [mat_apply(ctm, x, y) for x, y in ((0, 0), (1, 0), (1, 1), (0, 1))]
            xs = [c[0] for c in corners]
            ys = [c[1] for c in corners]
            items.append(ImagePlacement(min(xs), min(ys), max(xs), max(ys), image))
            return
        if subtype == "Form":
            matrix = self._resolve(xobj.attrs.get("Matrix")) or [1, 0, 0, 1, 0, 0]
            inner = mat_mul(tuple(float(v) for v in matrix), ctm)  # type: ignore[arg-type]
            resources = self._resolve(xobj.attrs.get("Resources")) or {}
            self._run_content(self._decode_stream(xobj), resources, inner, items, depth + 1)
            return
        raise ValueError(f"unsupported xobject subtype {subtype}")

    def _decode_image(self, xobj: StreamObject) -> Image.Image:
        attrs = xobj.attrs
        w = int(self._resolve(attrs.get("Width", 0)))
        h = int(self._resolve(attrs.get("Height", 0)))
        if w <= 0 or h <= 0:
            raise ValueError("image has no extent")
        filters = self._resolve(attrs.get("Filter"))
        chain = filters if isinstance(filters, list) else [filters]
        if "DCTDecode" in [self._resolve(f) for f in chain if f is not None]:
            data = xobj.raw
            for name in chain:
                name = self._resolve(name)
                if name == "ASCII85Decode":
                    data = _ascii85(data)
                elif name == "FlateDecode":
                    data = zlib.decompress(data)
                elif name == "DCTDecode":
                    break
            return Image.open(io.BytesIO(data)).convert("RGB")
        raw = self._decode_stream(xobj)
        space = self._resolve(attrs.get("ColorSpace"))
        if space == "DeviceRGB" and len(raw) >= w * h * 3:
            return Image.frombytes("RGB", (w, h), raw[: w * h * 3])
        if space == "DeviceGray" and len(raw) >= w * h:
            return Image.frombytes("L", (w, h), raw[: w * h]).convert("RGB")
        raise ValueError(f"unsupported image colorspace {space}")

    # -- public rendering API --------------------------------------------

    def render_page(self, index: int, dpi: int) -> tuple[Image.Image, bool]:
        """Raster the page at dpi; returns (image, corrupt flag).

        A page whose content stream fails interpretation comes back as a
        blank white canvas with corrupt=True so callers can keep going.
        """
        wpts, hpts = self.page_size(index)
        scale = dpi / 72.0
        size = (max(1, round(wpts * scale)), max(1, round(hpts * scale)))
        image = Image.new("RGB", size, (255, 255, 255))
        items, corrupt = self._display_list(index)
        if corrupt:
            return image, True
        draw = ImageDraw.Draw(image)

        def dev(x: float, y: float) -> tuple[float, float]:
            return (x * scale, (hpts - y) * scale)

        for item in items:
            if isinstance(item, PathPaint):
                for pts, closed in item.subpaths:
                    dev_pts = [dev(x, y) for x, y in pts]
                    if item.fill is not None and len(dev_pts) >= 3:
                        draw.polygon(dev_pts, fill=_rgb255(item.fill))
                    if item.stroke is not None:
                        line = dev_pts + [dev_pts[0]] if closed else dev_pts
                        draw.line(
                            line,
                            fill=_rgb255(item.stroke),
                            width=max(1, round(item.width * scale)),
                        )
            elif isinstance(item, ImagePlacement):
                px0, py1 = dev(item.x0, item.y0)
                px1, py0 = dev(item.x1, item.y1)
                box_w = max(1, round(px1 - px0))
                box_h = max(1, round(py1 - py0))
                resized = item.image.resize((box_w, box_h))
                image.paste(resized, (round(px0), round(py0)))
            elif isinstance(item, TextRun):
                px, py = dev(item.x, item.y)
                size_px = max(1, round(item.size * scale))
                font = _load_font(size_px)
                stroke_w = max(1, size_px // 14) if item.bold else 0
                draw.text(
                    (px, py),
                    item.text,
                    font=font,
                    fill=_rgb255(item.color),
                    anchor="ls",
                    stroke_width=stroke_w,
                    stroke_fill=_rgb255(item.color),
                )
        return image, False

    def text_runs(self, index: int) -> tuple[list[TextRun], bool]:
        """Shown strings in page order; corrupt pages yield ([], True)."""
        items, corrupt = self._display_list(index)
        if corrupt:
            return [], True
        return [item for item in items if isinstance(item, TextRun)], False


def _cmyk(values) -> tuple[float, float, float]:
    c, m, y, k = (float(v) for v in values)
    return (
        max(0.0, 1.0 - min(1.0, c + k)),
        max(0.0, 1.0 - min(1.0, m + k)),
        max(0.0, 1.0 - min(1.0, y + k)),
    )


def _rgb255(color: tuple[float, float, float]) -> tuple[int, int, int]:
    return tuple(max(0, min(255, round(v * 255))) for v in color)  # type: ignore[return-value]


_FONT_CACHE: dict[int, ImageFont.ImageFont] = {}


def _load_font(size_px: int):
    font = _FONT_CACHE.get(size_px)
    if font is None:
        try:
            font = ImageFont.load_default(size=size_px)
        except TypeError:  # very old Pillow: fixed-size bitmap fallback
            font = ImageFont.load_default()
        _FONT_CACHE[size_px] = font
    return font
