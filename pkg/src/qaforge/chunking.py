"""Fixed-size overlapping page chunking.

Documents are cut into windows of ``chunk_size`` pages advancing by
``chunk_size - overlap``, so consecutive chunks share exactly ``overlap``
pages. The final window is clipped at the last page, never padded. Page
indices are 1-based and document-global so evidence citations stay
unambiguous downstream.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .errors import InvalidPolicyError, MissingPageError
from .sidecar import EnrichedPage, LayoutElement

PageSpan = tuple[int, int]  # inclusive [first, last]


@dataclass(frozen=True)
class ChunkPolicy:
    chunk_size: int = 50
    overlap: int = 5

    def __post_init__(self):
        if self.chunk_size < 1:
            raise InvalidPolicyError(f"chunk_size must be positive, got {self.chunk_size}")
        if self.overlap < 0:
            raise InvalidPolicyError(f"overlap must be non-negative, got {self.overlap}")
        if self.overlap >= self.chunk_size:
            raise InvalidPolicyError(
                f"overlap ({self.overlap}) must be smaller than chunk_size ({self.chunk_size})"
            )

    @property
    def stride(self) -> int:
        return self.chunk_size - self.overlap


@dataclass(frozen=True)
class Chunk:
    """A materialized page window: images plus per-page layout annotations."""

    doc_id: str
    chunk_index: int  # 0-based within the document
    page_span: PageSpan
    pages: tuple[EnrichedPage, ...]
    layout: tuple[tuple[LayoutElement, ...], ...]  # aligned 1:1 with pages

    def __post_init__(self):
        first, last = self.page_span
        if len(self.pages) != last - first + 1:
            raise ValueError("pages do not cover the span")
        if len(self.layout) != len(self.pages):
            raise ValueError("layout lists must align 1:1 with pages")

    @property
    def page_indices(self) -> range:
        return range(self.page_span[0], self.page_span[1] + 1)

    @property
    def has_nontext_elements(self) -> bool:
        return any(el.is_nontext for per_page in self.layout for el in per_page)

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.doc_id.encode())
        h.update(b"|%d|%d|%d" % (self.chunk_index, *self.page_span))
        return h.hexdigest()[:16]


def chunk_document(page_count: int, policy: ChunkPolicy) -> list[PageSpan]:
    """Compute the chunk spans for a document of ``page_count`` pages.

    Spans start at page 1 and advance by the policy stride; every page is
    covered, the final span ends exactly at ``page_count``, and no span
    exceeds ``chunk_size`` pages.
    """
    if page_count < 1:
        raise InvalidPolicyError(f"page_count must be positive, got {page_count}")
    spans: list[PageSpan] = []
    start = 1
    while True:
        last = min(start + policy.chunk_size - 1, page_count)
        spans.append((start, last))
        if last >= page_count:
            return spans
        start += policy.stride


def materialize_chunk(
    doc_id: str,
    uri: str,
    chunk_index: int,
    span: PageSpan,
    handle,
    with_layout: bool = True,
) -> Chunk:
    """Fetch the span's enriched pages (and layout) through the sidecar handle.

    With ``with_layout=False`` the chunk carries bare page images and empty
    annotation lists — the layout-ablation condition.
    """
    first, last = span
    page_count = handle.page_count(doc_id, uri)
    for idx in (first, last):
        if not 1 <= idx <= page_count:
            raise MissingPageError(idx, f"span {span} outside document of {page_count} pages")
    pages = []
    layout = []
    for idx in range(first, last + 1):
        if with_layout:
            page = handle.enriched(doc_id, uri, idx)
        else:
            base = handle.page(doc_id, uri, idx)
            page = EnrichedPage(base=base, elements=(), composite_ref=base.payload_ref)
        pages.append(page)
        layout.append(tuple(page.elements))
    return Chunk(
        doc_id=doc_id,
        chunk_index=chunk_index,
        page_span=span,
        pages=tuple(pages),
        layout=tuple(layout),
    )
