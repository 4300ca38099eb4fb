"""Corpus screening: license, content volume, and per-page suitability.

A document enters the corpus only when its license tag is allowed, its
total character count clears the configured minimum, and at least the
configured fraction of its pages (default 80%, boundary inclusive) is
judged suitable. Rejections carry the first rule that failed, and every
manifest entry lands in the ledger exactly once, so the acceptance
funnel can be reported afterwards.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from . import prompts
from .backends import BaseBackend, RoleRequest, fan_out
from .errors import AuthError, BackendError, EmptyDocumentError, SchemaError

DOCUMENT_KINDS = ("native_pdf", "scanned")

# rejection reasons, in rule order
REASON_EMPTY = "empty"
REASON_LICENSE = "license"
REASON_MIN_CHARS = "min_chars"
REASON_SUITABILITY = "suitability"
REASON_BACKEND = "backend_unavailable"


@dataclass(frozen=True)
class SourceManifestEntry:
    doc_id: str
    uri: str
    license_tag: str
    kind: str

    def __post_init__(self):
        if self.kind not in DOCUMENT_KINDS:
            raise ValueError(f"kind must be one of {DOCUMENT_KINDS}, got {self.kind!r}")
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")

    @classmethod
    def from_dict(cls, d: dict) -> "SourceManifestEntry":
        return cls(doc_id=d["doc_id"], uri=d["uri"], license_tag=d["license_tag"], kind=d["kind"])


@dataclass(frozen=True)
class ScreeningConfig:
    min_chars: int
    allowed_licenses: frozenset[str]
    suitability_fraction: float = 0.80

    def __post_init__(self):
        object.__setattr__(self, "allowed_licenses", frozenset(self.allowed_licenses))
        if self.min_chars < 1:
            raise ValueError("min_chars must be positive")
        if not 0 <= self.suitability_fraction <= 1:
            raise ValueError("suitability_fraction must be in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "ScreeningConfig":
        known = {"min_chars", "allowed_licenses", "suitability_fraction"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown screening keys: {sorted(unknown)}")
        if "min_chars" not in d:
            raise ValueError("screening config requires min_chars")
        return cls(
            min_chars=int(d["min_chars"]),
            allowed_licenses=frozenset(d.get("allowed_licenses", ())),
            suitability_fraction=float(d.get("suitability_fraction", 0.80)),
        )

    def to_dict(self) -> dict:
        return {
            "min_chars": self.min_chars,
            "allowed_licenses": sorted(self.allowed_licenses),
            "suitability_fraction": self.suitability_fraction,
        }


@dataclass(frozen=True)
class DocumentRecord:
    doc_id: str
    page_count: int
    char_count_per_page: tuple[int, ...]
    license_ok: bool
    page_suitability: tuple[bool, ...]
    verdict: str
    reason: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "char_count_per_page", tuple(self.char_count_per_page))
        object.__setattr__(self, "page_suitability", tuple(self.page_suitability))
        if len(self.char_count_per_page) != self.page_count:
            raise ValueError("char_count_per_page length must equal page_count")
        if len(self.page_suitability) != self.page_count:
            raise ValueError("page_suitability length must equal page_count")
        if self.verdict not in ("accepted", "rejected"):
            raise ValueError(f"verdict must be accepted|rejected, got {self.verdict!r}")
        if self.verdict == "rejected" and not self.reason:
            raise ValueError("rejected verdict requires a reason")

    @property
    def accepted(self) -> bool:
        return self.verdict == "accepted"

    @property
    def char_total(self) -> int:
        return sum(self.char_count_per_page)

    @property
    def pass_fraction(self) -> float:
        if self.page_count == 0:
            return 0.0
        return sum(self.page_suitability) / self.page_count

    def ledger_line(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "verdict": self.verdict,
            "reason": self.reason,
            "pass_fraction": self.pass_fraction,
            "char_total": self.char_total,
            "page_count": self.page_count,
        }


def check_license(entry: SourceManifestEntry, cfg: ScreeningConfig) -> bool:
    return entry.license_tag in cfg.allowed_licenses


def check_min_content(record: DocumentRecord, cfg: ScreeningConfig) -> bool:
    if record.page_count == 0:
        raise EmptyDocumentError(f"{record.doc_id} has no pages")
    return record.char_total >= cfg.min_chars


def _suitability_fraction_met(passes: int, page_count: int, cfg: ScreeningConfig) -> bool:
    # exact rational compare keeps the 8/10-vs-0.8 boundary honest
    return Fraction(passes, page_count) >= Fraction(str(cfg.suitability_fraction))


def judge_pages(
    entry: SourceManifestEntry,
    char_counts: list[int],
    backend: BaseBackend,
    sidecar,
) -> list[bool]:
    """One suitability call per page; unparseable replies fail the page."""
    reqs = []
    for page_index in range(1, len(char_counts) + 1):
        ctx = {
            "doc_id": entry.doc_id,
            "page_index": page_index,
            "char_count": char_counts[page_index - 1],
            "kind": entry.kind,
        }
        text = prompts.render(
            "suitability",
            doc_id=entry.doc_id,
            page_index=page_index,
            context_json=json.dumps(ctx, indent=2, sort_keys=True),
        )
        image = sidecar.page(entry.doc_id, entry.uri, page_index)
        reqs.append(
            RoleRequest(
                role="screener",
                prompt_id="suitability",
                images=(image,),
                text_context=text,
                expected_schema="suitability",
            )
        )
    slots = fan_out(backend, reqs, parallelism=backend.budget.max_in_flight)
    verdicts = []
    for slot in slots:
        if slot.ok:
            verdicts.append(slot.reply["verdict"] == "yes")
        elif isinstance(slot.error, AuthError):
            raise slot.error
        elif isinstance(slot.error, SchemaError):
            verdicts.append(False)  # conservative: unparseable page fails
        else:
            raise slot.error  # transport-level trouble: document-level handling
    return verdicts


def screen_document(
    entry: SourceManifestEntry,
    backend: BaseBackend,
    cfg: ScreeningConfig,
    sidecar,
) -> DocumentRecord:
    """Apply the three gate rules in order; reason records the first failure.

    pass_fraction is meaningful only for documents that reached the
    suitability stage; earlier rejections carry all-False page verdicts.
    """
    counts = tuple(sidecar.char_counts(entry.doc_id, entry.uri))
    page_count = len(counts)
    license_ok = check_license(entry, cfg)

    def rejected(reason: str, suitability: tuple[bool, ...]) -> DocumentRecord:
        return DocumentRecord(
            doc_id=entry.doc_id,
            page_count=page_count,
            char_count_per_page=counts,
            license_ok=license_ok,
            page_suitability=suitability,
            verdict="rejected",
            reason=reason,
        )

    if page_count == 0:
        return rejected(REASON_EMPTY, ())
    unjudged = (False,) * page_count
    if not license_ok:
        return rejected(REASON_LICENSE, unjudged)
    if sum(counts) < cfg.min_chars:
        return rejected(REASON_MIN_CHARS, unjudged)
    try:
        suitability = tuple(judge_pages(entry, list(counts), backend, sidecar))
    except AuthError:
        raise
    except BackendError:
        # retry budget exhausted: never silently accept
        return rejected(REASON_BACKEND, unjudged)
    passes = sum(suitability)
    if not _suitability_fraction_met(passes, page_count, cfg):
        return rejected(REASON_SUITABILITY, suitability)
    return DocumentRecord(
        doc_id=entry.doc_id,
        page_count=page_count,
        char_count_per_page=counts,
        license_ok=license_ok,
        page_suitability=suitability,
        verdict="accepted",
    )


def load_manifest(path: Path | str) -> list[SourceManifestEntry]:
    entries = []
    seen = set()
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            entry = SourceManifestEntry.from_dict(json.loads(line))
            if entry.doc_id in seen:
                raise ValueError(f"duplicate doc_id {entry.doc_id!r} at manifest line {line_no}")
            seen.add(entry.doc_id)
            entries.append(entry)
    return entries


def screen_corpus(
    entries: list[SourceManifestEntry],
    backend: BaseBackend,
    cfg: ScreeningConfig,
    sidecar,
    ledger_path: Path | str | None = None,
    parallelism: int = 4,
) -> list[DocumentRecord]:
    """Screen every entry (concurrently); ledger lines land in manifest order."""
    records: list[DocumentRecord | None] = [None] * len(entries)

    def work(indexed):
        index, entry = indexed
        records[index] = screen_document(entry, backend, cfg, sidecar)

    if parallelism <= 1 or len(entries) <= 1:
        for item in enumerate(entries):
            work(item)
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(work, enumerate(entries)))
    done = [r for r in records if r is not None]
    assert len(done) == len(entries), "every manifest entry must be screened"
    if ledger_path is not None:
        write_ledger(done, ledger_path)
    return done


def write_ledger(records: list[DocumentRecord], path: Path | str):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.ledger_line(), sort_keys=True) + "\n")


def read_ledger(path: Path | str) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def funnel(ledger: list[dict]) -> dict:
    """Acceptance-funnel stats over ledger lines (raw quotient, no rounding)."""
    total = len(ledger)
    accepted = sum(1 for row in ledger if row["verdict"] == "accepted")
    by_reason: dict[str, int] = {}
    for row in ledger:
        if row["verdict"] == "rejected":
            by_reason[row["reason"]] = by_reason.get(row["reason"], 0) + 1
    return {
        "candidates": total,
        "accepted": accepted,
        "acceptance_rate": (accepted / total) if total else 0.0,
        "rejected_by_reason": dict(sorted(by_reason.items())),
    }
