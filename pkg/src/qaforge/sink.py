"""Dataset emission, overlap dedup, and reporting.

Tuples are one JSON object per line with exactly the fields question,
answer, evidence_pages, evidence_sources, justification, validation,
metadata. Emission is at-most-once per question identity; questions
regenerated from the 5-page chunk overlap are deduplicated by normalized
text + evidence pages, earlier chunk winning. The report layer renders
the taxonomy histogram, the text-only/multimodal split, context buckets,
and the screening funnel.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass
from pathlib import Path

from .backends.schemas import EVIDENCE_SOURCES, TAXONOMY
from .errors import EmptyDatasetError, SchemaViolationError

TUPLE_FIELDS = (
    "question",
    "answer",
    "evidence_pages",
    "evidence_sources",
    "justification",
    "validation",
    "metadata",
)

NONTEXT_SOURCES = frozenset({"table", "chart", "figure", "image"})


@dataclass(frozen=True)
class ValidatedTuple:
    question: str
    answer: str
    evidence_pages: tuple[int, ...]
    evidence_sources: tuple[str, ...]
    justification: str
    validation: dict
    metadata: dict

    def __post_init__(self):
        object.__setattr__(self, "evidence_pages", tuple(self.evidence_pages))
        object.__setattr__(self, "evidence_sources", tuple(self.evidence_sources))
        for name in ("question", "answer", "justification"):
            if not getattr(self, name):
                raise SchemaViolationError(f"tuple field {name!r} is missing or empty")
        if not isinstance(self.validation, dict) or not self.validation:
            raise SchemaViolationError("tuple field 'validation' is missing or empty")
        if not isinstance(self.metadata, dict) or not self.metadata:
            raise SchemaViolationError("tuple field 'metadata' is missing or empty")
        bad = set(self.evidence_sources) - set(EVIDENCE_SOURCES)
        if bad:
            raise SchemaViolationError(f"unknown evidence sources {sorted(bad)}")
        label = self.taxonomy_label
        if label not in TAXONOMY:
            raise SchemaViolationError(f"taxonomy label {label!r} not in the closed set")
        if not self.evidence_pages and label != "Unanswerable":
            raise SchemaViolationError("evidence_pages may be empty only for Unanswerable tuples")

    @property
    def taxonomy_label(self) -> str:
        """Final category: the judge's label, falling back to the generator's."""
        return self.metadata.get("question_type") or self.metadata.get("declared_type", "")

    @property
    def is_multimodal(self) -> bool:
        return bool(set(self.evidence_sources) & NONTEXT_SOURCES)

    @property
    def identity(self) -> tuple:
        m = self.metadata
        return (m.get("run_id"), m.get("doc_id"), m.get("chunk_index"), m.get("question_ordinal"))

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "answer": self.answer,
            "evidence_pages": list(self.evidence_pages),
            "evidence_sources": list(self.evidence_sources),
            "justification": self.justification,
            "validation": self.validation,
            "metadata": self.metadata,
        }

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ValidatedTuple":
        missing = [f for f in TUPLE_FIELDS if f not in d]
        if missing:
            raise SchemaViolationError(f"tuple is missing fields {missing}")
        return cls(
            question=d["question"],
            answer=d["answer"],
            evidence_pages=tuple(d["evidence_pages"]),
            evidence_sources=tuple(d["evidence_sources"]),
            justification=d["justification"],
            validation=d["validation"],
            metadata=d["metadata"],
        )


def parse_tuple(line: str) -> ValidatedTuple:
    return ValidatedTuple.from_dict(json.loads(line))


def normalize_question(text: str) -> str:
    """Dedup key: strip punctuation, collapse whitespace. No semantics."""
    kept = []
    for ch in text:
        if unicodedata.category(ch).startswith("P"):
            continue
        kept.append(" " if ch.isspace() else ch)
    return " ".join("".join(kept).split())


def overlap_key(t: ValidatedTuple) -> tuple:
    return (normalize_question(t.question), frozenset(t.evidence_pages))


def dedup_overlap(tuples: list[ValidatedTuple]) -> list[ValidatedTuple]:
    """Drop overlap-duplicates; the copy from the earlier chunk survives."""
    best: dict[tuple, ValidatedTuple] = {}
    order: list[tuple] = []
    for t in tuples:
        key = overlap_key(t)
        if key not in best:
            best[key] = t
            order.append(key)
        else:
            kept = best[key]
            if t.metadata.get("chunk_index", 0) < kept.metadata.get("chunk_index", 0):
                best[key] = t
    return [best[key] for key in order]


@dataclass(frozen=True)
class ContextBucket:
    context_class: str  # SC | MC | LC
    page_condition: str  # SP | CP


def classify_context(page_count: int, evidence_pages) -> ContextBucket:
    if page_count < 1:
        raise ValueError("page_count must be >= 1")
    if page_count < 100:
        context_class = "SC"
    elif page_count <= 200:
        context_class = "MC"
    else:
        context_class = "LC"
    page_condition = "SP" if len(set(evidence_pages)) <= 1 else "CP"
    return ContextBucket(context_class=context_class, page_condition=page_condition)


class DatasetSink:
    """Serialized writer for one dataset file.

    Tracks question identities (at-most-once emission across resumes) and
    the overlap-dedup index. duplicates lists what was skipped and why.
    """

    def __init__(self, path: Path | str, resume: bool = False):
        self.path = Path(path)
        self._identities: set[tuple] = set()
        self._overlap: set[tuple] = set()
        self.duplicates: list[dict] = []
        mode = "a" if resume else "w"
        if resume and self.path.exists():
            with open(self.path) as fh:
                for line in fh:
                    if line.strip():
                        t = parse_tuple(line)
                        self._identities.add(t.identity)
                        self._overlap.add(overlap_key(t))
        self._fh = open(self.path, mode, encoding="utf-8")

    def tell(self) -> int:
        self._fh.flush()
        return self._fh.tell()

    def emit(self, t: ValidatedTuple) -> bool:
        """Append one tuple; False when skipped as a duplicate."""
        if t.identity in self._identities:
            self.duplicates.append({"identity": list(t.identity), "kind": "identity"})
            return False
        key = overlap_key(t)
        if key in self._overlap:
            self.duplicates.append({"identity": list(t.identity), "kind": "overlap"})
            return False
        self._fh.write(t.serialize() + "\n")
        self._fh.flush()
        self._identities.add(t.identity)
        self._overlap.add(key)
        return True

    def close(self):
        self._fh.close()


def read_dataset(path: Path | str) -> list[ValidatedTuple]:
    with open(path, encoding="utf-8") as fh:
        return [parse_tuple(line) for line in fh if line.strip()]


# -- reporting ----------------------------------------------------------------


def report(tuples: list[ValidatedTuple], funnel: dict | None = None) -> dict:
    """Statistics bundle: taxonomy, modality split, buckets, levels."""
    if not tuples:
        raise EmptyDatasetError("report requested over an empty dataset")
    total = len(tuples)
    taxonomy_counts = {name: 0 for name in TAXONOMY}
    for t in tuples:
        taxonomy_counts[t.taxonomy_label] += 1
    taxonomy = {
        name: {"count": count, "pct": round(100.0 * count / total, 1)}
        for name, count in taxonomy_counts.items()
    }
    multimodal = sum(1 for t in tuples if t.is_multimodal)
    text_only = total - multimodal
    buckets: dict[str, int] = {}
    for t in tuples:
        page_count = t.metadata.get("doc_page_count")
        if page_count:
            bucket = classify_context(page_count, t.evidence_pages)
            key = f"{bucket.context_class}/{bucket.page_condition}"
            buckets[key] = buckets.get(key, 0) + 1
    levels: dict[str, int] = {}
    level_sum = 0
    for t in tuples:
        name = t.metadata.get("level", "unknown")
        levels[name] = levels.get(name, 0) + 1
        try:
            level_sum += int(str(name).split("_", 1)[0])
        except ValueError:
            pass
    stats = {
        "total": total,
        "taxonomy": taxonomy,
        "modality": {
            "text_only": text_only,
            "multimodal": multimodal,
            "text_only_pct": round(100.0 * text_only / total, 1),
            "multimodal_pct": round(100.0 * multimodal / total, 1),
            "text_only_pct_int": round(100.0 * text_only / total),
            "multimodal_pct_int": round(100.0 * multimodal / total),
        },
        "context_buckets": dict(sorted(buckets.items())),
        "levels": dict(sorted(levels.items())),
        "mean_level": level_sum / total,
    }
    if funnel is not None:
        stats["funnel"] = funnel
    return stats


def render_report(stats: dict, label: str = "dataset") -> str:
    lines = [f"== {label}: {stats['total']} questions =="]
    lines.append("")
    lines.append("taxonomy (count, %):")
    ranked = sorted(stats["taxonomy"].items(), key=lambda kv: (-kv[1]["count"], kv[0]))
    for name, row in ranked:
        if row["count"]:
            lines.append(f"  {name:<26} {row['count']:>6}  {row['pct']:>5.1f}%")
    lines.append("  (percentages rounded to one decimal; may not sum to exactly 100)")
    mod = stats["modality"]
    lines.append("")
    lines.append(
        f"modality: text-only {mod['text_only']} ({mod['text_only_pct_int']}%) / "
        f"multimodal {mod['multimodal']} ({mod['multimodal_pct_int']}%)"
    )
    if stats["context_buckets"]:
        lines.append("")
        lines.append("context buckets:")
        for key, count in stats["context_buckets"].items():
            lines.append(f"  {key:<8} {count:>6}")
    lines.append("")
    lines.append("levels:")
    for name, count in stats["levels"].items():
        lines.append(f"  {name:<26} {count:>6}")
    lines.append(f"mean level: {stats['mean_level']:.3f}")
    if "funnel" in stats:
        fn = stats["funnel"]
        lines.append("")
        lines.append(
            f"funnel: {fn['candidates']} candidates -> {fn['accepted']} accepted "
            f"({100.0 * fn['acceptance_rate']:.1f}%)"
        )
        for reason, count in fn.get("rejected_by_reason", {}).items():
            lines.append(f"  rejected/{reason:<20} {count:>6}")
    return "\n".join(lines) + "\n"


def render_comparison(all_stats: list[dict], labels: list[str]) -> str:
    """Side-by-side condition table (taxonomy %, mean level, modality)."""
    if len(all_stats) != len(labels):
        raise ValueError("one label per stats bundle")
    width = max(12, max(len(l) for l in labels) + 2)
    header = f"{'':<26}" + "".join(f"{label:>{width}}" for label in labels)
    lines = [header, "-" * len(header)]
    for name in TAXONOMY:
        if not any(s["taxonomy"][name]["count"] for s in all_stats):
            continue
        row = f"{name:<26}"
        for s in all_stats:
            row += f"{s['taxonomy'][name]['pct']:>{width - 1}.1f}%"
        lines.append(row)
    row = f"{'mean level':<26}"
    for s in all_stats:
        row += f"{s['mean_level']:>{width}.3f}"
    lines.append(row)
    row = f"{'multimodal %':<26}"
    for s in all_stats:
        row += f"{s['modality']['multimodal_pct_int']:>{width - 1}}%"
    lines.append(row)
    row = f"{'total':<26}"
    for s in all_stats:
        row += f"{s['total']:>{width}}"
    lines.append(row)
    return "\n".join(lines) + "\n"
