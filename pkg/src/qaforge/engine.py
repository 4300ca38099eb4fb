"""The closed-loop engine: drive each question through the adversarial
cycle, iterate over every chunk of every accepted document, and keep the
whole run checkpointable.

Cycle per question: swarm answers the draft, the judge scores the swarm,
and the gate decides. A swarm that beats the accuracy threshold proves
the question too easy, so it goes back to the generator for a harder
rewrite (level may rise, never fall) until it sticks or the refinement
budget runs out. Accepted questions pass the evidence validator before
emission.

Chunks are processed concurrently up to chunk_parallelism but committed
strictly in order, and the checkpoint cursor stores byte offsets into the
dataset and lifecycle files. Resume truncates both files to the cursor
and continues, which is what makes emission at-most-once even after a
mid-run kill. History entries carry a logical step counter instead of
wall-clock time so a resumed run reproduces the interrupted one byte for
byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import prompts
from .backends import BaseBackend, load_backend
from .backends.schemas import UNANSWERABLE_TEXT
from .chunking import Chunk, ChunkPolicy, chunk_document, materialize_chunk
from .errors import (
    AuthError,
    ConfigDriftError,
    GenerationFailedError,
    JudgeFailedError,
    QaforgeError,
    ValidatorFailedError,
)
from .policy import REFINE, GatePolicy, gate_decision
from .roles import JudgeReport, QuestionDraft, RoleClient, derive_seed_scope
from .screening import (
    ScreeningConfig,
    SourceManifestEntry,
    funnel,
    read_ledger,
    screen_corpus,
)
from .sidecar import open_sidecar
from .sink import DatasetSink, ValidatedTuple

log = logging.getLogger("qaforge.engine")

MANIFEST_VERSION = 1

STATES = (
    "drafted",
    "answered",
    "judged",
    "refining",
    "accepted",
    "validated",
    "emitted",
    "exhausted",
    "failed",
)
TERMINAL_STATES = ("emitted", "exhausted", "failed")

_ALLOWED = {
    None: {"drafted"},
    "drafted": {"answered", "failed"},
    "answered": {"judged", "failed"},
    "judged": {"refining", "accepted", "exhausted", "failed"},
    "refining": {"answered", "failed"},
    "accepted": {"validated", "failed"},
    "validated": {"emitted", "failed"},
}


@dataclass
class QuestionLifecycle:
    """Append-only state trace for one question."""

    doc_id: str
    chunk_index: int
    question_ordinal: int
    state: str | None = None
    round: int = 0
    history: list = field(default_factory=list)

    def advance(self, state: str, **payload):
        if state not in _ALLOWED.get(self.state, set()):
            raise ValueError(f"illegal transition {self.state} -> {state}")
        self.state = state
        if "round" in payload:
            self.round = payload["round"]
        self.history.append({"state": state, "step": len(self.history), "payload": payload})

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL_STATES

    def ledger_line(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "chunk_index": self.chunk_index,
            "question_ordinal": self.question_ordinal,
            "state": self.state,
            "round": self.round,
            "history": self.history,
        }


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class RunManifest:
    run_id: str
    seed: int
    config: dict
    config_hash: str
    prompt_hashes: dict
    cursor: dict = field(
        default_factory=lambda: {
            "doc_ordinal": 0,
            "chunk_ordinal": 0,
            "question_ordinal": 0,
            "dataset_bytes": 0,
            "ledger_bytes": 0,
        }
    )
    completed: bool = False
    version: int = MANIFEST_VERSION

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "run_id": self.run_id,
            "seed": self.seed,
            "config": self.config,
            "config_hash": self.config_hash,
            "prompt_hashes": self.prompt_hashes,
            "cursor": self.cursor,
            "completed": self.completed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(
            run_id=d["run_id"],
            seed=d["seed"],
            config=d["config"],
            config_hash=d["config_hash"],
            prompt_hashes=d["prompt_hashes"],
            cursor=d["cursor"],
            completed=d["completed"],
            version=d.get("version", MANIFEST_VERSION),
        )

    def save(self, path: Path | str):
        path = Path(path)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: Path | str) -> "RunManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_tuple(
    draft: QuestionDraft,
    report: JudgeReport,
    validation: dict,
    *,
    run_id: str,
    chunk: Chunk,
    question_ordinal: int,
    doc_page_count: int | None = None,
) -> ValidatedTuple:
    grounded = [a for a in report.validated_answers if a.logical_foundation]
    justification = grounded[0].logical_foundation if grounded else report.feedback.evaluation
    metadata = {
        "run_id": run_id,
        "doc_id": chunk.doc_id,
        "chunk_index": chunk.chunk_index,
        "question_ordinal": question_ordinal,
        "level": draft.level.wire_name,
        "declared_type": draft.declared_type,
        "question_type": report.question_type,
        "rounds_used": draft.round,
        "difficulty_rating": report.difficulty_rating,
    }
    if doc_page_count is not None:
        metadata["doc_page_count"] = doc_page_count
    return ValidatedTuple(
        question=draft.question_text,
        answer=report.correct_answer or UNANSWERABLE_TEXT,
        evidence_pages=report.evidence_pages,
        evidence_sources=report.evidence_sources,
        justification=justification,
        validation=validation,
        metadata=metadata,
    )


def run_question_cycle(
    roles: RoleClient,
    chunk: Chunk,
    draft: QuestionDraft,
    policy: GatePolicy,
    *,
    question_ordinal: int = 0,
    run_id: str = "adhoc",
    doc_page_count: int | None = None,
) -> tuple[QuestionLifecycle, ValidatedTuple | None]:
    """Drive one draft to a terminal decision; emission is the caller's.

    Returns the lifecycle plus the tuple to emit (None when the question
    exhausted its refinement budget or failed).
    """
    lc = QuestionLifecycle(chunk.doc_id, chunk.chunk_index, question_ordinal)
    lc.advance("drafted", round=draft.round, level=int(draft.level))
    current = draft
    try:
        while True:
            answers = roles.swarm_answer(chunk, current, policy.swarm_size)
            lc.advance("answered", round=current.round)
            report = roles.judge(chunk, current, answers, policy)
            lc.advance(
                "judged",
                round=current.round,
                accuracy_rate=report.accuracy_rate,
                level=int(current.level),
            )
            if gate_decision(report.accuracy_rate, policy) == REFINE:
                if current.round >= policy.max_refinement_rounds:
                    lc.advance("exhausted", rounds_used=current.round)
                    return lc, None
                lc.advance("refining", round=current.round + 1)
                current = roles.refine_question(chunk, current, report.feedback)
                continue
            lc.advance("accepted", round=current.round)
            break
        if policy.validate_evidence:
            vreport = roles.validate_evidence(chunk, current, report)
            if vreport.verdict != "confirmed":
                lc.advance("failed", reason=vreport.verdict)
                return lc, None
            validation = vreport.to_dict()
        else:
            validation = {
                "verdict": "unvalidated",
                "evidence_sources": list(report.evidence_sources),
                "evidence_pages": list(report.evidence_pages),
                "justification": "evidence validation disabled by policy",
            }
        lc.advance("validated", round=current.round)
        t = build_tuple(
            current,
            report,
            validation,
            run_id=run_id,
            chunk=chunk,
            question_ordinal=question_ordinal,
            doc_page_count=doc_page_count,
        )
        return lc, t
    except ValidatorFailedError as exc:
        lc.advance("failed", reason="unverifiable", error=str(exc))
        return lc, None
    except (GenerationFailedError, JudgeFailedError) as exc:
        lc.advance("failed", reason=type(exc).__name__, error=str(exc))
        return lc, None


@dataclass
class ChunkOutcome:
    chunk_index: int
    lifecycles: list[QuestionLifecycle] = field(default_factory=list)
    tuples: list[ValidatedTuple | None] = field(default_factory=list)
    error: str | None = None


class EngineRun:
    """One run (or resume) bound to an output directory."""

    def __init__(
        self,
        out_dir: Path | str,
        entries: list[SourceManifestEntry],
        config: dict,
        resume: bool = False,
    ):
        self.out_dir = Path(out_dir)
        self.entries = entries
        self.config = config
        self.seed = int(config.get("seed", 0))
        self.gate = GatePolicy.from_dict(config["gate"])
        self.chunking = ChunkPolicy(**config.get("chunking", {}))
        self.screening_cfg = ScreeningConfig.from_dict(config["screening"])
        self.backend: BaseBackend = load_backend(config["backend"], base_dir=self.out_dir)
        self.sidecar = open_sidecar(config.get("sidecar", {"mode": "fixtures"}))
        self.roles = RoleClient(self.backend, run_seed=self.seed)
        self.resume = resume

        gate_dict = self.gate.to_dict()
        # chunk_parallelism only changes scheduling, never results, so it
        # stays out of the hash: the same logical run keeps one run_id.
        gate_dict.pop("chunk_parallelism", None)
        hashed = {
            "seed": self.seed,
            "gate": gate_dict,
            "chunking": {"chunk_size": self.chunking.chunk_size, "overlap": self.chunking.overlap},
            "screening": self.screening_cfg.to_dict(),
            "backend": config["backend"],
        }
        digest = config_hash(hashed)
        self.manifest_path = self.out_dir / "manifest.json"
        if resume:
            if not self.manifest_path.exists():
                raise ConfigDriftError(f"no run manifest at {self.manifest_path}")
            self.manifest = RunManifest.load(self.manifest_path)
            if self.manifest.config_hash != digest:
                raise ConfigDriftError(
                    "config hash mismatch: manifest has "
                    f"{self.manifest.config_hash[:12]}, current config is {digest[:12]}"
                )
        else:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self.manifest = RunManifest(
                run_id=f"run-{digest[:12]}",
                seed=self.seed,
                config=hashed,
                config_hash=digest,
                prompt_hashes=prompts.verify_integrity(),
            )
            self.manifest.save(self.manifest_path)

    # -- paths ---------------------------------------------------------------

    @property
    def dataset_path(self) -> Path:
        return self.out_dir / "dataset.jsonl"

    @property
    def ledger_path(self) -> Path:
        return self.out_dir / "lifecycles.jsonl"

    @property
    def screening_path(self) -> Path:
        return self.out_dir / "screening.jsonl"

    # -- screening -------------------------------------------------------------

    def _screened(self) -> list[dict]:
        """Screen the corpus, or reuse the ledger when resuming."""
        if self.screening_path.exists() and (self.resume or self.manifest.cursor["doc_ordinal"] > 0):
            return read_ledger(self.screening_path)
        records = screen_corpus(
            self.entries,
            self.backend,
            self.screening_cfg,
            self.sidecar,
            ledger_path=self.screening_path,
            parallelism=self.gate.chunk_parallelism,
        )
        return [r.ledger_line() for r in records]

    # -- chunk work ---------------------------------------------------------------

    def _process_chunk(self, entry: SourceManifestEntry, chunk_index: int, span, page_count: int) -> ChunkOutcome:
        outcome = ChunkOutcome(chunk_index=chunk_index)
        try:
            chunk = materialize_chunk(
                entry.doc_id,
                entry.uri,
                chunk_index,
                span,
                self.sidecar,
                with_layout=self.gate.enrichment,
            )
            drafts = self.roles.generate_questions(chunk, self.gate)
            for ordinal, draft in enumerate(drafts):
                lc, t = run_question_cycle(
                    self.roles,
                    chunk,
                    draft,
                    self.gate,
                    question_ordinal=ordinal,
                    run_id=self.manifest.run_id,
                    doc_page_count=page_count,
                )
                outcome.lifecycles.append(lc)
                outcome.tuples.append(t)
        except AuthError:
            raise
        except QaforgeError as exc:
            outcome.error = f"{type(exc).__name__}: {exc}"
        return outcome

    # -- the run -------------------------------------------------------------------

    def execute(self, stop_after_chunks: int | None = None) -> Path:
        """Run (or finish) the whole pipeline; returns the dataset path."""
        if self.manifest.completed:
            log.info("run %s already completed; nothing to do", self.manifest.run_id)
            return self.dataset_path
        ledger_rows = self._screened()
        by_doc = {e.doc_id: e for e in self.entries}
        accepted = [row for row in ledger_rows if row["verdict"] == "accepted"]
        log.info(
            "run %s: %d/%d documents accepted by screening",
            self.manifest.run_id,
            len(accepted),
            len(ledger_rows),
        )

        cursor = self.manifest.cursor
        # truncate outputs back to the last committed chunk
        for path, key in ((self.dataset_path, "dataset_bytes"), (self.ledger_path, "ledger_bytes")):
            if path.exists():
                with open(path, "r+", encoding="utf-8") as fh:
                    fh.truncate(cursor[key])
            else:
                path.touch()
        sink = DatasetSink(self.dataset_path, resume=True)
        ledger_fh = open(self.ledger_path, "a", encoding="utf-8")
        committed_chunks = 0
        try:
            for doc_ordinal, row in enumerate(accepted):
                if doc_ordinal < cursor["doc_ordinal"]:
                    continue
                entry = by_doc[row["doc_id"]]
                page_count = row["page_count"]
                spans = chunk_document(page_count, self.chunking)
                start_chunk = cursor["chunk_ordinal"] if doc_ordinal == cursor["doc_ordinal"] else 0
                pending = [
                    (index, span)
                    for index, span in enumerate(spans)
                    if index >= start_chunk
                ]
                if not pending:
                    self._commit_cursor(doc_ordinal + 1, 0, sink, ledger_fh)
                    continue
                workers = min(self.gate.chunk_parallelism, len(pending))
                if workers == 1:
                    futures = None
                    results = (self._process_chunk(entry, i, span, page_count) for i, span in pending)
                else:
                    pool = ThreadPoolExecutor(max_workers=workers)
                    futures = [
                        pool.submit(self._process_chunk, entry, i, span, page_count)
                        for i, span in pending
                    ]
                    results = (f.result() for f in futures)
                try:
                    for outcome in results:
                        self._commit_chunk(entry, outcome, sink, ledger_fh)
                        last_chunk = outcome.chunk_index + 1
                        if last_chunk >= len(spans):
                            self._commit_cursor(doc_ordinal + 1, 0, sink, ledger_fh)
                        else:
                            self._commit_cursor(doc_ordinal, last_chunk, sink, ledger_fh)
                        committed_chunks += 1
                        if stop_after_chunks is not None and committed_chunks >= stop_after_chunks:
                            log.info("stopping early after %d chunks (test hook)", committed_chunks)
                            return self.dataset_path
                finally:
                    if futures is not None:
                        pool.shutdown(wait=False, cancel_futures=True)
            self.manifest.completed = True
            self.manifest.save(self.manifest_path)
            log.info("run %s complete: dataset at %s", self.manifest.run_id, self.dataset_path)
        finally:
            sink.close()
            ledger_fh.close()
            self.sidecar.close()
        return self.dataset_path

    def _commit_chunk(self, entry: SourceManifestEntry, outcome: ChunkOutcome, sink: DatasetSink, ledger_fh):
        if outcome.error is not None:
            log.warning(
                "run %s doc %s chunk %d failed: %s (recorded; run continues)",
                self.manifest.run_id,
                entry.doc_id,
                outcome.chunk_index,
                outcome.error,
            )
            ledger_fh.write(
                json.dumps(
                    {
                        "doc_id": entry.doc_id,
                        "chunk_index": outcome.chunk_index,
                        "state": "chunk_failed",
                        "error": outcome.error,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
            ledger_fh.flush()
            return
        for lc, t in zip(outcome.lifecycles, outcome.tuples):
            if t is not None:
                written = sink.emit(t)
                lc.advance("emitted", written=written)
            log.info(
                "run %s doc %s chunk %d q%d -> %s",
                self.manifest.run_id,
                lc.doc_id,
                lc.chunk_index,
                lc.question_ordinal,
                lc.state,
            )
            ledger_fh.write(json.dumps(lc.ledger_line(), sort_keys=True) + "\n")
        ledger_fh.flush()

    def _commit_cursor(self, doc_ordinal: int, chunk_ordinal: int, sink: DatasetSink, ledger_fh):
        ledger_fh.flush()
        self.manifest.cursor = {
            "doc_ordinal": doc_ordinal,
            "chunk_ordinal": chunk_ordinal,
            "question_ordinal": 0,
            "dataset_bytes": sink.tell(),
            "ledger_bytes": ledger_fh.tell(),
        }
        self.manifest.save(self.manifest_path)
