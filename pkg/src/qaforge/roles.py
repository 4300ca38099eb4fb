"""Typed wrappers for the loop roles.

Each wrapper renders a prompt template, embeds a machine-readable context
block, sends the request through the backend gateway, and parses the
schema-validated reply into a domain object. Domain rules the schema
cannot express (pages inside the chunk span, verdict coverage, level
never decreasing) get one repair round-trip of their own before the
role's failure error is raised.

Wrappers are stateless; all loop state lives with the engine.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field

from . import prompts
from .backends import BaseBackend, RoleRequest, fan_out, invoke
from .backends.schemas import (
    EVIDENCE_SOURCES,
    TAXONOMY,
    UNANSWERABLE_TEXT,
    VERDICTS,
)
from .chunking import Chunk
from .errors import (
    AuthError,
    BackendError,
    GenerationFailedError,
    JudgeFailedError,
    ValidatorFailedError,
)
from .policy import GatePolicy
from .sidecar import EnrichedPage

MAX_ATTACHED_IMAGES = 8

AGENT_PERSONAS = (
    "You are a meticulous archivist who answers only from what the pages literally state.",
    "You are a domain analyst who synthesizes across sections before answering.",
    "You are a data specialist who reads tables, charts, and figures before body text.",
    "You are a skeptical reviewer who double-checks every claim against the cited page.",
    "You are a methodical researcher who reasons step by step from the document.",
)


def derive_seed_scope(run_seed: int, doc_id: str, chunk_index: int) -> str:
    """Stable per-chunk randomness scope; makes runs order-independent."""
    h = hashlib.sha256(f"{run_seed}\x1f{doc_id}\x1f{chunk_index}".encode())
    return h.hexdigest()[:16]


class QuestionLevel(enum.IntEnum):
    FACTUAL = 1
    INFERENTIAL = 2
    CONTEXTUAL_AMBIGUITY = 3

    @property
    def wire_name(self) -> str:
        return _LEVEL_WIRE[self]

    @classmethod
    def from_wire(cls, name: str) -> "QuestionLevel":
        for level, wire in _LEVEL_WIRE.items():
            if wire == name:
                return level
        raise ValueError(f"unknown level name {name!r}")


_LEVEL_WIRE = {
    QuestionLevel.FACTUAL: "1_factual",
    QuestionLevel.INFERENTIAL: "2_inferential",
    QuestionLevel.CONTEXTUAL_AMBIGUITY: "3_contextual_ambiguity",
}


@dataclass(frozen=True)
class QuestionDraft:
    question_text: str
    cognitive_premise: str
    level: QuestionLevel
    declared_type: str
    target_pages: tuple[int, ...]
    round: int = 0
    parent: "QuestionDraft | None" = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "level", QuestionLevel(self.level))
        object.__setattr__(self, "target_pages", tuple(self.target_pages))
        if not self.question_text:
            raise ValueError("question_text must be non-empty")
        if self.declared_type not in TAXONOMY:
            raise ValueError(f"declared_type {self.declared_type!r} not in taxonomy")
        if self.round < 0:
            raise ValueError("round must be >= 0")
        if self.parent is not None:
            if self.round != self.parent.round + 1:
                raise ValueError("refined draft must advance round by exactly 1")
            if self.level < self.parent.level:
                raise ValueError("refinement must never lower the question level")

    @property
    def expected_unanswerable(self) -> bool:
        return self.level == QuestionLevel.CONTEXTUAL_AMBIGUITY

    def lineage(self) -> list["QuestionDraft"]:
        """Chain from the round-0 ancestor to this draft."""
        chain: list[QuestionDraft] = []
        node: QuestionDraft | None = self
        while node is not None:
            chain.append(node)
            node = node.parent
        chain.reverse()
        return chain


@dataclass(frozen=True)
class CandidateAnswer:
    agent_id: int
    answer_text: str
    logical_foundation: str
    claimed_evidence_pages: tuple[int, ...]
    abstained: bool

    def __post_init__(self):
        object.__setattr__(self, "claimed_evidence_pages", tuple(self.claimed_evidence_pages))
        if self.agent_id < 1:
            raise ValueError("agent_id starts at 1")


@dataclass(frozen=True)
class AgentVerdict:
    agent_id: int
    verdict: str

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    @property
    def counts_correct(self) -> bool:
        return self.verdict in ("correct", "abstain_correct")


@dataclass(frozen=True)
class Feedback:
    correct_answer: str
    attempted_answer: str
    evaluation: str
    suggested_refinement: str

    def to_dict(self) -> dict:
        return {
            "correct_answer": self.correct_answer,
            "attempted_answer": self.attempted_answer,
            "evaluation": self.evaluation,
            "suggested_refinement": self.suggested_refinement,
        }


@dataclass(frozen=True)
class JudgeReport:
    verdicts: tuple[AgentVerdict, ...]
    validated_answers: tuple[CandidateAnswer, ...]
    correct_answer: str
    question_type: str
    difficulty_rating: int
    evidence_pages: tuple[int, ...]
    evidence_sources: tuple[str, ...]
    accuracy_rate: float
    feedback: Feedback

    def __post_init__(self):
        if not self.verdicts:
            raise ValueError("judge report requires at least one verdict")
        n_correct = sum(1 for v in self.verdicts if v.counts_correct)
        expected = n_correct / len(self.verdicts)
        if self.accuracy_rate != expected:
            raise ValueError(
                f"accuracy_rate {self.accuracy_rate} != {n_correct}/{len(self.verdicts)}"
            )
        if self.question_type not in TAXONOMY:
            raise ValueError(f"question_type {self.question_type!r} not in taxonomy")
        if not 1 <= self.difficulty_rating <= 5:
            raise ValueError("difficulty_rating must be 1..5")
        bad = set(self.evidence_sources) - set(EVIDENCE_SOURCES)
        if bad:
            raise ValueError(f"unknown evidence sources {sorted(bad)}")


@dataclass(frozen=True)
class ValidationReport:
    verdict: str
    evidence_sources: tuple[str, ...]
    evidence_pages: tuple[int, ...]
    justification: str

    def __post_init__(self):
        if self.verdict not in ("confirmed", "mismatch", "unverifiable"):
            raise ValueError(f"unknown validation verdict {self.verdict!r}")
        bad = set(self.evidence_sources) - set(EVIDENCE_SOURCES)
        if bad:
            raise ValueError(f"unknown evidence sources {sorted(bad)}")
        if self.verdict == "confirmed" and not self.evidence_sources:
            raise ValueError("confirmed verdict requires non-empty evidence_sources")

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "evidence_sources": list(self.evidence_sources),
            "evidence_pages": list(self.evidence_pages),
            "justification": self.justification,
        }


def _context_json(ctx: dict) -> str:
    return json.dumps(ctx, indent=2, sort_keys=True)


def _attach_images(pages: tuple[EnrichedPage, ...]) -> tuple[EnrichedPage, ...]:
    with_regions = tuple(p for p in pages if p.has_nontext)
    return with_regions[:MAX_ATTACHED_IMAGES]


class RoleClient:
    """Backend-facing facade for the four loop roles."""

    def __init__(self, backend: BaseBackend, run_seed: int = 0):
        self.backend = backend
        self.run_seed = run_seed

    # -- shared plumbing ------------------------------------------------------

    def _chunk_ctx(self, chunk: Chunk) -> dict:
        nontext = sum(1 for page in chunk.pages for el in page.elements if el.is_nontext)
        return {
            "seed_scope": derive_seed_scope(self.run_seed, chunk.doc_id, chunk.chunk_index),
            "doc_id": chunk.doc_id,
            "chunk_index": chunk.chunk_index,
            "span": list(chunk.page_span),
            "layout": {"nontext_elements": nontext},
        }

    def _checked_invoke(self, req: RoleRequest, domain_check, failure_cls):
        """invoke() plus one repair round-trip for domain-rule violations."""
        try:
            reply, _ = invoke(self.backend, req)
            problem = domain_check(reply)
            if problem is not None:
                reply, _ = invoke(self.backend, req.with_repair(problem))
                problem = domain_check(reply)
                if problem is not None:
                    raise failure_cls(problem)
            return reply
        except AuthError:
            raise
        except BackendError as exc:
            raise failure_cls(str(exc)) from exc

    # -- question generation ---------------------------------------------------

    def _parse_draft(self, item: dict, chunk: Chunk, round_num: int, parent=None) -> QuestionDraft:
        return QuestionDraft(
            question_text=item["question_text"],
            cognitive_premise=item.get("cognitive_premise", ""),
            level=QuestionLevel(item["level"]),
            declared_type=item["declared_type"],
            target_pages=tuple(item["target_pages"]),
            round=round_num,
            parent=parent,
        )

    @staticmethod
    def _pages_in_span(pages, chunk: Chunk) -> str | None:
        first, last = chunk.page_span
        outside = [p for p in pages if not first <= p <= last]
        if outside:
            return f"target_pages {outside} fall outside pages {first}-{last}"
        return None

    def generate_questions(self, chunk: Chunk, policy: GatePolicy) -> list[QuestionDraft]:
        """Draft round-0 questions for one chunk per the policy's level mix."""
        requested = {str(level): count for level, count in policy.level_mix if count > 0}
        ctx = self._chunk_ctx(chunk)
        ctx["level_counts"] = requested
        ctx["round"] = 0
        first, last = chunk.page_span
        text = prompts.render(
            "QGP",
            doc_id=chunk.doc_id,
            span_first=first,
            span_last=last,
            context_json=_context_json(ctx),
        )
        req = RoleRequest(
            role="q_gen",
            prompt_id="QGP",
            images=_attach_images(chunk.pages),
            text_context=text,
            expected_schema="question_batch",
        )

        def check(reply: dict) -> str | None:
            got_levels = {}
            for item in reply["questions"]:
                problem = self._pages_in_span(item["target_pages"], chunk)
                if problem is not None:
                    return problem
                got_levels[str(item["level"])] = got_levels.get(str(item["level"]), 0) + 1
            missing = [lvl for lvl in requested if got_levels.get(lvl, 0) < 1]
            if missing:
                return f"no questions generated for requested levels {missing}"
            return None

        reply = self._checked_invoke(req, check, GenerationFailedError)
        return [self._parse_draft(item, chunk, round_num=0) for item in reply["questions"]]

    def refine_question(self, chunk: Chunk, draft: QuestionDraft, feedback: Feedback) -> QuestionDraft:
        """Rewrite a too-easy question one round harder; level never drops."""
        if not feedback.suggested_refinement:
            raise ValueError("refinement requires non-empty suggested_refinement")
        round_num = draft.round + 1
        ctx = self._chunk_ctx(chunk)
        ctx["parent"] = {
            "question_text": draft.question_text,
            "level": int(draft.level),
            "round": draft.round,
            "declared_type": draft.declared_type,
        }
        ctx["feedback"] = feedback.to_dict()
        ctx["round"] = round_num
        first, last = chunk.page_span
        text = prompts.render(
            "QRP",
            doc_id=chunk.doc_id,
            span_first=first,
            span_last=last,
            context_json=_context_json(ctx),
        )
        req = RoleRequest(
            role="q_gen",
            prompt_id="QRP",
            images=_attach_images(chunk.pages),
            text_context=text,
            expected_schema="refined_question",
        )

        def check(reply: dict) -> str | None:
            problem = self._pages_in_span(reply["target_pages"], chunk)
            if problem is not None:
                return problem
            if reply["level"] < int(draft.level):
                return f"refined level {reply['level']} is below parent level {int(draft.level)}"
            return None

        reply = self._checked_invoke(req, check, GenerationFailedError)
        return self._parse_draft(reply, chunk, round_num=round_num, parent=draft)

    # -- answering --------------------------------------------------------------

    def swarm_answer(self, chunk: Chunk, draft: QuestionDraft, n: int) -> list[CandidateAnswer]:
        """Fan the question out to n agents; failed slots degrade to abstentions."""
        if n < 1:
            raise ValueError("swarm size must be >= 1")
        base_ctx = self._chunk_ctx(chunk)
        base_ctx["question"] = {
            "question_text": draft.question_text,
            "level": int(draft.level),
            "round": draft.round,
        }
        reqs = []
        for agent_id in range(1, n + 1):
            ctx = dict(base_ctx)
            ctx["agent_id"] = agent_id
            ctx["swarm_size"] = n
            persona = AGENT_PERSONAS[(agent_id - 1) % len(AGENT_PERSONAS)]
            text = prompts.render("AGP", persona=persona, context_json=_context_json(ctx))
            reqs.append(
                RoleRequest(
                    role="answerer",
                    prompt_id="AGP",
                    images=_attach_images(chunk.pages),
                    text_context=text,
                    expected_schema="candidate_answer",
                )
            )
        slots = fan_out(self.backend, reqs, parallelism=n)
        answers = []
        for slot in slots:
            agent_id = slot.index + 1
            if slot.ok:
                reply = slot.reply
                answers.append(
                    CandidateAnswer(
                        agent_id=agent_id,
                        answer_text=reply["answer_text"],
                        logical_foundation=reply["logical_foundation"],
                        claimed_evidence_pages=tuple(reply["claimed_evidence_pages"]),
                        abstained=reply["abstained"],
                    )
                )
            else:
                answers.append(
                    CandidateAnswer(
                        agent_id=agent_id,
                        answer_text="",
                        logical_foundation=f"slot failed: {slot.error}",
                        claimed_evidence_pages=(),
                        abstained=True,
                    )
                )
        return answers

    # -- judging ------------------------------------------------------------------

    def judge(
        self,
        chunk: Chunk,
        draft: QuestionDraft,
        answers: list[CandidateAnswer],
        policy: GatePolicy,
    ) -> JudgeReport:
        """Score the swarm, derive the gold answer, and produce feedback."""
        if not answers:
            raise ValueError("judge requires at least one answer")
        ctx = self._chunk_ctx(chunk)
        ctx["question"] = {
            "question_text": draft.question_text,
            "level": int(draft.level),
            "round": draft.round,
            "declared_type": draft.declared_type,
        }
        ctx["answers"] = [
            {
                "agent_id": a.agent_id,
                "answer_text": a.answer_text,
                "logical_foundation": a.logical_foundation,
                "claimed_evidence_pages": list(a.claimed_evidence_pages),
                "abstained": a.abstained,
            }
            for a in answers
        ]
        ctx["unanswerable_reference"] = UNANSWERABLE_TEXT
        ctx["policy"] = {"accuracy_threshold": policy.accuracy_threshold}
        if policy.accuracy_threshold is None:
            clause = "No accuracy gate is active for this run."
        else:
            clause = (
                "The pipeline refines any question whose swarm accuracy exceeds "
                f"{policy.accuracy_threshold:.2f}."
            )
        text = prompts.render("AP", threshold_clause=clause, context_json=_context_json(ctx))
        req = RoleRequest(
            role="judge",
            prompt_id="AP",
            images=_attach_images(chunk.pages),
            text_context=text,
            expected_schema="judge_report",
        )
        expected_ids = {a.agent_id for a in answers}

        def check(reply: dict) -> str | None:
            got = [v["agent_id"] for v in reply["verdicts"]]
            if sorted(got) != sorted(expected_ids):
                return f"verdicts must cover agent_ids {sorted(expected_ids)} exactly, got {sorted(got)}"
            return None

        reply = self._checked_invoke(req, check, JudgeFailedError)
        verdicts = tuple(
            AgentVerdict(agent_id=v["agent_id"], verdict=v["verdict"]) for v in reply["verdicts"]
        )
        verdict_by_id = {v.agent_id: v for v in verdicts}
        validated = tuple(a for a in answers if verdict_by_id[a.agent_id].counts_correct)
        n_correct = sum(1 for v in verdicts if v.counts_correct)
        fb = reply["feedback"]
        return JudgeReport(
            verdicts=verdicts,
            validated_answers=validated,
            correct_answer=reply["correct_answer"],
            question_type=reply["question_type"],
            difficulty_rating=reply["difficulty_rating"],
            evidence_pages=tuple(reply["evidence_pages"]),
            evidence_sources=tuple(reply["evidence_sources"]),
            accuracy_rate=n_correct / len(verdicts),
            feedback=Feedback(
                correct_answer=fb["correct_answer"],
                attempted_answer=fb["attempted_answer"],
                evaluation=fb["evaluation"],
                suggested_refinement=fb["suggested_refinement"],
            ),
        )

    # -- validation ------------------------------------------------------------------

    def validate_evidence(self, chunk: Chunk, draft: QuestionDraft, report: JudgeReport) -> ValidationReport:
        """Independently re-check that cited evidence grounds the judged answer."""
        ctx = self._chunk_ctx(chunk)
        ctx["question"] = {
            "question_text": draft.question_text,
            "level": int(draft.level),
            "round": draft.round,
            "declared_type": draft.declared_type,
        }
        ctx["judged"] = {
            "correct_answer": report.correct_answer,
            "evidence_pages": list(report.evidence_pages),
            "evidence_sources": list(report.evidence_sources),
        }
        text = prompts.render("EVP", context_json=_context_json(ctx))
        req = RoleRequest(
            role="validator",
            prompt_id="EVP",
            images=_attach_images(chunk.pages),
            text_context=text,
            expected_schema="validation_report",
        )
        first, last = chunk.page_span

        def check(reply: dict) -> str | None:
            if reply["verdict"] != "confirmed":
                return None
            if not reply["evidence_sources"]:
                return "confirmed verdict requires non-empty evidence_sources"
            outside = [p for p in reply["evidence_pages"] if not first <= p <= last]
            if outside:
                return f"confirmed verdict cites pages {outside} outside {first}-{last}"
            return None

        reply = self._checked_invoke(req, check, ValidatorFailedError)
        return ValidationReport(
            verdict=reply["verdict"],
            evidence_sources=tuple(reply["evidence_sources"]),
            evidence_pages=tuple(reply["evidence_pages"]),
            justification=reply["justification"],
        )
