"""Deterministic scripted backend.

Every reply is a pure function of (script, request): draws come from
SHA-256 over the script seed plus request-derived parts, so identical
requests always get identical replies, regardless of thread interleaving
or invocation order. The script controls per-level swarm accuracy, page
suitability, multimodal question availability, and fault injection
(evidence-source mismatches, malformed replies, slot timeouts), which is
what lets the paper-scale ablations run at desk scale.

Ground truth is recomputable: the gold answer, true evidence, and the
mismatch-injection decision for a question all derive from its
fingerprint, so tests can audit emitted tuples against the script.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

from ..errors import BackendTimeoutError
from . import BaseBackend, RequestBudget, RoleRequest, extract_context
from .schemas import EVIDENCE_SOURCES, TAXONOMY, UNANSWERABLE_TEXT

LEVEL_TYPES = {
    1: ["Factual Recall", "Data Retrieval & OCR", "Conceptual Understanding"],
    2: [
        "Reasoning",
        "Reasoning",
        "Reasoning",
        "Multi-hop Reasoning",
        "Hypothetical Reasoning",
        "Experimental Design",
        "Prediction Analysis",
        "Argumentation",
        "Step-by-step Explanation",
    ],
    3: ["Unanswerable"],
}

_NONTEXT_POOL = ["table", "chart", "figure", "image"]


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(str(part).encode())
        h.update(b"\x1f")
    return h.hexdigest()


def question_fingerprint(seed_scope: str, question_text: str) -> str:
    return _digest("qfp", seed_scope, question_text)[:24]


@dataclass(frozen=True)
class SimScript:
    """Behavior tables and fault knobs for the scripted backend."""

    seed: int = 0
    screener: dict = field(default_factory=dict)
    q_gen: dict = field(default_factory=dict)
    answerer: dict = field(default_factory=dict)
    judge: dict = field(default_factory=dict)
    validator: dict = field(default_factory=dict)
    faults: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "SimScript":
        known = {"seed", "screener", "q_gen", "answerer", "judge", "validator", "faults"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown script keys: {sorted(unknown)}")
        return cls(
            seed=int(d.get("seed", 0)),
            screener=dict(d.get("screener", {})),
            q_gen=dict(d.get("q_gen", {})),
            answerer=dict(d.get("answerer", {})),
            judge=dict(d.get("judge", {})),
            validator=dict(d.get("validator", {})),
            faults=dict(d.get("faults", {})),
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "screener": self.screener,
            "q_gen": self.q_gen,
            "answerer": self.answerer,
            "judge": self.judge,
            "validator": self.validator,
            "faults": self.faults,
        }

    def with_seed(self, seed: int) -> "SimScript":
        return replace(self, seed=seed)

    # -- deterministic draws ------------------------------------------------

    def unit(self, *parts) -> float:
        """Uniform draw in [0, 1), fixed by (seed, parts)."""
        return int(_digest(self.seed, *parts)[:12], 16) / float(1 << 48)

    def pick(self, seq, *parts):
        return seq[int(self.unit(*parts) * len(seq)) % len(seq)]

    # -- recomputable ground truth ------------------------------------------

    def gold_answer(self, qfp: str) -> str:
        return f"The supported answer is finding-{_digest('gold', qfp)[:12]}."

    def is_multimodal(self, qfp: str, nontext_elements: int) -> bool:
        if nontext_elements <= 0:
            return False
        prob = float(self.q_gen.get("multimodal_prob", 0.0))
        return self.unit("mm", qfp) < prob

    def true_sources(self, qfp: str, multimodal: bool) -> list[str]:
        if not multimodal:
            return ["text"]
        sources = {self.pick(_NONTEXT_POOL, "src1", qfp)}
        if self.unit("src2", qfp) < 0.35:
            sources.add(self.pick(_NONTEXT_POOL, "src2v", qfp))
        if self.unit("srctext", qfp) < 0.5:
            sources.add("text")
        return sorted(sources)

    def true_pages(self, qfp: str, span: tuple[int, int], level: int) -> list[int]:
        if level == 3:
            return []
        first, last = span
        width = last - first + 1
        count = 1
        if self.unit("np1", qfp) < 0.4:
            count += 1
        if self.unit("np2", qfp) < 0.15:
            count += 1
        pages = set()
        for i in range(count):
            pages.add(first + int(self.unit("pg", qfp, i) * width) % width)
        return sorted(pages)

    def mismatch_injected(self, qfp: str) -> bool:
        rate = float(self.faults.get("evidence_mismatch_rate", 0.0))
        return rate > 0 and self.unit("mismatch", qfp) < rate

    def perturbed_sources(self, qfp: str, true_sources: list[str]) -> list[str]:
        candidates = [s for s in EVIDENCE_SOURCES if s not in true_sources]
        return [self.pick(candidates, "perturb", qfp)]

    def accuracy_for(self, doc_id: str, chunk_index: int, level: int, round_num: int) -> float:
        for row in self.answerer.get("overrides", ()):
            if row.get("doc_id") not in (None, doc_id):
                continue
            if row.get("chunk_index") not in (None, chunk_index):
                continue
            if row.get("level") not in (None, level):
                continue
            if row.get("round") not in (None, round_num):
                continue
            return float(row["accuracy"])
        table = self.answerer.get("accuracy_by_level", {})
        base = float(table.get(str(level), 0.5))
        # refined questions are harder even at the same level
        decay = float(self.answerer.get("round_decay", 1.0))
        return base * decay**round_num


class SimulatorBackend(BaseBackend):
    backend_kind = "simulator"

    def __init__(self, script: SimScript, budget: RequestBudget | None = None):
        super().__init__(budget=budget)
        self.script = script

    def complete(self, req: RoleRequest) -> str:
        ctx = extract_context(req.text_context)
        if req.prompt_id in self.script.faults.get("dead_prompts", ()):
            return '{"broken": '  # stays malformed even through repair
        malformed_rate = float(self.script.faults.get("malformed_reply_rate", 0.0))
        if malformed_rate > 0 and not req.is_repair:
            if self.script.unit("malformed", req.prompt_id, _digest(req.text_context)) < malformed_rate:
                return '{"questions": ['  # deliberately truncated
        handler = {
            "suitability": self._suitability,
            "QGP": self._generate,
            "QRP": self._refine,
            "AGP": self._answer,
            "AP": self._judge,
            "EVP": self._validate,
        }[req.prompt_id]
        return json.dumps(handler(ctx), sort_keys=True)

    # -- per-role behaviors --------------------------------------------------

    def _suitability(self, ctx: dict) -> dict:
        doc_id, page_index = ctx["doc_id"], int(ctx["page_index"])
        overrides = self.script.screener.get("page_overrides", {})
        if doc_id in overrides and page_index <= len(overrides[doc_id]):
            passed = bool(overrides[doc_id][page_index - 1])
        else:
            prob = self.script.screener.get("pass_probability")
            if prob is not None:
                passed = self.script.unit("suit", doc_id, page_index) < float(prob)
            else:
                passed = bool(self.script.screener.get("default_pass", True))
        return {"verdict": "yes" if passed else "no"}

    def _question(self, ctx: dict, level: int, token: str, round_num: int) -> dict:
        seed_scope = ctx["seed_scope"]
        first, last = ctx["span"]
        width = last - first + 1
        if round_num == 0:
            text = (
                f"[L{level}] ({token}) What does the material on pages {first}-{last} "
                f"of {ctx['doc_id']} establish about subject-{token[:6]}?"
            )
        else:
            text = (
                f"[L{level}] ({token}) Refined r{round_num}: synthesizing pages {first}-{last} "
                f"of {ctx['doc_id']}, what follows for subject-{token[:6]}?"
            )
        qfp = question_fingerprint(seed_scope, text)
        nontext = int(ctx.get("layout", {}).get("nontext_elements", 0))
        multimodal = self.script.is_multimodal(qfp, nontext)
        if level == 3:
            declared = "Unanswerable"
        elif multimodal and self.script.unit("imgq", qfp) < 0.5:
            declared = "Image-based Question"
        else:
            declared = self.script.pick(LEVEL_TYPES[level], "type", qfp)
        n_targets = 1 + (1 if self.script.unit("ntgt", qfp) < 0.3 else 0)
        targets = sorted(
            {first + int(self.script.unit("tgt", qfp, i) * width) % width for i in range(n_targets)}
        )
        premise = (
            f"Grounded in {'a non-text region' if multimodal else 'body text'} "
            f"around page {targets[0]}."
        )
        return {
            "question_text": text,
            "cognitive_premise": premise,
            "level": level,
            "declared_type": declared,
            "target_pages": targets,
        }

    def _generate(self, ctx: dict) -> dict:
        questions = []
        for level_key in sorted(ctx["level_counts"]):
            count = int(ctx["level_counts"][level_key])
            level = int(level_key)
            for k in range(count):
                token = _digest("q", ctx["seed_scope"], level, k)[:10]
                questions.append(self._question(ctx, level, token, round_num=0))
        return {"questions": questions}

    def _refine(self, ctx: dict) -> dict:
        parent = ctx["parent"]
        round_num = int(ctx["round"])
        level = int(parent["level"])
        if self.script.q_gen.get("escalate_on_refine", True):
            if level == 1:
                # recall -> inference is the natural hardening step
                level = 2
            elif level == 2:
                esc = float(self.script.q_gen.get("escalate_prob_23", 0.4))
                if self.script.unit("esc23", ctx["seed_scope"], parent["question_text"]) < esc:
                    level = 3
        token = _digest("refine", ctx["seed_scope"], parent["question_text"], round_num)[:10]
        return self._question(ctx, level, token, round_num=round_num)

    def _answer(self, ctx: dict) -> dict:
        question = ctx["question"]
        agent_id = int(ctx["agent_id"])
        qfp = question_fingerprint(ctx["seed_scope"], question["question_text"])
        timeout_rate = float(self.script.faults.get("answer_timeout_rate", 0.0))
        if timeout_rate > 0 and self.script.unit("slot-timeout", qfp, agent_id) < timeout_rate:
            raise BackendTimeoutError(f"simulated timeout for agent {agent_id}")
        level = int(question["level"])
        accuracy = self.script.accuracy_for(
            ctx["doc_id"], int(ctx["chunk_index"]), level, int(question["round"])
        )
        correct = self.script.unit("ans", qfp, agent_id) < accuracy
        span = tuple(ctx["span"])
        pages = self.script.true_pages(qfp, span, level)
        if level == 3:
            # The right behavior for a context-ambiguity question is abstention.
            if correct:
                return {
                    "answer_text": "",
                    "logical_foundation": "No passage supports a grounded answer.",
                    "claimed_evidence_pages": [],
                    "abstained": True,
                }
            return {
                "answer_text": f"Fabricated claim {_digest('halluc', qfp, agent_id)[:8]}.",
                "logical_foundation": "Asserted without document support.",
                "claimed_evidence_pages": [span[0]],
                "abstained": False,
            }
        if correct:
            return {
                "answer_text": self.script.gold_answer(qfp),
                "logical_foundation": f"Supported by pages {pages}.",
                "claimed_evidence_pages": pages,
                "abstained": False,
            }
        if self.script.unit("abstain", qfp, agent_id) < 0.25:
            return {
                "answer_text": "",
                "logical_foundation": "Could not locate supporting content.",
                "claimed_evidence_pages": [],
                "abstained": True,
            }
        return {
            "answer_text": f"The answer appears to be guess-{_digest('wrong', qfp, agent_id)[:8]}.",
            "logical_foundation": "Weakly grounded inference.",
            "claimed_evidence_pages": pages[:1] or [span[0]],
            "abstained": False,
        }

    def _judge(self, ctx: dict) -> dict:
        question = ctx["question"]
        level = int(question["level"])
        qfp = question_fingerprint(ctx["seed_scope"], question["question_text"])
        expected_unanswerable = level == 3
        gold = UNANSWERABLE_TEXT if expected_unanswerable else self.script.gold_answer(qfp)
        verdicts = []
        attempted = "(all agents abstained)"
        for answer in ctx["answers"]:
            if answer["abstained"]:
                verdict = "abstain_correct" if expected_unanswerable else "abstain_incorrect"
            elif expected_unanswerable:
                verdict = "incorrect"
            else:
                verdict = "correct" if answer["answer_text"] == gold else "incorrect"
            if not answer["abstained"]:
                attempted = answer["answer_text"]
            verdicts.append({"agent_id": int(answer["agent_id"]), "verdict": verdict})
        n_correct = sum(1 for v in verdicts if v["verdict"] in ("correct", "abstain_correct"))
        nontext = int(ctx.get("layout", {}).get("nontext_elements", 0))
        multimodal = self.script.is_multimodal(qfp, nontext)
        sources = self.script.true_sources(qfp, multimodal)
        if self.script.mismatch_injected(qfp):
            sources = self.script.perturbed_sources(qfp, sources)
        base = int(self.script.judge.get("difficulty_by_level", {"1": 2, "2": 3, "3": 5}).get(str(level), 3))
        difficulty = min(5, max(1, base + (1 if self.script.unit("diff", qfp) < 0.3 else 0)))
        declared = question.get("declared_type", "Reasoning")
        override_rate = float(self.script.judge.get("type_override_rate", 0.0))
        if override_rate > 0 and self.script.unit("type-override", qfp) < override_rate:
            question_type = self.script.pick([t for t in TAXONOMY if t != declared], "otype", qfp)
        else:
            question_type = declared
        return {
            "verdicts": verdicts,
            "correct_answer": gold,
            "question_type": question_type,
            "difficulty_rating": difficulty,
            "evidence_pages": self.script.true_pages(qfp, tuple(ctx["span"]), level),
            "evidence_sources": sources,
            "feedback": {
                "correct_answer": gold,
                "attempted_answer": attempted,
                "evaluation": f"{n_correct}/{len(verdicts)} swarm answers matched the reference.",
                "suggested_refinement": "Escalate complexity: require synthesis across additional pages or regions.",
            },
        }

    def _validate(self, ctx: dict) -> dict:
        question = ctx["question"]
        qfp = question_fingerprint(ctx["seed_scope"], question["question_text"])
        judged = ctx["judged"]
        first, last = ctx["span"]
        out_of_span = [p for p in judged["evidence_pages"] if not first <= int(p) <= last]
        if out_of_span:
            return {
                "verdict": "mismatch",
                "evidence_sources": judged["evidence_sources"],
                "evidence_pages": judged["evidence_pages"],
                "justification": f"Cited pages {out_of_span} fall outside the chunk span.",
            }
        recall = float(self.script.validator.get("detector_recall", 1.0))
        false_alarm = float(self.script.validator.get("false_alarm_rate", 0.0))
        injected = self.script.mismatch_injected(qfp)
        if injected and self.script.unit("detect", qfp) < recall:
            return {
                "verdict": "mismatch",
                "evidence_sources": judged["evidence_sources"],
                "evidence_pages": judged["evidence_pages"],
                "justification": "Cited source types do not match the answer's grounding.",
            }
        if not injected and false_alarm > 0 and self.script.unit("fa", qfp) < false_alarm:
            return {
                "verdict": "unverifiable",
                "evidence_sources": judged["evidence_sources"],
                "evidence_pages": judged["evidence_pages"],
                "justification": "Cross-check inconclusive.",
            }
        return {
            "verdict": "confirmed",
            "evidence_sources": judged["evidence_sources"],
            "evidence_pages": judged["evidence_pages"],
            "justification": "Answer grounding re-verified against the cited regions.",
        }
