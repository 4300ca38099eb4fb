"""Role wrappers over the scripted backend: parsing, domain checks, repair."""

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qaforge.backends import BaseBackend, extract_context
from qaforge.backends.simulator import SimulatorBackend, SimScript
from qaforge.chunking import materialize_chunk
from qaforge.errors import (
    AuthError,
    GenerationFailedError,
    JudgeFailedError,
)
from qaforge.fixtures import baseline_script, build_fixture_pack
from qaforge.policy import GatePolicy
from qaforge.roles import (
    AGENT_PERSONAS,
    AgentVerdict,
    CandidateAnswer,
    Feedback,
    JudgeReport,
    QuestionDraft,
    QuestionLevel,
    RoleClient,
    derive_seed_scope,
)
from qaforge.sidecar import FixturePackHandle

POLICY = GatePolicy(swarm_size=5, level_mix=((1, 1), (2, 1), (3, 1)))


class RecordingSim(SimulatorBackend):
    """Delegating backend that keeps every request text for inspection."""

    def __init__(self, script, **kwargs):
        super().__init__(script, **kwargs)
        self.texts = []

    def complete(self, req):
        self.texts.append(req.text_context)
        return super().complete(req)


@pytest.fixture(scope="module")
def chunk(tmp_path_factory):
    root = tmp_path_factory.mktemp("roles-pack")
    uri = build_fixture_pack(root, "doc-r", 30, nontext_every=3)
    return materialize_chunk("doc-r", uri, 0, (1, 30), FixturePackHandle())


def client(script_overrides=None, backend_cls=SimulatorBackend, seed=11):
    script = SimScript.from_dict(baseline_script(seed=seed, **(script_overrides or {})))
    return RoleClient(backend_cls(script), run_seed=7)


def test_seed_scope_is_stable_and_distinct():
    a = derive_seed_scope(1, "doc", 0)
    assert a == derive_seed_scope(1, "doc", 0)
    assert len(a) == 16 and int(a, 16) >= 0
    assert a != derive_seed_scope(1, "doc", 1)
    assert a != derive_seed_scope(2, "doc", 0)


def test_generate_questions_honors_the_mix(chunk):
    drafts = client().generate_questions(chunk, POLICY)
    assert [int(d.level) for d in drafts] == [1, 2, 3]
    for draft in drafts:
        assert draft.round == 0
        assert draft.parent is None
        assert all(1 <= p <= 30 for p in draft.target_pages)
    assert drafts[2].expected_unanswerable


def test_generate_skips_zero_count_levels(chunk):
    policy = GatePolicy(level_mix=((1, 2), (2, 0), (3, 0)))
    drafts = client().generate_questions(chunk, policy)
    assert [int(d.level) for d in drafts] == [1, 1]


def test_refine_advances_round_and_links_parent(chunk):
    c = client()
    draft = c.generate_questions(chunk, POLICY)[0]
    feedback = Feedback(
        correct_answer="gold",
        attempted_answer="guess",
        evaluation="5/5 matched",
        suggested_refinement="require synthesis",
    )
    refined = c.refine_question(chunk, draft, feedback)
    assert refined.round == 1
    assert refined.parent is draft
    assert refined.level >= draft.level
    assert refined.lineage() == [draft, refined]
    again = c.refine_question(chunk, refined, feedback)
    assert again.round == 2
    assert again.lineage() == [draft, refined, again]


def test_refine_requires_a_suggestion(chunk):
    c = client()
    draft = c.generate_questions(chunk, POLICY)[0]
    feedback = Feedback("g", "a", "e", suggested_refinement="")
    with pytest.raises(ValueError):
        c.refine_question(chunk, draft, feedback)


def test_swarm_answers_cover_all_agents(chunk):
    c = client()
    draft = c.generate_questions(chunk, POLICY)[1]
    answers = c.swarm_answer(chunk, draft, 7)
    assert [a.agent_id for a in answers] == [1, 2, 3, 4, 5, 6, 7]
    with pytest.raises(ValueError):
        c.swarm_answer(chunk, draft, 0)


def test_swarm_personas_cycle(chunk):
    backend = RecordingSim(SimScript.from_dict(baseline_script(seed=11)))
    c = RoleClient(backend, run_seed=7)
    draft = c.generate_questions(chunk, POLICY)[0]
    backend.texts.clear()
    c.swarm_answer(chunk, draft, 6)
    assert AGENT_PERSONAS[0] in backend.texts[0]
    assert AGENT_PERSONAS[4] in backend.texts[4]
    assert AGENT_PERSONAS[0] in backend.texts[5]  # sixth agent wraps around
    sixth = extract_context(backend.texts[5])
    assert sixth["agent_id"] == 6 and sixth["swarm_size"] == 6


def test_failed_slots_become_abstentions(chunk, monkeypatch):
    monkeypatch.setattr("qaforge.backends.time.sleep", lambda _: None)
    c = client({"faults": {"answer_timeout_rate": 1.0}})
    draft = c.generate_questions(chunk, POLICY)[1]
    answers = c.swarm_answer(chunk, draft, 5)
    assert all(a.abstained for a in answers)
    assert all("slot failed" in a.logical_foundation for a in answers)


def test_judge_scores_exact_fraction(chunk):
    c = client()
    draft = c.generate_questions(chunk, POLICY)[1]
    answers = c.swarm_answer(chunk, draft, 5)
    report = c.judge(chunk, draft, answers, POLICY)
    n_correct = sum(1 for v in report.verdicts if v.counts_correct)
    assert report.accuracy_rate == n_correct / 5
    assert {v.agent_id for v in report.verdicts} == {1, 2, 3, 4, 5}
    assert set(report.validated_answers) == {
        a for a in answers if any(v.agent_id == a.agent_id and v.counts_correct for v in report.verdicts)
    }
    assert report.feedback.suggested_refinement
    with pytest.raises(ValueError):
        c.judge(chunk, draft, [], POLICY)


def test_judge_ctx_carries_threshold_clause(chunk):
    backend = RecordingSim(SimScript.from_dict(baseline_script(seed=11)))
    c = RoleClient(backend, run_seed=7)
    draft = c.generate_questions(chunk, POLICY)[0]
    answers = c.swarm_answer(chunk, draft, 3)
    backend.texts.clear()
    c.judge(chunk, draft, answers, GatePolicy(accuracy_threshold=0.25, swarm_size=3))
    assert "0.25" in backend.texts[0]
    backend.texts.clear()
    c.judge(chunk, draft, answers, GatePolicy(accuracy_threshold=None, swarm_size=3))
    assert "No accuracy gate" in backend.texts[0]


def test_validation_confirms_clean_evidence(chunk):
    c = client()
    draft = c.generate_questions(chunk, POLICY)[1]
    answers = c.swarm_answer(chunk, draft, 5)
    report = c.judge(chunk, draft, answers, POLICY)
    validation = c.validate_evidence(chunk, draft, report)
    assert validation.verdict == "confirmed"
    assert validation.evidence_sources == report.evidence_sources
    assert validation.to_dict()["verdict"] == "confirmed"


def test_validation_flags_injected_mismatches(chunk):
    c = client({"faults": {"evidence_mismatch_rate": 1.0}})
    draft = c.generate_questions(chunk, POLICY)[1]
    answers = c.swarm_answer(chunk, draft, 5)
    report = c.judge(chunk, draft, answers, POLICY)
    validation = c.validate_evidence(chunk, draft, report)
    assert validation.verdict == "mismatch"


def test_auth_errors_pass_through_unwrapped(chunk):
    class LockedBackend(BaseBackend):
        backend_kind = "locked"

        def complete(self, req):
            raise AuthError("revoked")

    c = RoleClient(LockedBackend(), run_seed=7)
    with pytest.raises(AuthError):
        c.generate_questions(chunk, POLICY)


class OffSpanOnce(SimulatorBackend):
    """First QGP reply cites out-of-span pages; the repair pass is honest."""

    def complete(self, req):
        raw = super().complete(req)
        if req.prompt_id == "QGP" and not req.is_repair:
            reply = json.loads(raw)
            reply["questions"][0]["target_pages"] = [999]
            return json.dumps(reply)
        return raw


class OffSpanAlways(SimulatorBackend):
    def complete(self, req):
        raw = super().complete(req)
        if req.prompt_id == "QGP":
            reply = json.loads(raw)
            reply["questions"][0]["target_pages"] = [999]
            return json.dumps(reply)
        return raw


def test_domain_repair_recovers_once(chunk):
    drafts = client(backend_cls=OffSpanOnce).generate_questions(chunk, POLICY)
    assert all(all(1 <= p <= 30 for p in d.target_pages) for d in drafts)


def test_domain_repair_gives_up_after_one_round(chunk):
    with pytest.raises(GenerationFailedError, match="999"):
        client(backend_cls=OffSpanAlways).generate_questions(chunk, POLICY)


class VerdictDropper(SimulatorBackend):
    def complete(self, req):
        raw = super().complete(req)
        if req.prompt_id == "AP":
            reply = json.loads(raw)
            reply["verdicts"] = reply["verdicts"][:-1]
            return json.dumps(reply)
        return raw


def test_incomplete_verdicts_fail_the_judge(chunk):
    c = client(backend_cls=VerdictDropper)
    draft = c.generate_questions(chunk, POLICY)[0]
    answers = c.swarm_answer(chunk, draft, 4)
    with pytest.raises(JudgeFailedError, match="agent_ids"):
        c.judge(chunk, draft, answers, POLICY)


def test_dead_generation_surfaces_as_generation_failure(chunk):
    c = client({"faults": {"dead_prompts": ["QGP"]}})
    with pytest.raises(GenerationFailedError):
        c.generate_questions(chunk, POLICY)


# -- domain objects --------------------------------------------------------------


def draft_at(level, round_num=0, parent=None, text="q?"):
    return QuestionDraft(
        question_text=text,
        cognitive_premise="premise",
        level=level,
        declared_type="Reasoning",
        target_pages=(1,),
        round=round_num,
        parent=parent,
    )


def test_draft_invariants():
    base = draft_at(QuestionLevel.FACTUAL)
    refined = draft_at(QuestionLevel.INFERENTIAL, round_num=1, parent=base, text="harder?")
    assert refined.lineage() == [base, refined]
    with pytest.raises(ValueError):
        draft_at(QuestionLevel.FACTUAL, round_num=2, parent=base)  # round must step by 1
    with pytest.raises(ValueError):
        draft_at(QuestionLevel.FACTUAL, round_num=1, parent=refined)  # level dropped
    with pytest.raises(ValueError):
        QuestionDraft("q", "p", 1, "Freestyle", (1,))
    with pytest.raises(ValueError):
        QuestionDraft("", "p", 1, "Reasoning", (1,))


@given(level=st.sampled_from([1, 2, 3]))
def test_draft_level_coercion(level):
    draft = draft_at(level)
    assert isinstance(draft.level, QuestionLevel)
    assert draft.expected_unanswerable == (level == 3)
    assert QuestionLevel.from_wire(draft.level.wire_name) == draft.level


def test_level_wire_names():
    assert QuestionLevel.FACTUAL.wire_name == "1_factual"
    assert QuestionLevel.INFERENTIAL.wire_name == "2_inferential"
    assert QuestionLevel.CONTEXTUAL_AMBIGUITY.wire_name == "3_contextual_ambiguity"
    with pytest.raises(ValueError):
        QuestionLevel.from_wire("4_hardest")


def verdicts_of(*kinds):
    return tuple(AgentVerdict(agent_id=i + 1, verdict=k) for i, k in enumerate(kinds))


def test_judge_report_accuracy_must_match_verdicts():
    kwargs = dict(
        validated_answers=(),
        correct_answer="gold",
        question_type="Reasoning",
        difficulty_rating=3,
        evidence_pages=(1,),
        evidence_sources=("text",),
        feedback=Feedback("g", "a", "e", "s"),
    )
    report = JudgeReport(
        verdicts=verdicts_of("correct", "incorrect", "abstain_correct", "abstain_incorrect"),
        accuracy_rate=0.5,
        **kwargs,
    )
    assert report.accuracy_rate == 0.5
    with pytest.raises(ValueError):
        JudgeReport(verdicts=verdicts_of("correct", "incorrect"), accuracy_rate=0.4, **kwargs)
    with pytest.raises(ValueError):
        JudgeReport(verdicts=(), accuracy_rate=0.0, **kwargs)


def test_verdict_vocabulary():
    assert AgentVerdict(1, "correct").counts_correct
    assert AgentVerdict(1, "abstain_correct").counts_correct
    assert not AgentVerdict(1, "incorrect").counts_correct
    assert not AgentVerdict(1, "abstain_incorrect").counts_correct
    with pytest.raises(ValueError):
        AgentVerdict(1, "meh")
    with pytest.raises(ValueError):
        CandidateAnswer(0, "a", "f", (), False)


@given(n=st.integers(1, 9), data=st.data())
def test_accuracy_rate_is_always_a_clean_fraction(chunk, n, data):
    kinds = data.draw(
        st.lists(
            st.sampled_from(["correct", "incorrect", "abstain_correct", "abstain_incorrect"]),
            min_size=n,
            max_size=n,
        )
    )
    verdicts = verdicts_of(*kinds)
    k = sum(1 for v in verdicts if v.counts_correct)
    report = JudgeReport(
        verdicts=verdicts,
        validated_answers=(),
        correct_answer="gold",
        question_type="Reasoning",
        difficulty_rating=3,
        evidence_pages=(1,),
        evidence_sources=("text",),
        accuracy_rate=k / n,
        feedback=Feedback("g", "a", "e", "s"),
    )
    assert report.accuracy_rate * n == k
