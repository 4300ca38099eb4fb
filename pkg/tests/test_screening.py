"""Corpus screening rules, ledger, and funnel arithmetic."""

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qaforge.backends import BaseBackend, RequestBudget, load_backend
from qaforge.errors import AuthError, EmptyDocumentError, RateLimitedError
from qaforge.fixtures import baseline_script, build_corpus, build_fixture_pack
from qaforge.screening import (
    REASON_BACKEND,
    REASON_EMPTY,
    REASON_LICENSE,
    REASON_MIN_CHARS,
    REASON_SUITABILITY,
    DocumentRecord,
    ScreeningConfig,
    SourceManifestEntry,
    _suitability_fraction_met,
    check_min_content,
    funnel,
    load_manifest,
    read_ledger,
    screen_corpus,
    screen_document,
    write_ledger,
)
from qaforge.sidecar import FixturePackHandle

CFG = ScreeningConfig(min_chars=500, allowed_licenses=frozenset({"CC-BY", "CC0"}))


def entry_for(doc_id: str, uri: str, license_tag: str = "CC-BY") -> SourceManifestEntry:
    return SourceManifestEntry(doc_id=doc_id, uri=uri, license_tag=license_tag, kind="native_pdf")


def sim(**overrides):
    return load_backend({"kind": "simulator", "script": baseline_script(seed=1, **overrides)})


@pytest.fixture
def ten_pager(tmp_path):
    uri = build_fixture_pack(tmp_path, "doc-10", 10)
    return entry_for("doc-10", uri)


def overrides_backend(doc_id: str, passes: list[int]):
    return sim(screener={"default_pass": False, "page_overrides": {doc_id: passes}})


def test_boundary_eight_of_ten_accepts(ten_pager):
    backend = overrides_backend("doc-10", [1, 1, 1, 1, 1, 1, 1, 1, 0, 0])
    record = screen_document(ten_pager, backend, CFG, FixturePackHandle())
    assert record.accepted
    assert record.pass_fraction == 0.8
    assert record.reason is None


def test_boundary_seven_of_ten_rejects(ten_pager):
    backend = overrides_backend("doc-10", [1, 1, 1, 1, 1, 1, 1, 0, 0, 0])
    record = screen_document(ten_pager, backend, CFG, FixturePackHandle())
    assert not record.accepted
    assert record.reason == REASON_SUITABILITY
    assert record.pass_fraction == 0.7


@given(passes=st.integers(0, 40), extra=st.integers(0, 40))
def test_fraction_boundary_is_exact(passes, extra):
    page_count = passes + extra
    if page_count == 0:
        return
    cfg = ScreeningConfig(min_chars=1, allowed_licenses=frozenset())
    # 0.8 must behave as the rational 4/5, never as its float neighborhood
    assert _suitability_fraction_met(passes, page_count, cfg) == (5 * passes >= 4 * page_count)


def test_rule_order_first_failure_wins(tmp_path):
    # fails license AND min_chars; license is checked first
    uri = build_fixture_pack(tmp_path, "doc-thin", 3, chars_per_page=10)
    entry = entry_for("doc-thin", uri, license_tag="proprietary")
    record = screen_document(entry, sim(), CFG, FixturePackHandle())
    assert record.reason == REASON_LICENSE
    assert not record.license_ok
    assert record.page_suitability == (False, False, False)  # unjudged, conservative


def test_min_chars_rejection(tmp_path):
    uri = build_fixture_pack(tmp_path, "doc-thin", 3, chars_per_page=100)
    record = screen_document(entry_for("doc-thin", uri), sim(), CFG, FixturePackHandle())
    assert record.reason == REASON_MIN_CHARS
    assert record.char_total == 300


def test_min_chars_boundary_is_inclusive(tmp_path):
    uri = build_fixture_pack(tmp_path, "doc-edge", 5, chars_per_page=100)
    record = screen_document(entry_for("doc-edge", uri), sim(), CFG, FixturePackHandle())
    assert record.accepted  # 500 chars meets min_chars=500


def test_empty_document_rejected(tmp_path):
    uri = build_fixture_pack(tmp_path, "doc-empty", 0)
    record = screen_document(entry_for("doc-empty", uri), sim(), CFG, FixturePackHandle())
    assert record.reason == REASON_EMPTY
    assert record.page_count == 0
    with pytest.raises(EmptyDocumentError):
        check_min_content(record, CFG)


class DownBackend(BaseBackend):
    backend_kind = "down"

    def complete(self, req):
        raise RateLimitedError("still down")


class LockedBackend(BaseBackend):
    backend_kind = "locked"

    def complete(self, req):
        raise AuthError("credential revoked")


class GarbageBackend(BaseBackend):
    backend_kind = "garbage"

    def complete(self, req):
        return "<<not json>>"


def test_backend_outage_rejects_conservatively(ten_pager, monkeypatch):
    monkeypatch.setattr("qaforge.backends.time.sleep", lambda _: None)
    backend = DownBackend(budget=RequestBudget(retries=0))
    record = screen_document(ten_pager, backend, CFG, FixturePackHandle())
    assert record.reason == REASON_BACKEND
    assert not record.accepted


def test_auth_failure_propagates(ten_pager):
    with pytest.raises(AuthError):
        screen_document(ten_pager, LockedBackend(), CFG, FixturePackHandle())


def test_unparseable_pages_fail_individually(ten_pager):
    record = screen_document(ten_pager, GarbageBackend(), CFG, FixturePackHandle())
    assert record.reason == REASON_SUITABILITY
    assert record.page_suitability == (False,) * 10


def test_record_invariants():
    with pytest.raises(ValueError):
        DocumentRecord("d", 2, (10,), True, (True, True), "accepted")
    with pytest.raises(ValueError):
        DocumentRecord("d", 1, (10,), True, (True,), "rejected")  # reason required
    with pytest.raises(ValueError):
        DocumentRecord("d", 1, (10,), True, (True,), "maybe")


def test_screening_config_validation():
    with pytest.raises(ValueError):
        ScreeningConfig(min_chars=0, allowed_licenses=frozenset())
    with pytest.raises(ValueError):
        ScreeningConfig(min_chars=10, allowed_licenses=frozenset(), suitability_fraction=1.2)
    with pytest.raises(ValueError):
        ScreeningConfig.from_dict({"allowed_licenses": ["CC-BY"]})  # min_chars is mandatory
    with pytest.raises(ValueError):
        ScreeningConfig.from_dict({"min_chars": 5, "min_words": 2})
    cfg = ScreeningConfig.from_dict({"min_chars": 5})
    assert cfg.suitability_fraction == 0.80
    assert ScreeningConfig.from_dict(cfg.to_dict()) == cfg


def test_manifest_loading_rejects_duplicates(tmp_path):
    path = tmp_path / "m.jsonl"
    line = json.dumps({"doc_id": "a", "uri": "u", "license_tag": "CC0", "kind": "scanned"})
    path.write_text(line + "\n\n" + line + "\n")
    with pytest.raises(ValueError, match="duplicate"):
        load_manifest(path)


def test_manifest_entry_validation():
    with pytest.raises(ValueError):
        SourceManifestEntry(doc_id="a", uri="u", license_tag="CC0", kind="parchment")
    with pytest.raises(ValueError):
        SourceManifestEntry(doc_id="", uri="u", license_tag="CC0", kind="scanned")


def corpus(tmp_path) -> list[SourceManifestEntry]:
    manifest = build_corpus(
        tmp_path / "corpus",
        [
            {"doc_id": "doc-a", "pages": 12},
            {"doc_id": "doc-b", "pages": 4, "chars": 20},
            {"doc_id": "doc-c", "pages": 6, "license": "proprietary"},
            {"doc_id": "doc-d", "pages": 8},
        ],
    )
    return load_manifest(manifest)


def test_screen_corpus_ledger_order_and_reuse(tmp_path):
    entries = corpus(tmp_path)
    ledger_path = tmp_path / "screening.jsonl"
    records = screen_corpus(entries, sim(), CFG, FixturePackHandle(), ledger_path=ledger_path, parallelism=4)
    assert [r.doc_id for r in records] == ["doc-a", "doc-b", "doc-c", "doc-d"]
    rows = read_ledger(ledger_path)
    assert [row["doc_id"] for row in rows] == ["doc-a", "doc-b", "doc-c", "doc-d"]
    assert [row["verdict"] for row in rows] == ["accepted", "rejected", "rejected", "accepted"]
    assert rows[0]["page_count"] == 12
    # serial screening produces the identical ledger
    serial = tmp_path / "serial.jsonl"
    screen_corpus(entries, sim(), CFG, FixturePackHandle(), ledger_path=serial, parallelism=1)
    assert serial.read_bytes() == ledger_path.read_bytes()


def test_funnel_statistics(tmp_path):
    entries = corpus(tmp_path)
    records = screen_corpus(entries, sim(), CFG, FixturePackHandle())
    stats = funnel([r.ledger_line() for r in records])
    assert stats["candidates"] == 4
    assert stats["accepted"] == 2
    assert stats["acceptance_rate"] == 0.5
    assert stats["rejected_by_reason"] == {REASON_LICENSE: 1, REASON_MIN_CHARS: 1}


def test_funnel_on_empty_ledger():
    assert funnel([]) == {
        "candidates": 0,
        "accepted": 0,
        "acceptance_rate": 0.0,
        "rejected_by_reason": {},
    }


def test_ledger_round_trip(tmp_path):
    record = DocumentRecord("d", 2, (10, 20), True, (True, False), "rejected", REASON_SUITABILITY)
    path = tmp_path / "ledger.jsonl"
    write_ledger([record], path)
    rows = read_ledger(path)
    assert rows == [record.ledger_line()]
    assert rows[0]["pass_fraction"] == 0.5
    assert rows[0]["char_total"] == 30
