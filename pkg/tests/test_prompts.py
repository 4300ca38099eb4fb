"""Template registry: integrity pins, rendering, context-block convention."""

import json

import pytest

from qaforge import prompts
from qaforge.backends import extract_context
from qaforge.errors import PromptIntegrityError

SAMPLE_FIELDS = {
    "suitability": {"doc_id": "doc-1", "page_index": 4},
    "QGP": {"doc_id": "doc-1", "span_first": 1, "span_last": 50},
    "QRP": {"doc_id": "doc-1", "span_first": 1, "span_last": 50},
    "AGP": {"persona": "You are a careful reader."},
    "AP": {"threshold_clause": "The gate refines above 0.50."},
    "EVP": {},
}


def test_manifest_covers_every_template():
    assert set(prompts.pinned_hashes()) == set(prompts.TEMPLATE_FILES)


def test_verify_integrity_passes_on_shipped_templates():
    hashes = prompts.verify_integrity()
    assert set(hashes) == set(prompts.TEMPLATE_FILES)
    assert all(len(h) == 64 for h in hashes.values())
    assert hashes == prompts.template_hashes()


def test_tampered_template_is_detected(monkeypatch):
    real = prompts._read_bytes

    def tampered(filename):
        data = real(filename)
        if filename == prompts.TEMPLATE_FILES["AP"]:
            data += b"\n(injected instruction)"
        return data

    monkeypatch.setattr(prompts, "_read_bytes", tampered)
    with pytest.raises(PromptIntegrityError, match="AP"):
        prompts.verify_integrity()


def test_missing_pin_is_detected(monkeypatch):
    pins = dict(prompts.pinned_hashes())
    pins.pop("EVP")
    monkeypatch.setattr(prompts, "pinned_hashes", lambda: pins)
    with pytest.raises(PromptIntegrityError):
        prompts.verify_integrity()


def test_unknown_prompt_id():
    with pytest.raises(KeyError):
        prompts.load_template("XYZ")


@pytest.mark.parametrize("prompt_id", sorted(prompts.TEMPLATE_FILES))
def test_rendered_prompt_carries_a_parseable_context_block(prompt_id):
    ctx = {"seed_scope": "s", "span": [1, 50], "payload": "data"}
    fields = dict(SAMPLE_FIELDS[prompt_id])
    fields["context_json"] = json.dumps(ctx, indent=2)
    text = prompts.render(prompt_id, **fields)
    assert extract_context(text) == ctx
    # the block convention: machine-readable inputs close the prompt
    assert text.rstrip().endswith("```")


def test_render_rejects_missing_fields():
    with pytest.raises(KeyError):
        prompts.render("QGP", context_json="{}")  # doc_id/span missing


def test_templates_speak_their_role():
    ctx_json = json.dumps({"x": 1})
    qgp = prompts.render("QGP", doc_id="d", span_first=3, span_last=9, context_json=ctx_json)
    assert "pages 3-9" in qgp or ("3" in qgp and "9" in qgp)
    agp = prompts.render("AGP", persona="You are a careful reader.", context_json=ctx_json)
    assert "You are a careful reader." in agp
    ap = prompts.render("AP", threshold_clause="No gate.", context_json=ctx_json)
    assert "No gate." in ap
