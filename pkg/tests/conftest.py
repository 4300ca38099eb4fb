"""Shared helpers: tiny fixture corpora and runnable engine configs."""

import pytest

from qaforge.fixtures import baseline_script, build_corpus
from qaforge.screening import load_manifest


def engine_config(
    seed=7,
    threshold=0.5,
    max_rounds=4,
    swarm=5,
    level_mix=None,
    parallelism=1,
    chunk_size=50,
    overlap=5,
    min_chars=500,
    script=None,
    enrichment=True,
    validate_evidence=True,
):
    return {
        "seed": seed,
        "gate": {
            "accuracy_threshold": threshold,
            "max_refinement_rounds": max_rounds,
            "swarm_size": swarm,
            "level_mix": level_mix or {"1": 1, "2": 1, "3": 1},
            "chunk_parallelism": parallelism,
            "enrichment": enrichment,
            "validate_evidence": validate_evidence,
        },
        "chunking": {"chunk_size": chunk_size, "overlap": overlap},
        "screening": {"min_chars": min_chars, "allowed_licenses": ["CC-BY", "CC0"]},
        "backend": {"kind": "simulator", "script": script or baseline_script(seed=seed)},
        "sidecar": {"mode": "fixtures"},
    }


@pytest.fixture
def small_corpus(tmp_path):
    manifest = build_corpus(
        tmp_path / "corpus",
        [
            {"doc_id": "doc-a", "pages": 120, "nontext_every": 3},
            {"doc_id": "doc-b", "pages": 55, "nontext_every": 4},
        ],
    )
    return load_manifest(manifest)
