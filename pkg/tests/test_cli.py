"""Command-line surface: subcommands, exit codes, stdout contracts."""

import json

import pytest

from qaforge.cli import main
from qaforge.fixtures import baseline_script, build_corpus


@pytest.fixture
def workspace(tmp_path):
    manifest = build_corpus(
        tmp_path / "corpus",
        [
            {"doc_id": "doc-a", "pages": 60, "nontext_every": 3},
            {"doc_id": "doc-b", "pages": 30},
            {"doc_id": "doc-c", "pages": 10, "license": "proprietary"},
        ],
    )
    policy = {
        "gate": {
            "accuracy_threshold": 0.5,
            "max_refinement_rounds": 2,
            "swarm_size": 3,
            "level_mix": {"1": 1, "2": 1},
            "chunk_parallelism": 2,
        },
        "chunking": {"chunk_size": 25, "overlap": 5},
        "screening": {"min_chars": 500, "allowed_licenses": ["CC-BY"]},
    }
    backend = {
        "backend": {"kind": "simulator", "script": "script.json"},
        "sidecar": {"mode": "fixtures"},
    }
    (tmp_path / "policy.json").write_text(json.dumps(policy))
    (tmp_path / "backend.json").write_text(json.dumps(backend))
    (tmp_path / "script.json").write_text(json.dumps(baseline_script(seed=2)))
    return tmp_path, manifest


def run_args(ws, manifest, out="out"):
    return [
        "--manifest", str(manifest),
        "--policy", str(ws / "policy.json"),
        "--backend", str(ws / "backend.json"),
        "--out", str(ws / out),
        "--seed", "2",
    ]


def test_chunk_prints_spans(capsys):
    assert main(["chunk", "--pages", "120"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out == {"page_count": 120, "spans": [[1, 50], [46, 95], [91, 120]]}


def test_chunk_rejects_bad_policy(capsys):
    assert main(["chunk", "--pages", "10", "--overlap", "50"]) == 1
    assert "error" in capsys.readouterr().err


def test_screen_prints_funnel(workspace, capsys):
    ws, manifest = workspace
    code = main(
        [
            "screen",
            "--manifest", str(manifest),
            "--out", str(ws / "ledger.jsonl"),
            "--backend", str(ws / "backend.json"),
            "--min-chars", "500",
        ]
    )
    assert code == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["candidates"] == 3
    assert stats["accepted"] == 2
    assert stats["rejected_by_reason"] == {"license": 1}
    assert (ws / "ledger.jsonl").exists()


def test_run_then_report(workspace, capsys):
    ws, manifest = workspace
    assert main(["run", *run_args(ws, manifest)]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["run_id"].startswith("run-")
    assert result["questions"] > 0

    code = main(
        [
            "report",
            "--dataset", result["dataset"],
            "--funnel", str(ws / "out" / "screening.jsonl"),
            "--json", str(ws / "stats.json"),
        ]
    )
    assert code == 0
    text = capsys.readouterr().out
    assert f"{result['questions']} questions" in text
    assert "funnel: 3 candidates -> 2 accepted" in text
    stats = json.loads((ws / "stats.json").read_text())
    assert stats["total"] == result["questions"]


def test_run_resume_flag_continues(workspace, capsys):
    ws, manifest = workspace
    assert main(["run", *run_args(ws, manifest)]) == 0
    first = json.loads(capsys.readouterr().out)
    assert main(["run", "--resume", *run_args(ws, manifest)]) == 0
    second = json.loads(capsys.readouterr().out)
    assert second == first  # completed run resumes to the same dataset

    assert main(["resume", *run_args(ws, manifest)]) == 0
    third = json.loads(capsys.readouterr().out)
    assert third == first


def test_resume_without_checkpoint_is_a_config_error(workspace, capsys):
    ws, manifest = workspace
    assert main(["resume", *run_args(ws, manifest, out="never-ran")]) == 1
    assert "manifest" in capsys.readouterr().err


def test_report_compare_renders_columns(workspace, capsys):
    ws, manifest = workspace
    assert main(["run", *run_args(ws, manifest)]) == 0
    dataset = json.loads(capsys.readouterr().out)["dataset"]
    code = main(["report", "--dataset", dataset, "--compare", dataset])
    assert code == 0
    out = capsys.readouterr().out
    assert "mean level" in out
    assert "multimodal %" in out


def test_missing_files_exit_1(workspace, capsys):
    ws, manifest = workspace
    args = run_args(ws, manifest)
    assert main(["run", "--manifest", str(ws / "nope.jsonl"), *args[2:]]) == 1
    bad_policy = ws / "no-gate.json"
    bad_policy.write_text(json.dumps({"screening": {"min_chars": 1}}))
    assert main(["run", *args[:2], "--policy", str(bad_policy), *args[4:]]) == 1
    assert "gate" in capsys.readouterr().err
    not_json = ws / "broken.json"
    not_json.write_text("{nope")
    assert main(["run", *args[:2], "--policy", str(not_json), *args[4:]]) == 1


def test_invalid_policy_values_exit_1(workspace, capsys):
    ws, manifest = workspace
    policy = json.loads((ws / "policy.json").read_text())
    policy["gate"]["accuracy_threshold"] = 3.0
    bad = ws / "bad-policy.json"
    bad.write_text(json.dumps(policy))
    args = run_args(ws, manifest)
    assert main(["run", *args[:2], "--policy", str(bad), *args[4:]]) == 1
    assert not (ws / "out").exists()  # fail-fast: nothing written


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["chunk"])  # --pages is required
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 1


def test_runtime_problems_exit_2(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert main(["report", "--dataset", str(empty)]) == 2
    corrupt = tmp_path / "corrupt.jsonl"
    corrupt.write_text(json.dumps({"question": "q"}) + "\n")
    assert main(["report", "--dataset", str(corrupt)]) == 2
