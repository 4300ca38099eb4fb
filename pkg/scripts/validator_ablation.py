"""Measure how much injected evidence mismatch leaks past the validator.

Seeds a known fraction of questions with wrong evidence-source labels,
then runs the pipeline at several detector-recall settings ("off"
disables validation entirely). Ground truth for each emitted question is
recomputed from the simulator script, so the leaked share is exact, not
estimated from verdicts.
"""

import argparse
import logging
import sys
from pathlib import Path

from qaforge.backends.simulator import SimScript, question_fingerprint
from qaforge.engine import EngineRun
from qaforge.fixtures import baseline_script, build_corpus
from qaforge.roles import derive_seed_scope
from qaforge.screening import load_manifest
from qaforge.sink import read_dataset

log = logging.getLogger("validator_ablation")


def run_config(args, script, validate):
    return {
        "seed": args.seed,
        "gate": {
            "accuracy_threshold": None,
            "max_refinement_rounds": 4,
            "swarm_size": 3,
            "level_mix": {"1": 1, "2": 1},
            "chunk_parallelism": args.parallelism,
            "validate_evidence": validate,
        },
        "chunking": {"chunk_size": 10, "overlap": 0},
        "screening": {"min_chars": 500, "allowed_licenses": ["CC-BY"]},
        "backend": {"kind": "simulator", "script": script},
        "sidecar": {"mode": "fixtures"},
    }


def leaked_share(dataset_path, seed, script_dict):
    world = SimScript.from_dict(script_dict)
    rows = read_dataset(dataset_path)
    injected = 0
    for t in rows:
        scope = derive_seed_scope(seed, t.metadata["doc_id"], t.metadata["chunk_index"])
        if world.mismatch_injected(question_fingerprint(scope, t.question)):
            injected += 1
    return injected, len(rows)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="sweeps/validator")
    parser.add_argument("--recalls", nargs="+", default=["off", "0.7", "1.0"])
    parser.add_argument("--injection-rate", type=float, default=0.14, dest="injection_rate")
    parser.add_argument("--seed", type=int, default=14)
    parser.add_argument("--docs", type=int, default=6)
    parser.add_argument("--pages", type=int, default=800)
    parser.add_argument("--parallelism", type=int, default=4)
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(name)s %(message)s")

    workdir = Path(args.workdir)
    manifest = build_corpus(
        workdir / "corpus", [{"doc_id": f"doc-{i}", "pages": args.pages} for i in range(args.docs)]
    )
    entries = load_manifest(manifest)

    print(f"injection rate {100.0 * args.injection_rate:.1f}%, seed {args.seed}")
    print(f"{'detector':<12} {'emitted':>8} {'leaked':>8} {'leaked %':>9}")
    for raw in args.recalls:
        validate = raw.lower() not in ("off", "none")
        recall = 1.0 if not validate else float(raw)
        label = "off" if not validate else f"recall-{recall}"
        script = baseline_script(
            args.seed,
            validator={"detector_recall": recall},
            faults={"evidence_mismatch_rate": args.injection_rate},
        )
        run = EngineRun(workdir / label, entries, run_config(args, script, validate))
        dataset = run.execute()
        injected, total = leaked_share(dataset, args.seed, script)
        log.info("%s: %d emitted, %d with mismatched evidence", label, total, injected)
        print(f"{label:<12} {total:>8} {injected:>8} {100.0 * injected / total:>8.2f}%")
    return 0


if __name__ == "__main__":
    sys.exit(main())
