"""Sweep the accuracy gate over one corpus and compare the datasets.

Runs the full pipeline once per threshold (use "none" to disable the
gate) against a synthetic fixture corpus, then prints the side-by-side
category table plus a terminal-difficulty summary. Tighter gates should
push the mean terminal level up and squeeze the easy-question share out.
"""

import argparse
import logging
import sys
from pathlib import Path

from qaforge.engine import EngineRun
from qaforge.fixtures import baseline_script, build_corpus
from qaforge.screening import load_manifest
from qaforge.sink import read_dataset, render_comparison, report

log = logging.getLogger("threshold_sweep")


def parse_threshold(raw: str):
    return None if raw.lower() in ("none", "off") else float(raw)


def run_config(args, threshold):
    return {
        "seed": args.seed,
        "gate": {
            "accuracy_threshold": threshold,
            "max_refinement_rounds": args.max_rounds,
            "swarm_size": args.swarm,
            "level_mix": {"1": 1, "2": 1, "3": 1},
            "chunk_parallelism": args.parallelism,
        },
        "chunking": {"chunk_size": 50, "overlap": 5},
        "screening": {"min_chars": 500, "allowed_licenses": ["CC-BY"]},
        "backend": {"kind": "simulator", "script": baseline_script(args.seed)},
        "sidecar": {"mode": "fixtures"},
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="sweeps/threshold", help="corpus and run output root")
    parser.add_argument("--thresholds", nargs="+", default=["none", "0.5", "0.25"])
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--docs", type=int, default=4)
    parser.add_argument("--pages", type=int, default=230)
    parser.add_argument("--swarm", type=int, default=5)
    parser.add_argument("--max-rounds", type=int, default=4, dest="max_rounds")
    parser.add_argument("--parallelism", type=int, default=4)
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(name)s %(message)s")

    workdir = Path(args.workdir)
    manifest = build_corpus(
        workdir / "corpus",
        [{"doc_id": f"doc-{i}", "pages": args.pages, "nontext_every": 3} for i in range(args.docs)],
    )
    entries = load_manifest(manifest)

    all_stats, labels = [], []
    for raw in args.thresholds:
        threshold = parse_threshold(raw)
        label = "no-gate" if threshold is None else f"gate-{threshold}"
        run = EngineRun(workdir / label, entries, run_config(args, threshold))
        dataset = run.execute()
        stats = report(read_dataset(dataset))
        log.info("%s: %d questions, mean terminal level %.3f", label, stats["total"], stats["mean_level"])
        all_stats.append(stats)
        labels.append(label)

    print(render_comparison(all_stats, labels))
    print("terminal difficulty:")
    for label, stats in zip(labels, all_stats):
        l1 = stats["levels"].get("1_factual", 0)
        print(
            f"  {label:<12} mean level {stats['mean_level']:.3f}   "
            f"level-1 share {100.0 * l1 / stats['total']:.1f}%"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
