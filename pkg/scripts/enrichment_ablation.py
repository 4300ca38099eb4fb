"""Flip layout enrichment off and on over a figure-heavy corpus.

With enrichment off the generator never sees non-text elements, so every
question grounds in prose. With it on, chunks carry their table/figure/
chart inventory and the multimodal share should jump accordingly. The
fixture corpus pins an exact share of non-text pages so the contrast is
controlled.
"""

import argparse
import logging
import sys
from pathlib import Path

from qaforge.engine import EngineRun
from qaforge.fixtures import baseline_script, build_corpus
from qaforge.screening import load_manifest
from qaforge.sink import read_dataset, report

log = logging.getLogger("enrichment_ablation")

NONTEXT_CLASSES = ("table", "figure", "chart")


def pinned_pages(page_count: int, share: float) -> dict:
    """Spread ceil(share * pages) non-text pages evenly through the doc."""
    target = round(share * page_count)
    period = max(1, round(page_count / max(1, target)))
    pins, page = {}, 1
    while len(pins) < target and page <= page_count:
        pins[page] = NONTEXT_CLASSES[page % len(NONTEXT_CLASSES)]
        page += period
    for page in range(1, page_count + 1):
        if len(pins) >= target:
            break
        pins.setdefault(page, NONTEXT_CLASSES[page % len(NONTEXT_CLASSES)])
    return pins


def run_config(args, enrichment):
    return {
        "seed": args.seed,
        "gate": {
            "accuracy_threshold": None,
            "max_refinement_rounds": 4,
            "swarm_size": 3,
            "level_mix": {"1": 1, "2": 1, "3": 1},
            "chunk_parallelism": args.parallelism,
            "enrichment": enrichment,
        },
        "chunking": {"chunk_size": 10, "overlap": 2},
        "screening": {"min_chars": 500, "allowed_licenses": ["CC-BY"]},
        "backend": {"kind": "simulator", "script": baseline_script(args.seed)},
        "sidecar": {"mode": "fixtures"},
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="sweeps/enrichment")
    parser.add_argument("--nontext-share", type=float, default=0.6, dest="nontext_share")
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--docs", type=int, default=3)
    parser.add_argument("--pages", type=int, default=200)
    parser.add_argument("--parallelism", type=int, default=4)
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(name)s %(message)s")

    workdir = Path(args.workdir)
    manifest = build_corpus(
        workdir / "corpus",
        [
            {
                "doc_id": f"doc-{i}",
                "pages": args.pages,
                "nontext_pages": pinned_pages(args.pages, args.nontext_share),
            }
            for i in range(args.docs)
        ],
    )
    entries = load_manifest(manifest)

    print(f"non-text page share {100.0 * args.nontext_share:.0f}%, seed {args.seed}")
    print(f"{'enrichment':<12} {'questions':>10} {'multimodal':>11} {'share':>7}")
    for enrichment in (False, True):
        label = "on" if enrichment else "off"
        run = EngineRun(workdir / f"enrich-{label}", entries, run_config(args, enrichment))
        dataset = run.execute()
        stats = report(read_dataset(dataset))
        mod = stats["modality"]
        log.info("enrichment %s: %d questions", label, stats["total"])
        print(
            f"{label:<12} {stats['total']:>10} {mod['multimodal']:>11} {mod['multimodal_pct']:>6.1f}%"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
