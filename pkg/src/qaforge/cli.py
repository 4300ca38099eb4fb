"""Command-line entry: screen / chunk / run / resume / report.

Exit codes: 0 success, 1 config or usage problems, 2 runtime failures.
Diagnostics go to stderr; machine-readable data goes to stdout. Config
lives in files; the only secret (the remote credential) is read from an
environment variable and never crosses argv.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backends import load_backend
from .chunking import ChunkPolicy, chunk_document
from .engine import EngineRun
from .errors import ConfigDriftError, InvalidPolicyError, QaforgeError
from .policy import GatePolicy
from .screening import ScreeningConfig, funnel, load_manifest, read_ledger, screen_corpus
from .sidecar import open_sidecar
from .sink import read_dataset, render_comparison, render_report, report

log = logging.getLogger("qaforge.cli")


class _Parser(argparse.ArgumentParser):
    # usage problems are validation problems: exit 1, not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_json(path: str, what: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise InvalidPolicyError(f"{what} file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidPolicyError(f"{what} file {path} is not valid JSON: {exc}") from exc


def _resolve_script_path(backend_file: str, config: dict) -> dict:
    backend = config.get("backend", {})
    script = backend.get("script")
    if isinstance(script, str) and not Path(script).is_absolute():
        backend = dict(backend)
        backend["script"] = str(Path(backend_file).parent / script)
        config = dict(config)
        config["backend"] = backend
    return config


def _build_run_config(args) -> tuple[list, dict]:
    """Fail-fast load: every referenced file must exist and parse."""
    entries = load_manifest(args.manifest)
    policy_cfg = _load_json(args.policy, "policy")
    if "gate" not in policy_cfg:
        raise InvalidPolicyError("policy file must carry a 'gate' section")
    backend_cfg = _resolve_script_path(args.backend, _load_json(args.backend, "backend"))
    if "backend" not in backend_cfg:
        raise InvalidPolicyError("backend file must carry a 'backend' section")
    if "screening" not in policy_cfg:
        raise InvalidPolicyError("policy file must carry a 'screening' section")
    config = {
        "seed": args.seed,
        "gate": policy_cfg["gate"],
        "chunking": policy_cfg.get("chunking", {}),
        "screening": policy_cfg["screening"],
        "backend": backend_cfg["backend"],
        "sidecar": backend_cfg.get("sidecar", {"mode": "fixtures"}),
    }
    # validate everything before any output directory is touched
    GatePolicy.from_dict(config["gate"])
    ChunkPolicy(**config["chunking"])
    ScreeningConfig.from_dict(config["screening"])
    load_backend(config["backend"])  # constructs and validates the script too
    return entries, config


def _cmd_screen(args) -> int:
    entries = load_manifest(args.manifest)
    backend_cfg = _resolve_script_path(args.backend, _load_json(args.backend, "backend"))
    backend = load_backend(backend_cfg["backend"])
    sidecar = open_sidecar(backend_cfg.get("sidecar", {"mode": "fixtures"}))
    cfg = ScreeningConfig(
        min_chars=args.min_chars,
        allowed_licenses=frozenset(args.licenses),
        suitability_fraction=args.suitability,
    )
    try:
        records = screen_corpus(
            entries, backend, cfg, sidecar, ledger_path=args.out, parallelism=args.parallelism
        )
    finally:
        sidecar.close()
    stats = funnel([r.ledger_line() for r in records])
    log.info(
        "screened %d documents: %d accepted (%.1f%%)",
        stats["candidates"],
        stats["accepted"],
        100.0 * stats["acceptance_rate"],
    )
    print(json.dumps(stats, indent=2, sort_keys=True))
    return 0


def _cmd_chunk(args) -> int:
    policy = ChunkPolicy(chunk_size=args.chunk_size, overlap=args.overlap)
    spans = chunk_document(args.pages, policy)
    print(json.dumps({"page_count": args.pages, "spans": [list(s) for s in spans]}))
    return 0


def _run_common(args, resume: bool) -> int:
    entries, config = _build_run_config(args)
    run = EngineRun(args.out, entries, config, resume=resume)
    dataset = run.execute()
    questions = sum(1 for line in open(dataset) if line.strip())
    print(
        json.dumps(
            {"run_id": run.manifest.run_id, "dataset": str(dataset), "questions": questions}
        )
    )
    return 0


def _cmd_run(args) -> int:
    return _run_common(args, resume=bool(args.resume))


def _cmd_resume(args) -> int:
    return _run_common(args, resume=True)


def _cmd_report(args) -> int:
    tuples = read_dataset(args.dataset)
    fn = funnel(read_ledger(args.funnel)) if args.funnel else None
    stats = report(tuples, funnel=fn)
    if args.compare:
        all_stats = [stats] + [report(read_dataset(p)) for p in args.compare]
        labels = [Path(args.dataset).stem] + [Path(p).stem for p in args.compare]
        print(render_comparison(all_stats, labels))
    else:
        print(render_report(stats, label=Path(args.dataset).stem))
    if args.json:
        Path(args.json).write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    return 0


def _add_run_args(p: argparse.ArgumentParser):
    p.add_argument("--manifest", required=True, help="corpus manifest (one source per line)")
    p.add_argument("--policy", required=True, help="policy file (gate/chunking/screening)")
    p.add_argument("--backend", required=True, help="backend file (backend/sidecar sections)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qaforge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("screen", help="screen a corpus manifest into a ledger")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="ledger output path")
    p.add_argument("--backend", required=True)
    p.add_argument("--min-chars", type=int, required=True, dest="min_chars")
    p.add_argument("--suitability", type=float, default=0.80)
    p.add_argument("--licenses", nargs="+", default=["CC-BY", "CC0"])
    p.add_argument("--parallelism", type=int, default=4)
    p.set_defaults(fn=_cmd_screen)

    p = sub.add_parser("chunk", help="preview chunk spans for a page count")
    p.add_argument("--pages", type=int, required=True)
    p.add_argument("--chunk-size", type=int, default=50, dest="chunk_size")
    p.add_argument("--overlap", type=int, default=5)
    p.set_defaults(fn=_cmd_chunk)

    p = sub.add_parser("run", help="run the full generation pipeline")
    _add_run_args(p)
    p.add_argument("--resume", action="store_true", help="continue from the out dir's checkpoint")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("resume", help="resume a checkpointed run")
    _add_run_args(p)
    p.set_defaults(fn=_cmd_resume)

    p = sub.add_parser("report", help="render statistics for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--compare", nargs="*", default=[], help="additional datasets, side by side")
    p.add_argument("--funnel", help="screening ledger to fold into the report")
    p.add_argument("--json", help="also write the stats bundle to this path")
    p.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.fn(args)
    except (InvalidPolicyError, ConfigDriftError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except QaforgeError as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
