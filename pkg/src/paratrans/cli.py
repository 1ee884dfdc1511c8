"""Command-line entry point: ``paratrans {validate,translate,bench,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

from . import bench, fixtures
from .config import Config, load_config
from .domain import ConfigError, Direction, LlmProfile, Status, TranslationTask
from .llm import LlmError
from .loop import run_pipeline
from .toolchain import BaselineFailed, ToolchainMissing, validate_baseline

logger = logging.getLogger("paratrans")

EXIT_OK = 0
EXIT_BASELINE = 1
EXIT_CONFIG = 2
EXIT_COMPILE_BUDGET = 3
EXIT_MANIFEST = 4
EXIT_RESULTS = 5
EXIT_EXEC_BUDGET = 6
EXIT_EXTRACTION = 7
EXIT_CONTEXT = 8
EXIT_BACKEND = 9
EXIT_INTERRUPTED = 130

STATUS_EXIT = {
    Status.SUCCESS: EXIT_OK,
    Status.BASELINE_FAILED: EXIT_BASELINE,
    Status.COMPILE_BUDGET_EXCEEDED: EXIT_COMPILE_BUDGET,
    Status.EXEC_BUDGET_EXCEEDED: EXIT_EXEC_BUDGET,
    Status.EXTRACTION_FAILED: EXIT_EXTRACTION,
    Status.CONTEXT_OVERFLOW: EXIT_CONTEXT,
}

EXIT_TABLE = """\
exit codes:
  0    success (translate: status Success; validate: all baselines pass)
  1    BaselineFailed: original source or reference target did not build/run
  2    configuration error (bad config, unknown llm/app/language, missing compiler)
  3    CompileBudgetExceeded
  4    manifest error
  5    missing or corrupt result rows (report)
  6    ExecBudgetExceeded
  7    ExtractionFailed
  8    ContextOverflow
  9    model backend error (transport failure, exhausted script)
  130  interrupted
"""

# Baseline checks never talk to a model, but a task needs a profile.
_NO_LLM = LlmProfile(name="none", model_id="none", context_length=2, max_response_tokens=1)


def _manifest(config: Config, path: Optional[str]) -> bench.SuiteManifest:
    mpath = Path(path) if path else config.manifest
    if mpath is None:
        raise bench.ManifestError("no manifest given (use --manifest or set 'manifest' in the config)")
    return bench.load_suite(mpath)


def _directions_for(config: Config, manifest: bench.SuiteManifest, given: Optional[Sequence[str]]) -> list[Direction]:
    if given:
        dirs = [Direction.parse(d) for d in given]
    else:
        dirs = [d for d in config.prompts.directions
                if d.source in config.languages and d.target in config.languages
                and all(d.source in e.sources and d.target in e.sources for e in manifest.entries)]
    for d in dirs:
        config.language(d.source)
        config.language(d.target)
    if not dirs:
        raise ConfigError("no usable translation direction")
    return dirs


def cmd_validate(args) -> int:
    config = load_config(args.config)
    manifest = _manifest(config, args.manifest)
    entries = [manifest.entry(args.app)] if args.app else list(manifest.entries)
    failed = 0
    with tempfile.TemporaryDirectory(prefix="paratrans-validate-") as tmp:
        root = Path(args.out) if args.out else Path(tmp)
        for entry in entries:
            if args.direction:
                pairs = [Direction.parse(d) for d in args.direction]
            else:
                langs = [lang for lang in config.languages if lang in entry.sources]
                if len(langs) < 2:
                    raise ConfigError(f"{entry.app_name}: fewer than two configured languages")
                pairs = [Direction(langs[0], other) for other in langs[1:]]
            for d in pairs:
                task = TranslationTask(
                    app_name=entry.app_name,
                    source=config.language(d.source),
                    target=config.language(d.target),
                    source_code=entry.code(d.source),
                    llm=_NO_LLM,
                    runtime_args=entry.runtime_args,
                    reference_target_code=entry.code(d.target),
                )
                try:
                    validate_baseline(task, root / entry.app_name / f"{d.source}_{d.target}",
                                      config.loop.compile_timeout_s, config.loop.exec_timeout_s, n_runtime_runs=1)
                except BaselineFailed as exc:
                    failed += 1
                    print(f"FAIL {entry.app_name} [{d}] {exc.stage}")
                    print((exc.result.stderr or exc.result.stdout).rstrip())
                    continue
                print(f"PASS {entry.app_name} [{d}]")
    return EXIT_BASELINE if failed else EXIT_OK


def cmd_translate(args) -> int:
    config = load_config(args.config).with_loop(max_self_corr=args.max_self_corr)
    manifest = _manifest(config, args.manifest)
    entry = manifest.entry(args.app)
    direction = Direction.parse(args.direction)
    profile = config.llm(args.llm)
    task = TranslationTask(
        app_name=entry.app_name,
        source=config.language(direction.source),
        target=config.language(direction.target),
        source_code=entry.code(direction.source),
        llm=profile,
        runtime_args=entry.runtime_args,
        reference_target_code=entry.code(direction.target) if direction.target in entry.sources else None,
    )
    record = run_pipeline(task, config.loop, Path(args.out), prompts=config.prompts)
    print(f"status: {record.status.value}")
    print(f"self_corr: {record.self_corr}")
    if record.metrics and record.metrics.ratio is not None:
        m = record.metrics
        print(f"runtime_s: {m.runtime_generated_s:.4f}  ratio: {m.ratio:.4f}  "
              f"sim_t: {m.sim_t:.2f}  sim_l: {m.sim_l:.2f}  output: {m.output_verdict.value}")
    if record.detail:
        print(record.detail)
    return STATUS_EXIT[record.status]


def _summary_kw(args) -> dict:
    return dict(runtime_threshold=args.runtime_threshold, sim_threshold=args.sim_threshold,
                sim_metric=args.sim_metric)


def cmd_bench(args) -> int:
    out = Path(args.out)
    if args.fixtures:
        rows = [f.row for f in fixtures.load_reference_results()]
        bench.RowStore(out).replace(rows)
    else:
        config = load_config(args.config).with_loop(max_self_corr=args.max_self_corr)
        manifest = _manifest(config, args.manifest)
        llms = args.llm or list(config.llms)
        if not llms:
            raise ConfigError("no llm profiles configured")
        directions = _directions_for(config, manifest, args.direction)
        rows = bench.run_matrix(manifest, config, llms, directions, out, workers=args.workers)
        store = bench.RowStore(out)
        wanted = {r.key for r in rows}
        store.replace(rows + [r for r in store.load() if r.key not in wanted])
    bench.write_reports(rows, out, **_summary_kw(args))
    sys.stdout.write(bench.render_summary(rows, **_summary_kw(args)) if rows else "no rows\n")
    return EXIT_OK


def cmd_report(args) -> int:
    store = bench.RowStore(args.results)
    try:
        rows = store.load()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESULTS
    if not rows:
        print(f"error: no result rows in {args.results}", file=sys.stderr)
        return EXIT_RESULTS
    kw = _summary_kw(args)
    summary = bench.render_summary(rows, **kw)
    bench.write_reports(rows, args.results, **kw)
    sys.stderr.write(summary)
    sys.stdout.write(bench.render_report(rows, args.format))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paratrans",
        description="Translate parallel programs between languages with a self-correcting LLM loop.",
        epilog=EXIT_TABLE,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, manifest=True):
        p.add_argument("--config", required=True, help="YAML config file")
        if manifest:
            p.add_argument("--manifest", help="suite manifest (defaults to the config's 'manifest')")

    def thresholds(p):
        p.add_argument("--runtime-threshold", type=float, default=bench.DEFAULT_RUNTIME_THRESHOLD,
                       help="minimum ratio counted as 'within runtime' (default %(default)s)")
        p.add_argument("--sim-threshold", type=float, default=bench.DEFAULT_SIM_THRESHOLD)
        p.add_argument("--sim-metric", choices=bench.SIM_METRICS, default="sim_t")

    p = sub.add_parser("validate", help="build and run the original codes (no model calls)",
                       epilog=EXIT_TABLE, formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--app")
    p.add_argument("--direction", action="append", help="SOURCE:TARGET (repeatable)")
    p.add_argument("--out", help="keep build artifacts here instead of a temp dir")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("translate", help="run one translation session",
                       epilog=EXIT_TABLE, formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--app", required=True)
    p.add_argument("--direction", required=True, help="SOURCE:TARGET, e.g. openmp:cuda")
    p.add_argument("--llm", required=True)
    p.add_argument("--out", required=True, help="session output directory")
    p.add_argument("--max-self-corr", type=int)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("bench", help="run the app x llm x direction matrix and write reports",
                       epilog=EXIT_TABLE, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="YAML config file (not needed with --fixtures)")
    p.add_argument("--manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--llm", action="append", help="profile name (repeatable, default all)")
    p.add_argument("--direction", action="append", help="SOURCE:TARGET (repeatable)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-self-corr", type=int)
    p.add_argument("--fixtures", action="store_true",
                   help="replay the bundled HeCBench reference result tables instead of running anything")
    thresholds(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="re-render reports from persisted rows",
                       epilog=EXIT_TABLE, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--results", "--out", dest="results", required=True, help="directory holding rows.jsonl")
    p.add_argument("--format", choices=("csv", "json", "markdown"), default="markdown")
    thresholds(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.command == "bench" and not args.fixtures and not args.config:
        parser.error("bench needs --config unless --fixtures is given")
    try:
        return args.func(args)
    except bench.ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return EXIT_MANIFEST
    except (ConfigError, ToolchainMissing) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LlmError as exc:
        print(f"model backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except KeyboardInterrupt:
        print("interrupted; completed rows were saved", file=sys.stderr)
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    sys.exit(main())
