"""Translation matrices over a benchmark suite, plus summaries and reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import re
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import yaml

from .config import Config, fingerprint
from .domain import ConfigError, Direction, MetricsRecord, Status, TranslationTask
from .llm import LlmError
from .loop import run_pipeline

logger = logging.getLogger(__name__)

ROWS_FILE = "rows.jsonl"
CSV_COLUMNS = ("app", "llm", "direction", "runtime_s", "ratio", "sim_t", "sim_l", "self_corr", "status")
TIMING_COLUMNS = ("runtime_s", "ratio")
DEFAULT_RUNTIME_THRESHOLD = 0.9091  # generated at most ~1.1x slower than the source
DEFAULT_SIM_THRESHOLD = 0.6
SIM_METRICS = ("sim_t", "sim_l", "either", "both")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class SuiteEntry:
    app_name: str
    category: str
    sources: dict[str, Path]
    runtime_args: tuple[str, ...] = ()

    def code(self, language: str) -> str:
        return Path(self.sources[language]).read_text(encoding="utf-8")


@dataclass(frozen=True)
class SuiteManifest:
    entries: tuple[SuiteEntry, ...]
    path: Optional[Path] = None

    def entry(self, app: str) -> SuiteEntry:
        for e in self.entries:
            if e.app_name == app:
                return e
        raise ManifestError(f"app {app!r} not in manifest")

    @property
    def categories(self) -> set[str]:
        return {e.category for e in self.entries}


def load_suite(manifest_path, languages: Optional[Iterable[str]] = None, check_files: bool = True) -> SuiteManifest:
    """Read and validate a suite manifest.

    Every problem found is reported in one :class:`ManifestError`. Source
    paths may use environment variables (``${HECBENCH_ROOT}/...``) and are
    relative to the manifest's directory otherwise.
    """
    path = Path(manifest_path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ManifestError(f"cannot load manifest {path}: {exc}") from exc
    apps = (data or {}).get("apps") if isinstance(data, dict) else None
    if not apps:
        raise ManifestError(f"manifest {path} has no apps")
    required = list(languages or [])
    problems, entries, seen = [], [], set()
    for i, raw in enumerate(apps):
        name = (raw or {}).get("name")
        label = name or f"entry #{i}"
        if not name:
            problems.append(f"{label}: missing name")
            continue
        if name in seen:
            problems.append(f"{label}: duplicate app name")
        seen.add(name)
        srcs = {}
        for lang, p in ((raw.get("sources") or {}).items()):
            expanded = os.path.expandvars(str(p))
            q = Path(expanded).expanduser()
            srcs[str(lang)] = q if q.is_absolute() else path.parent / q
        for lang in required:
            if lang not in srcs:
                problems.append(f"{label}: no source path for language {lang!r}")
        if len(srcs) < 2:
            problems.append(f"{label}: needs code in at least two languages")
        if check_files:
            for lang, p in srcs.items():
                if not p.is_file():
                    problems.append(f"{label}: {lang} source {p} does not exist")
        args = raw.get("args") or []
        if not isinstance(args, list):
            problems.append(f"{label}: args must be a list")
            args = []
        entries.append(SuiteEntry(name, str(raw.get("category", "uncategorized")), srcs,
                                  tuple(str(a) for a in args)))
    if problems:
        raise ManifestError("invalid manifest:\n  " + "\n  ".join(problems))
    return SuiteManifest(tuple(entries), path)


@dataclass(frozen=True)
class ResultRow:
    app_name: str
    llm_name: str
    direction: str
    status: Status
    metrics: Optional[MetricsRecord] = None
    config_hash: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "status", Status(self.status))
        if self.status is Status.SUCCESS and self.metrics is None:
            raise ValueError("successful row needs metrics")
        if self.status is not Status.SUCCESS and self.metrics is not None:
            raise ValueError("failure rows carry no metrics")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.app_name, self.llm_name, self.direction)

    @property
    def ok(self) -> bool:
        return self.status is Status.SUCCESS

    def to_dict(self) -> dict:
        return {
            "app_name": self.app_name,
            "llm_name": self.llm_name,
            "direction": self.direction,
            "status": self.status.value,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "config_hash": self.config_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResultRow":
        return cls(
            app_name=d["app_name"],
            llm_name=d["llm_name"],
            direction=d["direction"],
            status=Status(d["status"]),
            metrics=MetricsRecord.from_dict(d["metrics"]) if d.get("metrics") else None,
            config_hash=d.get("config_hash", ""),
        )


class RowStore:
    """Append-only JSON-lines store of result rows; the last row for a key wins."""

    def __init__(self, out_dir):
        self.path = Path(out_dir) / ROWS_FILE
        self._lock = threading.Lock()

    def load(self) -> list[ResultRow]:
        if not self.path.exists():
            return []
        latest: dict[tuple, ResultRow] = {}
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    row = ResultRow.from_dict(json.loads(line))
                except (ValueError, KeyError, TypeError) as exc:
                    raise ValueError(f"{self.path}:{lineno}: corrupt row: {exc}") from exc
                latest[row.key] = row
        return list(latest.values())

    def append(self, row: ResultRow) -> None:
        line = json.dumps(row.to_dict(), sort_keys=True) + "\n"
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())

    def replace(self, rows: Iterable[ResultRow]) -> None:
        tmp = self.path.with_suffix(".tmp")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row.to_dict(), sort_keys=True) + "\n")
        os.replace(tmp, self.path)


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text).strip("_") or "x"


def cell_hash(config: Config, entry: SuiteEntry, llm_name: str, direction: Direction) -> str:
    src, tgt = config.language(direction.source), config.language(direction.target)
    profile = config.llm(llm_name)

    def lang(spec):
        asset = spec.knowledge_asset
        return [spec.name, spec.ext, spec.compile_cmd, spec.run_cmd, asset.digest if asset else None]

    return fingerprint(
        lang(src), lang(tgt),
        [profile.model_id, profile.context_length, profile.max_response_tokens, profile.temperature, profile.backend],
        asdict(config.loop),
        sorted((str(d), config.prompts.system_prompts[d], config.prompts.translation_prompts[d])
               for d in config.prompts.directions),
        [config.prompts.compile_error_template, config.prompts.exec_error_template,
         config.prompts.assembly_template, config.prompts.knowledge_summary_template,
         config.prompts.describe_source_template],
        entry.code(direction.source), entry.code(direction.target), list(entry.runtime_args),
    )


def sort_rows(rows: Iterable[ResultRow], apps: Sequence[str] = (), llms: Sequence[str] = (),
              directions: Sequence[str] = ()) -> list[ResultRow]:
    """Order rows by direction, then llm, then app, following the given orders where known."""
    def rank(order, value):
        return (order.index(value), "") if value in order else (len(order), value)

    return sorted(rows, key=lambda r: (rank(list(directions), r.direction), rank(list(llms), r.llm_name),
                                       rank(list(apps), r.app_name)))


def run_matrix(
    manifest: SuiteManifest,
    config: Config,
    llm_names: Sequence[str],
    directions: Sequence[Direction],
    out_dir,
    workers: int = 1,
) -> list[ResultRow]:
    """Run every (app, llm, direction) cell not already completed under the same config hash.

    Completed rows are appended to ``rows.jsonl`` in *out_dir* as soon as they
    finish, so an interrupted run resumes where it stopped. Returns all rows
    for the requested cells in a stable order.
    """
    out_dir = Path(out_dir)
    store = RowStore(out_dir)
    existing = {r.key: r for r in store.load()}
    cells, rows = [], {}
    for d in directions:
        for name in llm_names:
            config.llm(name)
            for entry in manifest.entries:
                key = (entry.app_name, name, str(d))
                h = cell_hash(config, entry, name, d)
                done = existing.get(key)
                if done is not None and done.config_hash == h and done.status is not Status.BACKEND_ERROR:
                    rows[key] = done
                else:
                    cells.append((entry, name, d, h))

    def run_cell(entry: SuiteEntry, name: str, d: Direction, h: str) -> ResultRow:
        task = TranslationTask(
            app_name=entry.app_name,
            source=config.language(d.source),
            target=config.language(d.target),
            source_code=entry.code(d.source),
            llm=config.llm(name),
            runtime_args=entry.runtime_args,
            reference_target_code=entry.code(d.target),
        )
        workdir = out_dir / "sessions" / _slug(name) / f"{_slug(d.source)}_to_{_slug(d.target)}" / _slug(entry.app_name)
        try:
            record = run_pipeline(task, config.loop, workdir, prompts=config.prompts)
        except LlmError as exc:
            logger.error("%s/%s/%s: backend error: %s", entry.app_name, name, d, exc)
            return ResultRow(entry.app_name, name, str(d), Status.BACKEND_ERROR, None, h)
        metrics = record.metrics if record.status is Status.SUCCESS else None
        return ResultRow(entry.app_name, name, str(d), record.status, metrics, h)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = {pool.submit(run_cell, *c): c for c in cells}
        try:
            for fut in as_completed(futures):
                row = fut.result()
                store.append(row)
                rows[row.key] = row
                logger.info("%s %s %s -> %s", row.app_name, row.llm_name, row.direction, row.status.value)
        except BaseException:
            for f in futures:
                f.cancel()
            raise
    return sort_rows(rows.values(), [e.app_name for e in manifest.entries], list(llm_names),
                     [str(d) for d in directions])


@dataclass(frozen=True)
class SummaryStats:
    """Headline numbers for a set of rows.

    ``success_rate`` is over all rows; the other three percentages are over
    successful rows only.
    """

    n_total: int
    n_success: int
    success_rate: float
    n_within_runtime: int
    pct_within_runtime_threshold: float
    n_similar: int
    pct_similar: float
    n_first_attempt: int
    pct_first_attempt: float
    runtime_threshold: float = DEFAULT_RUNTIME_THRESHOLD
    sim_threshold: float = DEFAULT_SIM_THRESHOLD
    sim_metric: str = "sim_t"

    def lines(self) -> list[str]:
        return [
            f"success rate: {self.success_rate:.1f}% ({self.n_success}/{self.n_total})",
            f"within runtime threshold (ratio >= {self.runtime_threshold:g}): "
            f"{self.pct_within_runtime_threshold:.1f}% ({self.n_within_runtime}/{self.n_success})",
            f"similar ({self.sim_metric} >= {self.sim_threshold:g}): "
            f"{self.pct_similar:.1f}% ({self.n_similar}/{self.n_success})",
            f"first attempt: {self.pct_first_attempt:.1f}% ({self.n_first_attempt}/{self.n_success})",
        ]


def _pct(n: int, d: int) -> float:
    return 100.0 * n / d if d else 0.0


def _is_similar(m: MetricsRecord, threshold: float, metric: str) -> bool:
    t = m.sim_t is not None and m.sim_t >= threshold
    l = m.sim_l is not None and m.sim_l >= threshold
    return {"sim_t": t, "sim_l": l, "either": t or l, "both": t and l}[metric]


def summarize(rows: Sequence[ResultRow], runtime_threshold: float = DEFAULT_RUNTIME_THRESHOLD,
              sim_threshold: float = DEFAULT_SIM_THRESHOLD, sim_metric: str = "sim_t") -> SummaryStats:
    if not rows:
        raise ValueError("cannot summarize zero rows")
    if sim_metric not in SIM_METRICS:
        raise ValueError(f"sim_metric must be one of {SIM_METRICS}")
    ok = [r.metrics for r in rows if r.ok]
    within = sum(1 for m in ok if m.ratio is not None and m.ratio >= runtime_threshold)
    similar = sum(1 for m in ok if _is_similar(m, sim_threshold, sim_metric))
    first = sum(1 for m in ok if m.self_corr == 0)
    return SummaryStats(
        n_total=len(rows), n_success=len(ok), success_rate=_pct(len(ok), len(rows)),
        n_within_runtime=within, pct_within_runtime_threshold=_pct(within, len(ok)),
        n_similar=similar, pct_similar=_pct(similar, len(ok)),
        n_first_attempt=first, pct_first_attempt=_pct(first, len(ok)),
        runtime_threshold=runtime_threshold, sim_threshold=sim_threshold, sim_metric=sim_metric,
    )


def _fmt(value, digits: int) -> str:
    return "N/A" if value is None else f"{value:.{digits}f}"


def _cells(row: ResultRow) -> dict[str, str]:
    m = row.metrics
    if not row.ok or m is None:
        cells = dict.fromkeys(("runtime_s", "ratio", "sim_t", "sim_l", "self_corr"), "N/A")
    else:
        cells = {
            "runtime_s": _fmt(m.runtime_generated_s, 4),
            "ratio": _fmt(m.ratio, 4),
            "sim_t": _fmt(m.sim_t, 2),
            "sim_l": _fmt(m.sim_l, 2),
            "self_corr": str(m.self_corr),
        }
    return {"app": row.app_name, "llm": row.llm_name, "direction": row.direction,
            **cells, "status": row.status.value}


def render_report(rows: Sequence[ResultRow], fmt: str = "markdown", include_timing: bool = True) -> str:
    """Render rows as ``csv``, ``json`` or ``markdown`` tables (one panel per direction).

    Runtimes and ratios use four decimals; failed rows show ``N/A`` in every
    metric column. ``include_timing=False`` drops the wall-time derived
    columns, which is what determinism comparisons need.
    """
    columns = [c for c in CSV_COLUMNS if include_timing or c not in TIMING_COLUMNS]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            cells = _cells(row)
            writer.writerow([cells[c] for c in columns])
        return buf.getvalue()
    if fmt == "json":
        out = []
        for row in rows:
            d = row.to_dict()
            if not include_timing and d["metrics"]:
                for k in ("runtime_generated_s", "runtime_source_s", "ratio"):
                    d["metrics"].pop(k, None)
            out.append(d)
        return json.dumps(out, indent=2) + "\n"
    if fmt == "markdown":
        headers = {"app": "App", "llm": "LLM", "runtime_s": "Runtime (s)", "ratio": "Ratio",
                   "sim_t": "Sim-T", "sim_l": "Sim-L", "self_corr": "Self-corr"}
        shown = [c for c in ("app", "llm", "runtime_s", "ratio", "sim_t", "sim_l", "self_corr") if c in columns]
        parts = []
        for direction in dict.fromkeys(r.direction for r in rows):
            src, _, tgt = direction.partition(":")
            parts.append(f"### {src} to {tgt}\n")
            parts.append("| " + " | ".join(headers[c] for c in shown) + " |")
            parts.append("|" + "|".join("---" for _ in shown) + "|")
            for row in rows:
                if row.direction == direction:
                    cells = _cells(row)
                    parts.append("| " + " | ".join(cells[c] for c in shown) + " |")
            parts.append("")
        return "\n".join(parts)
    raise ValueError(f"unknown report format {fmt!r}")


def summaries_by_direction(rows: Sequence[ResultRow], **kw) -> dict[str, SummaryStats]:
    out = {}
    for direction in dict.fromkeys(r.direction for r in rows):
        out[direction] = summarize([r for r in rows if r.direction == direction], **kw)
    return out


def render_summary(rows: Sequence[ResultRow], **kw) -> str:
    lines = []
    for direction, stats in summaries_by_direction(rows, **kw).items():
        lines.append(f"[{direction}]")
        lines.extend("  " + ln for ln in stats.lines())
    return "\n".join(lines) + "\n"


def write_reports(rows: Sequence[ResultRow], out_dir, formats: Sequence[str] = ("csv", "json", "markdown"),
                  **summary_kw) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = {"csv": "csv", "json": "json", "markdown": "md"}
    for fmt in formats:
        (out_dir / f"report.{ext[fmt]}").write_text(render_report(rows, fmt), encoding="utf-8")
    if rows:
        (out_dir / "summary.txt").write_text(render_summary(rows, **summary_kw), encoding="utf-8")
