"""The self-correcting translation session.

A session validates the baseline, prepares context (knowledge summary and
source description), asks for a translation, and then alternates between
building the newest code and feeding build or run errors back to the model
until the code compiles and runs cleanly or the correction budget runs out.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from . import toolchain
from .domain import (
    Attempt,
    ConfigError,
    MetricsRecord,
    SessionRecord,
    Status,
    ToolResult,
    TranscriptEntry,
    TranslationTask,
)
from .extract import ExtractionFailed, extract_code
from .llm import ChatRequest, ContextOverflow, build_request, complete, make_backend
from .metrics import compare_output, runtime_ratio, sim_l, sim_t
from .prompts import (
    DEFAULT_SUMMARY_CACHE,
    EMPTY_COMPILE_STDERR,
    PromptDictionary,
    SummaryCache,
    assemble_translation_prompt,
    compile_error_prompt,
    describe_source,
    exec_error_prompt,
    stderr_budget_chars,
    summarize_knowledge,
    system_prompt,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LoopConfig:
    max_self_corr: int = 50
    compile_timeout_s: float = toolchain.DEFAULT_COMPILE_TIMEOUT_S
    exec_timeout_s: float = toolchain.DEFAULT_EXEC_TIMEOUT_S
    n_runtime_runs: int = 3
    compare_mode: str = "filtered"
    max_extraction_failures: int = 2

    def __post_init__(self) -> None:
        if self.max_self_corr < 1:
            raise ConfigError("max_self_corr must be >= 1")
        if self.compile_timeout_s <= 0 or self.exec_timeout_s <= 0:
            raise ConfigError("timeouts must be positive")
        if self.n_runtime_runs < 1:
            raise ConfigError("n_runtime_runs must be >= 1")
        if self.compare_mode not in ("exact", "filtered"):
            raise ConfigError(f"unknown compare_mode {self.compare_mode!r}")
        if self.max_extraction_failures < 1:
            raise ConfigError("max_extraction_failures must be >= 1")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class _Session:
    task: TranslationTask
    cfg: LoopConfig
    workdir: Path
    backend: object
    prompts: PromptDictionary
    transcript: list[TranscriptEntry] = field(default_factory=list)
    attempts: list[Attempt] = field(default_factory=list)
    self_corr: int = 0

    def record(self, kind: str, request: ChatRequest, response: str) -> None:
        self.transcript.append(
            TranscriptEntry(kind, request.system_prompt, "\n".join(request.user_messages), response, _now())
        )

    def ask(self, kind: str, user: str, system: Optional[str]) -> str:
        request = build_request(self.task.llm, [user], system)
        text = complete(self.backend, request, self.task.llm).text
        self.record(kind, request, text)
        return text

    def finish(self, status: Status, **kw) -> SessionRecord:
        t = self.task
        return SessionRecord(
            app_name=t.app_name,
            direction=str(t.direction),
            llm_name=t.llm.name,
            status=status,
            transcript=tuple(self.transcript),
            attempts=tuple(self.attempts),
            self_corr=self.self_corr,
            **kw,
        )


def _exec_error_text(result: ToolResult, timeout_s: float) -> str:
    if result.timed_out:
        return f"execution timed out after {timeout_s:g}s"
    return result.stderr


def run_pipeline(
    task: TranslationTask,
    cfg: LoopConfig = LoopConfig(),
    workdir=None,
    *,
    backend=None,
    prompts: Optional[PromptDictionary] = None,
    cache: Optional[SummaryCache] = DEFAULT_SUMMARY_CACHE,
) -> SessionRecord:
    """Run one translation session and return its full record.

    Every terminal outcome (success, exhausted budgets, unusable replies,
    context overflow, broken baseline) is reported through
    ``SessionRecord.status``. Exceptions are reserved for configuration
    problems, a missing compiler, and backend transport failures.
    Artifacts are written under *workdir*.
    """
    if workdir is None:
        raise ConfigError("run_pipeline needs a workdir")
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    prompts = prompts or PromptDictionary.default()
    direction = task.direction
    system = system_prompt(prompts, direction)
    asset = task.target.knowledge_asset
    if asset is None:
        raise ConfigError(f"language {task.target.name!r} has no knowledge asset")
    if backend is None:
        backend = make_backend(task.llm, task.app_name, str(direction))
    s = _Session(task, cfg, workdir, backend, prompts)
    record = _drive(s, system, asset, cache)
    write_session(record, workdir)
    return record


def _drive(s: _Session, system: str, asset, cache) -> SessionRecord:
    task, cfg, workdir = s.task, s.cfg, s.workdir
    try:
        baseline = toolchain.validate_baseline(
            task, workdir / "baseline", cfg.compile_timeout_s, cfg.exec_timeout_s, cfg.n_runtime_runs
        )
    except toolchain.BaselineFailed as exc:
        logger.error("%s: %s", task.app_name, exc)
        return s.finish(Status.BASELINE_FAILED, detail=str(exc))

    try:
        summary = summarize_knowledge(s.backend, task.llm, s.prompts, asset, cache, s.record)
        description = describe_source(s.backend, task.llm, s.prompts, task.source_code, task.source.name, s.record)
        bundle = assemble_translation_prompt(
            s.prompts, asset.text, summary, description, task.source_code, task.direction, task.llm
        )
        user, kind = bundle.assembled, "translate"
        reply = s.ask(kind, user, system)
    except ContextOverflow as exc:
        return s.finish(Status.CONTEXT_OVERFLOW, detail=str(exc))

    spec = task.target
    extraction_failures = 0
    while True:
        try:
            code = extract_code(reply).code
        except ExtractionFailed as exc:
            extraction_failures += 1
            if extraction_failures >= cfg.max_extraction_failures:
                return s.finish(Status.EXTRACTION_FAILED, detail=str(exc))
            try:
                reply = s.ask("extraction_retry", user, system)
            except ContextOverflow as exc2:
                return s.finish(Status.CONTEXT_OVERFLOW, detail=str(exc2))
            continue
        extraction_failures = 0

        n = len(s.attempts) + 1
        stem = f"{task.app_name}__attempt{n}"
        src_name = stem + spec.ext
        (workdir / src_name).write_text(code, encoding="utf-8")
        compiler_cmd = toolchain.compile_command_text(spec, src_name, stem)
        built = toolchain.compile(workdir / src_name, spec, workdir, out_name=stem, timeout_s=cfg.compile_timeout_s)

        if not built.exit_ok:
            s.attempts.append(Attempt(n, src_name, code, built))
            if s.self_corr + 1 > cfg.max_self_corr:
                return s.finish(Status.COMPILE_BUDGET_EXCEEDED, detail=f"compile still failing after {s.self_corr} corrections")
            stderr = built.stderr.strip() or built.stdout.strip() or EMPTY_COMPILE_STDERR
            budget = stderr_budget_chars(task.llm, s.prompts.compile_error_template, system, code, compiler_cmd)
            user, kind = compile_error_prompt(s.prompts, code, compiler_cmd, stderr, budget), "compile_error"
        else:
            ran = toolchain.execute(workdir / stem, task.runtime_args, cfg.exec_timeout_s, spec.run_cmd, spec.env)
            runtime = None
            if ran.exit_ok:
                try:
                    runtime = toolchain.measure_runtime(
                        workdir / stem, task.runtime_args, cfg.n_runtime_runs, cfg.exec_timeout_s, spec.run_cmd, spec.env
                    )
                except toolchain.RunFailed as exc:
                    ran = exc.result
            s.attempts.append(Attempt(n, src_name, code, built, ran))
            if ran.exit_ok:
                return _finalize(s, code, ran.stdout, runtime, baseline)
            if s.self_corr + 1 > cfg.max_self_corr:
                return s.finish(Status.EXEC_BUDGET_EXCEEDED, detail=f"execution still failing after {s.self_corr} corrections")
            stderr = _exec_error_text(ran, cfg.exec_timeout_s)
            budget = stderr_budget_chars(task.llm, s.prompts.exec_error_template, system, code, compiler_cmd)
            user, kind = exec_error_prompt(s.prompts, code, compiler_cmd, stderr, budget), "exec_error"

        s.self_corr += 1
        try:
            reply = s.ask(kind, user, system)
        except ContextOverflow as exc:
            # The correction prompt was never sent, so it does not count.
            s.self_corr -= 1
            return s.finish(Status.CONTEXT_OVERFLOW, detail=str(exc))


def _finalize(s: _Session, code: str, stdout: str, runtime: float, baseline: toolchain.Baseline) -> SessionRecord:
    task = s.task
    kw = {}
    if baseline.target_runtime_s is not None and task.reference_target_code is not None:
        kw = dict(
            runtime_source_s=baseline.target_runtime_s,
            ratio=runtime_ratio(baseline.target_runtime_s, runtime) if runtime > 0 else None,
            sim_t=sim_t(task.reference_target_code, code),
            sim_l=sim_l(task.reference_target_code, code),
            output_verdict=compare_output(baseline.target_stdout, stdout, s.cfg.compare_mode),
        )
    metrics = MetricsRecord(runtime_generated_s=runtime, self_corr=s.self_corr, **kw)
    return s.finish(Status.SUCCESS, final_code=code, final_stdout=stdout, metrics=metrics)


def write_session(record: SessionRecord, outdir) -> None:
    """Persist ``session.json``, ``transcript.log`` and, on success, the final code and ``metadata.json``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "session.json").write_text(json.dumps(record.to_dict(), indent=2), encoding="utf-8")
    with open(outdir / "transcript.log", "w", encoding="utf-8") as log:
        log.write(f"# {record.app_name} {record.direction} {record.llm_name}: {record.status.value}\n")
        for i, e in enumerate(record.transcript, 1):
            log.write(f"\n===== [{i}] {e.kind} @ {e.timestamp} =====\n")
            if e.system:
                log.write(f"--- system ---\n{e.system}\n")
            log.write(f"--- prompt ---\n{e.prompt}\n--- response ---\n{e.response}\n")
        for a in record.attempts:
            c = a.compile
            log.write(f"\n----- attempt {a.index} ({a.code_file}): compile {'ok' if c.exit_ok else 'FAILED'}")
            if a.execute is not None:
                log.write(f", execute {'ok' if a.execute.exit_ok else 'FAILED'}")
            log.write(" -----\n")
        if record.detail:
            log.write(f"\n{record.detail}\n")
    if record.status is Status.SUCCESS:
        ext = Path(record.attempts[-1].code_file).suffix
        (outdir / f"{record.app_name}__final{ext}").write_text(record.final_code, encoding="utf-8")
        meta = {
            "app": record.app_name,
            "direction": record.direction,
            "llm": record.llm_name,
            "self_corr": record.self_corr,
            "stdout": record.final_stdout,
        }
        (outdir / "metadata.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
