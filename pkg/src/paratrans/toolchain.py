"""Compile and run programs in a private working directory.

A failing child process is data (a :class:`ToolResult`), not an exception.
The only exception a caller has to plan for is :class:`ToolchainMissing`,
which means the configured compiler does not exist and retrying is pointless.
"""

from __future__ import annotations

import contextlib
import os
import shlex
import shutil
import signal
import stat
import statistics
import subprocess
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

from .domain import LanguageSpec, ToolResult, TranslationTask

DEFAULT_COMPILE_TIMEOUT_S = 120.0
DEFAULT_EXEC_TIMEOUT_S = 300.0


class ToolchainMissing(RuntimeError):
    pass


class RunFailed(RuntimeError):
    def __init__(self, result: ToolResult):
        super().__init__(f"run failed: {result.stderr.strip()[-500:] or 'nonzero exit'}")
        self.result = result


class BaselineFailed(RuntimeError):
    """The original code did not build or run; translation must not start."""

    def __init__(self, stage: str, result: ToolResult):
        what = "timed out" if result.timed_out else ("failed" if not result.exit_ok else "")
        super().__init__(f"baseline {stage} {what}: {(result.stderr or result.stdout).strip()[-2000:]}")
        self.stage = stage
        self.result = result


_locks: dict[str, threading.BoundedSemaphore] = {}
_locks_guard = threading.Lock()


def configure_resource(name: str, tokens: int) -> None:
    """Set how many concurrent timed runs may hold resource *name*."""
    with _locks_guard:
        _locks[name] = threading.BoundedSemaphore(tokens)


@contextlib.contextmanager
def resource_lock(name: str = "accelerator") -> Iterator[None]:
    with _locks_guard:
        sem = _locks.setdefault(name, threading.BoundedSemaphore(1))
    with sem:
        yield


def _substitute(template: str, **values: str) -> list[str]:
    argv: list[str] = []
    for arg in shlex.split(template):
        if arg == "{args}":
            argv.extend(values.get("args_list", []))
            continue
        for key, val in values.items():
            if key != "args_list":
                arg = arg.replace("{" + key + "}", val)
        argv.append(arg)
    return argv


def compile_argv(spec: LanguageSpec, src: str, out: str) -> list[str]:
    return _substitute(spec.compile_cmd, src=src, out=out)


def compile_command_text(spec: LanguageSpec, src: str, out: str) -> str:
    return shlex.join(compile_argv(spec, src, out))


def run_argv(spec_or_template, binary: str, args: Sequence[str]) -> list[str]:
    template = spec_or_template.run_cmd if isinstance(spec_or_template, LanguageSpec) else spec_or_template
    return _substitute(template, bin=binary, args_list=[str(a) for a in args])


def _run(kind: str, argv: list[str], cwd: Path, timeout_s: float, env: Optional[dict] = None) -> ToolResult:
    full_env = {**os.environ, **(env or {})}
    start = time.perf_counter()
    proc = subprocess.Popen(
        argv,
        cwd=cwd,
        env=full_env,
        stdin=subprocess.DEVNULL,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        start_new_session=True,
    )
    try:
        out, err = proc.communicate(timeout=timeout_s)
        timed_out = False
    except subprocess.TimeoutExpired:
        with contextlib.suppress(ProcessLookupError):
            os.killpg(proc.pid, signal.SIGKILL)
        out, err = proc.communicate()
        timed_out = True
    wall = time.perf_counter() - start
    return ToolResult(
        kind=kind,
        exit_ok=(not timed_out and proc.returncode == 0),
        stdout=out.decode("utf-8", "replace"),
        stderr=err.decode("utf-8", "replace"),
        wall_time_s=wall,
        timed_out=timed_out,
        returncode=None if timed_out else proc.returncode,
        command=tuple(argv),
    )


def compile(code_path, spec: LanguageSpec, workdir, out_name: Optional[str] = None,
            timeout_s: float = DEFAULT_COMPILE_TIMEOUT_S) -> ToolResult:
    """Build *code_path* with *spec*'s compiler inside *workdir*.

    The binary is written next to the source as ``out_name`` (default: the
    source file's stem). Paths passed to the compiler are relative to
    *workdir* so the command line does not depend on where the session lives.
    """
    workdir = Path(workdir)
    code_path = Path(code_path)
    if not code_path.exists():
        raise FileNotFoundError(code_path)
    if not workdir.is_dir():
        raise NotADirectoryError(workdir)
    src = os.path.relpath(code_path.resolve(), workdir.resolve())
    out = out_name or code_path.stem
    argv = compile_argv(spec, src, out)
    if not argv or shutil.which(argv[0]) is None:
        raise ToolchainMissing(f"compiler {argv[0] if argv else '<empty>'!r} for {spec.name} not found")
    try:
        return _run("compile", argv, workdir, timeout_s, spec.env)
    except FileNotFoundError as exc:
        raise ToolchainMissing(str(exc)) from exc


def execute(binary_path, args: Sequence[str] = (), timeout_s: float = DEFAULT_EXEC_TIMEOUT_S,
            run_cmd: str = "{bin} {args}", env: Optional[dict] = None) -> ToolResult:
    """Mark *binary_path* executable and run it from its own directory."""
    binary_path = Path(binary_path).resolve()
    if binary_path.exists():
        binary_path.chmod(binary_path.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    argv = run_argv(run_cmd, str(binary_path), args)
    try:
        return _run("execute", argv, binary_path.parent, timeout_s, env)
    except (FileNotFoundError, PermissionError, OSError) as exc:
        return ToolResult(kind="execute", exit_ok=False, stderr=f"cannot execute {argv[0]}: {exc}",
                          command=tuple(argv))


def measure_runtime(binary_path, args: Sequence[str] = (), n_runs: int = 3,
                    timeout_s: float = DEFAULT_EXEC_TIMEOUT_S, run_cmd: str = "{bin} {args}",
                    env: Optional[dict] = None, resource: Optional[str] = "accelerator") -> float:
    """Mean wall time over *n_runs* sequential runs; raises :class:`RunFailed` on any failed run."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    times = []
    lock = resource_lock(resource) if resource else contextlib.nullcontext()
    with lock:
        for _ in range(n_runs):
            result = execute(binary_path, args, timeout_s, run_cmd, env)
            if not result.exit_ok:
                raise RunFailed(result)
            times.append(result.wall_time_s)
    return statistics.fmean(times)


@dataclass(frozen=True)
class Baseline:
    source_compile: ToolResult
    source_execute: ToolResult
    target_compile: Optional[ToolResult] = None
    target_execute: Optional[ToolResult] = None
    target_runtime_s: Optional[float] = None

    @property
    def target_stdout(self) -> Optional[str]:
        return self.target_execute.stdout if self.target_execute else None


def _build_and_run(code: str, spec: LanguageSpec, stem: str, workdir: Path, args: Sequence[str],
                   compile_timeout_s: float, exec_timeout_s: float, stage: str):
    path = workdir / f"{stem}{spec.ext}"
    path.write_text(code, encoding="utf-8")
    c = compile(path, spec, workdir, out_name=stem, timeout_s=compile_timeout_s)
    if not c.exit_ok:
        raise BaselineFailed(f"{stage} compile", c)
    e = execute(workdir / stem, args, exec_timeout_s, spec.run_cmd, spec.env)
    if not e.exit_ok:
        raise BaselineFailed(f"{stage} execute", e)
    return c, e


def validate_baseline(task: TranslationTask, workdir, compile_timeout_s: float = DEFAULT_COMPILE_TIMEOUT_S,
                      exec_timeout_s: float = DEFAULT_EXEC_TIMEOUT_S, n_runtime_runs: int = 3) -> Baseline:
    """Build and run the original source, then the reference target if the task has one.

    Raises :class:`BaselineFailed` naming the stage that broke. The reference
    target's stdout and mean runtime are kept for comparison with the
    generated code.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    app = task.app_name
    sc, se = _build_and_run(task.source_code, task.source, f"{app}__source", workdir, task.runtime_args,
                            compile_timeout_s, exec_timeout_s, "source")
    if task.reference_target_code is None:
        return Baseline(sc, se)
    tc, te = _build_and_run(task.reference_target_code, task.target, f"{app}__reference", workdir,
                            task.runtime_args, compile_timeout_s, exec_timeout_s, "target")
    try:
        runtime = measure_runtime(workdir / f"{app}__reference", task.runtime_args, n_runtime_runs,
                                  exec_timeout_s, task.target.run_cmd, task.target.env)
    except RunFailed as exc:
        raise BaselineFailed("target execute", exc.result) from exc
    return Baseline(sc, se, tc, te, runtime)
