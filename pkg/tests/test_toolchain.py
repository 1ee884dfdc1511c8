import os
import statistics
from pathlib import Path

import pytest

from paratrans import toolchain
from paratrans.domain import LanguageSpec
from paratrans.toolchain import (
    BaselineFailed,
    RunFailed,
    ToolchainMissing,
    compile,
    compile_argv,
    execute,
    measure_runtime,
    run_argv,
    validate_baseline,
)

from conftest import needs_gxx, vecadd_task

CXX = LanguageSpec("cxx", ".cpp", "g++ -O0 -o {out} {src}")
HELLO = '#include <cstdio>\nint main() { printf("PASS\\n"); return 0; }\n'


def script(tmp_path: Path, name: str, body: str) -> Path:
    p = tmp_path / name
    p.write_text("#!/bin/sh\n" + body + "\n")
    return p  # deliberately not executable; execute() sets the bit


def test_argv_substitution():
    spec = LanguageSpec("x", ".c", "cc -I'my dir' -o {out} {src}", "mpirun -n 2 {bin} --x {args}")
    assert compile_argv(spec, "a b.c", "a") == ["cc", "-Imy dir", "-o", "a", "a b.c"]
    assert run_argv(spec, "/w/a", ["1", "two"]) == ["mpirun", "-n", "2", "/w/a", "--x", "1", "two"]
    assert run_argv(spec, "/w/a", []) == ["mpirun", "-n", "2", "/w/a", "--x"]


@needs_gxx
def test_compile_hello_world(tmp_path):
    (tmp_path / "hello.cpp").write_text(HELLO)
    before = set(os.listdir(Path.cwd()))
    r = compile(tmp_path / "hello.cpp", CXX, tmp_path)
    assert r.exit_ok and r.stderr == "" and r.kind == "compile"
    assert r.command == ("g++", "-O0", "-o", "hello", "hello.cpp")
    assert (tmp_path / "hello").exists()
    assert set(os.listdir(Path.cwd())) == before
    e = execute(tmp_path / "hello")
    assert e.exit_ok and e.stdout == "PASS\n"


@needs_gxx
def test_compile_error_is_data(tmp_path):
    (tmp_path / "bad.cpp").write_text("int main() { return undeclared_thing; }\n")
    r = compile(tmp_path / "bad.cpp", CXX, tmp_path)
    assert not r.exit_ok and "undeclared_thing" in r.stderr and r.returncode != 0


def test_missing_compiler(tmp_path):
    (tmp_path / "a.cpp").write_text(HELLO)
    with pytest.raises(ToolchainMissing):
        compile(tmp_path / "a.cpp", LanguageSpec("x", ".cpp", "no-such-compiler-xyz -o {out} {src}"), tmp_path)


def test_compile_preconditions(tmp_path):
    with pytest.raises(FileNotFoundError):
        compile(tmp_path / "missing.cpp", CXX, tmp_path)


def test_execute_exit_codes(tmp_path):
    ok = execute(script(tmp_path, "ok.sh", "echo PASS"))
    assert ok.exit_ok and ok.stdout == "PASS\n" and ok.returncode == 0
    bad = execute(script(tmp_path, "bad.sh", "echo oops >&2; exit 1"))
    assert not bad.exit_ok and bad.returncode == 1 and bad.stderr == "oops\n"


def test_execute_passes_args_and_env(tmp_path):
    r = execute(script(tmp_path, "a.sh", 'echo "$1 $2 $PARATRANS_T"'), ["x", "y"], env={"PARATRANS_T": "z"})
    assert r.stdout == "x y z\n"


def test_execute_timeout_kills_process_group(tmp_path):
    r = execute(script(tmp_path, "hang.sh", "sleep 30 & while :; do sleep 1; done"), timeout_s=1)
    assert r.timed_out and not r.exit_ok and r.returncode is None
    assert abs(r.wall_time_s - 1.0) <= 0.5


def test_execute_missing_binary_is_data(tmp_path):
    r = execute(tmp_path / "nope")
    assert not r.exit_ok and "cannot execute" in r.stderr


def test_measure_runtime_sleep_stub(tmp_path):
    stub = script(tmp_path, "sleep.sh", "sleep 0.1")
    mean = measure_runtime(stub, n_runs=3)
    assert 0.1 <= mean <= 0.2
    times = [execute(stub).wall_time_s for _ in range(3)]
    assert statistics.stdev(times) < 0.2 * statistics.fmean(times)


def test_measure_runtime_single_run_and_failure(tmp_path):
    assert measure_runtime(script(tmp_path, "t.sh", "true"), n_runs=1) >= 0
    with pytest.raises(RunFailed):
        measure_runtime(script(tmp_path, "f.sh", "exit 2"), n_runs=3)
    with pytest.raises(ValueError):
        measure_runtime(script(tmp_path, "t2.sh", "true"), n_runs=0)


def test_resource_lock_serializes(tmp_path):
    import threading
    import time

    toolchain.configure_resource("test-gpu", 1)
    inside, peak = [0], [0]
    lock = threading.Lock()

    def work():
        with toolchain.resource_lock("test-gpu"):
            with lock:
                inside[0] += 1
                peak[0] = max(peak[0], inside[0])
            time.sleep(0.02)
            with lock:
                inside[0] -= 1

    threads = [threading.Thread(target=work) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak[0] == 1


@needs_gxx
def test_baseline_ok(tmp_path):
    b = validate_baseline(vecadd_task(), tmp_path, n_runtime_runs=1)
    assert b.source_execute.exit_ok and "PASS" in b.target_stdout
    assert b.target_runtime_s > 0
    assert not validate_baseline(vecadd_task(reference=False), tmp_path / "s", n_runtime_runs=1).target_stdout


@needs_gxx
def test_baseline_broken_source(tmp_path):
    from dataclasses import replace
    task = replace(vecadd_task(), source_code="int main() { syntax error }")
    with pytest.raises(BaselineFailed) as exc:
        validate_baseline(task, tmp_path)
    assert exc.value.stage == "source compile" and not exc.value.result.exit_ok


@needs_gxx
def test_baseline_broken_target(tmp_path):
    from dataclasses import replace
    task = replace(vecadd_task(), reference_target_code="int main() { return 4; }")
    with pytest.raises(BaselineFailed) as exc:
        validate_baseline(task, tmp_path)
    assert exc.value.stage == "target execute" and exc.value.result.returncode == 4
