import json
import os
import random
from importlib import resources
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from paratrans import bench, fixtures
from paratrans.bench import ManifestError, ResultRow, RowStore, load_suite, render_report, run_matrix, summarize
from paratrans.config import load_config
from paratrans.domain import Direction, MetricsRecord, Status

from conftest import DESK, needs_gxx, scripted_llm, write_desk_config

HECBENCH = Path(str(resources.files("paratrans").joinpath("data/hecbench/manifest.yaml")))
SERIAL_TO_OMP = Direction("serial", "omp")


def test_desk_manifest():
    m = load_suite(DESK / "suite.yaml", languages=["serial", "omp"])
    assert [e.app_name for e in m.entries] == ["vecadd", "sumsq"]
    assert m.entry("vecadd").runtime_args == ("20000",)
    assert "#include" in m.entry("sumsq").code("omp")


def test_shipped_hecbench_manifest(monkeypatch):
    monkeypatch.setenv("HECBENCH_ROOT", "/opt/HeCBench")
    m = load_suite(HECBENCH, languages=["cuda", "openmp"], check_files=False)
    assert len(m.entries) == 10
    assert len(m.categories) == 9
    assert m.entry("matrix-rotate").runtime_args == ("10000", "1")
    assert m.entry("jacobi").runtime_args == ()
    assert m.entry("bsearch").sources["cuda"] == Path("/opt/HeCBench/src/bsearch-cuda/main.cu")
    runtimes = fixtures.load_reference_runtimes()
    assert {e.app_name: e.runtime_args for e in m.entries} == {a: r.runtime_args for a, r in runtimes.items()}


def test_manifest_errors(tmp_path):
    (tmp_path / "a.cu").write_text("x")
    bad = tmp_path / "bad.yaml"
    bad.write_text("apps:\n  - {name: a, category: Math, sources: {openmp: a.cu}}\n"
                   "  - {name: b, sources: {cuda: missing.cu, openmp: a.cu}}\n")
    with pytest.raises(ManifestError) as exc:
        load_suite(bad, languages=["cuda", "openmp"])
    assert "a: no source path for language 'cuda'" in str(exc.value)
    assert "missing.cu does not exist" in str(exc.value)
    empty = tmp_path / "empty.yaml"
    empty.write_text("apps: []\n")
    with pytest.raises(ManifestError):
        load_suite(empty)
    with pytest.raises(ManifestError):
        load_suite(tmp_path / "nope.yaml")


def test_result_rows_never_carry_partial_metrics():
    m = MetricsRecord(1.0, 0, 1.0, 1.0, 0.5, 0.5)
    with pytest.raises(ValueError):
        ResultRow("a", "l", "x:y", Status.COMPILE_BUDGET_EXCEEDED, m)
    with pytest.raises(ValueError):
        ResultRow("a", "l", "x:y", Status.SUCCESS)


def test_row_store_last_row_wins_and_detects_corruption(tmp_path):
    store = RowStore(tmp_path)
    store.append(ResultRow("a", "l", "x:y", Status.BACKEND_ERROR, None, "h1"))
    store.append(ResultRow("a", "l", "x:y", Status.EXTRACTION_FAILED, None, "h1"))
    store.append(ResultRow("b", "l", "x:y", Status.EXTRACTION_FAILED, None, "h1"))
    rows = store.load()
    assert len(rows) == 2 and rows[0].status is Status.EXTRACTION_FAILED
    with open(store.path, "a") as fh:
        fh.write("{not json\n")
    with pytest.raises(ValueError, match="corrupt"):
        store.load()


def test_fixture_matrix_shape():
    rows = fixtures.reference_rows()
    assert len(rows) == 80
    assert len({r.key for r in rows}) == 80
    assert {r.direction for r in rows} == {"openmp:cuda", "cuda:openmp"}
    assert {r.llm_name for r in rows} == set(fixtures.LLM_ORDER)


def test_fixture_summaries():
    s = summarize(fixtures.reference_rows("openmp:cuda"))
    assert (s.n_success, s.n_total, round(s.success_rate, 1)) == (32, 40, 80.0)
    assert (s.n_first_attempt, round(s.pct_first_attempt, 1)) == (21, 65.6)
    s = summarize(fixtures.reference_rows("cuda:openmp"))
    assert (s.n_success, s.n_total, round(s.success_rate, 1)) == (34, 40, 85.0)
    assert s.n_first_attempt in (18, 19)


def test_failures_per_llm_match_table_na_counts():
    na = {}
    for r in fixtures.reference_rows("openmp:cuda"):
        na[r.llm_name] = na.get(r.llm_name, 0) + (not r.ok)
    assert na == {"GPT-4": 3, "Codestral": 1, "Wizard Coder": 1, "DeepSeek Coder v2": 3}


@settings(max_examples=30)
@given(st.randoms(use_true_random=False))
def test_summarize_is_permutation_invariant(rnd):
    rows = fixtures.reference_rows()
    shuffled = rows[:]
    rnd.shuffle(shuffled)
    for metric in bench.SIM_METRICS:
        assert summarize(rows, sim_metric=metric) == summarize(shuffled, sim_metric=metric)


def test_summary_percentages_are_bounded():
    for t in (0.5, 0.9091, 1.0, 2.0):
        s = summarize(fixtures.reference_rows(), runtime_threshold=t, sim_threshold=t / 2)
        for v in (s.success_rate, s.pct_within_runtime_threshold, s.pct_similar, s.pct_first_attempt):
            assert 0.0 <= v <= 100.0
    with pytest.raises(ValueError):
        summarize([])


def test_render_examples():
    rows = fixtures.reference_rows()
    md = render_report(rows, "markdown")
    assert "| matrix-rotate | GPT-4 | 1.2039 | 1.0333 |" in md
    assert "### openmp to cuda" in md and "### cuda to openmp" in md
    failed = next(r for r in rows if not r.ok)
    line = next(ln for ln in render_report([failed], "csv").splitlines()[1:])
    assert line.split(",")[3:8] == ["N/A"] * 5
    assert render_report([], "csv") == ",".join(bench.CSV_COLUMNS) + "\n"
    parsed = json.loads(render_report(rows, "json"))
    assert len(parsed) == 80
    with pytest.raises(ValueError):
        render_report(rows, "html")


def test_render_without_timing_drops_timing_columns():
    csv_text = render_report(fixtures.reference_rows(), "csv", include_timing=False)
    assert csv_text.splitlines()[0] == "app,llm,direction,sim_t,sim_l,self_corr,status"


@needs_gxx
def test_run_matrix_and_resume(tmp_path, monkeypatch):
    cfg_path = write_desk_config(tmp_path, [scripted_llm()])
    config = load_config(cfg_path)
    manifest = load_suite(config.manifest)
    out = tmp_path / "out"
    rows = run_matrix(manifest, config, ["scripted"], [SERIAL_TO_OMP], out)
    assert [(r.app_name, r.status, r.metrics.self_corr) for r in rows] == [
        ("vecadd", Status.SUCCESS, 1), ("sumsq", Status.SUCCESS, 0)]
    assert (out / "sessions" / "scripted" / "serial_to_omp" / "vecadd" / "metadata.json").exists()

    calls = []
    real = bench.run_pipeline
    monkeypatch.setattr(bench, "run_pipeline", lambda *a, **k: calls.append(a) or real(*a, **k))
    again = run_matrix(manifest, config, ["scripted"], [SERIAL_TO_OMP], out)
    assert calls == [] and again == rows

    # Changing the loop config changes the cell hash, so the cells rerun.
    run_matrix(manifest, config.with_loop(max_self_corr=5), ["scripted"], [SERIAL_TO_OMP], out)
    assert len(calls) == 2


@needs_gxx
def test_run_matrix_backend_errors_become_rows_and_are_retried(tmp_path, monkeypatch):
    short = scripted_llm(replies_by_task={"vecadd": ["only one reply"], "sumsq": []})
    config = load_config(write_desk_config(tmp_path, [short]))
    manifest = load_suite(config.manifest)
    rows = run_matrix(manifest, config, ["scripted"], [SERIAL_TO_OMP], tmp_path / "out")
    assert {r.status for r in rows} == {Status.BACKEND_ERROR}
    assert all(r.metrics is None for r in rows)

    calls = []
    real = bench.run_pipeline
    monkeypatch.setattr(bench, "run_pipeline", lambda *a, **k: calls.append(a) or real(*a, **k))
    run_matrix(manifest, config, ["scripted"], [SERIAL_TO_OMP], tmp_path / "out")
    assert len(calls) == 2
