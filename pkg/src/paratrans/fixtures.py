"""Reference HeCBench translation results (OpenMP offload <-> CUDA on an A100) as rows.

``reference_runtimes.csv`` holds the mean of three runs of each original
benchmark in both languages; ``reference_results.csv`` holds one line per
(direction, model, app) with the generated code's runtime, printed ratio,
similarity scores and correction count, ``N/A`` for failures.

One printed row is known to be wrong: the GPT-4 atomicCost OpenMP->CUDA
line repeats the layout line's ratio and similarity values. It is flagged
``erratum`` and excluded from ratio consistency checks.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from .bench import ResultRow
from .domain import Direction, MetricsRecord, Status
from .metrics import runtime_ratio

LLM_ORDER = ("GPT-4", "Codestral", "Wizard Coder", "DeepSeek Coder v2")
DIRECTION_ORDER = ("openmp:cuda", "cuda:openmp")


@dataclass(frozen=True)
class ReferenceRuntime:
    app: str
    category: str
    runtime_args: tuple[str, ...]
    runtime_s: dict[str, float]


@dataclass(frozen=True)
class FixtureRow:
    row: ResultRow
    printed_ratio: Optional[float]
    erratum: bool


def _read(name: str) -> list[dict[str, str]]:
    text = resources.files("paratrans").joinpath(f"data/{name}").read_text(encoding="utf-8")
    return list(csv.DictReader(io.StringIO(text)))


def load_reference_runtimes() -> dict[str, ReferenceRuntime]:
    out = {}
    for r in _read("reference_runtimes.csv"):
        out[r["app"]] = ReferenceRuntime(
            app=r["app"],
            category=r["category"],
            runtime_args=tuple(r["runtime_args"].split()),
            runtime_s={"cuda": float(r["cuda_s"]), "openmp": float(r["openmp_s"])},
        )
    return out


def load_reference_results() -> list[FixtureRow]:
    runtimes = load_reference_runtimes()
    rows = []
    for r in _read("reference_results.csv"):
        direction = Direction.parse(r["direction"])
        if r["runtime_s"] == "N/A":
            row = ResultRow(r["app"], r["llm"], str(direction), Status.NOT_AVAILABLE)
            rows.append(FixtureRow(row, None, False))
            continue
        generated = float(r["runtime_s"])
        source = runtimes[r["app"]].runtime_s[direction.target]
        metrics = MetricsRecord(
            runtime_generated_s=generated,
            runtime_source_s=source,
            ratio=runtime_ratio(source, generated),
            sim_t=float(r["sim_t"]),
            sim_l=float(r["sim_l"]),
            self_corr=int(r["self_corr"]),
        )
        row = ResultRow(r["app"], r["llm"], str(direction), Status.SUCCESS, metrics)
        rows.append(FixtureRow(row, float(r["ratio"]), r["erratum"].strip().lower() == "true"))
    return rows


def reference_rows(direction: Optional[str] = None) -> list[ResultRow]:
    return [f.row for f in load_reference_results() if direction is None or f.row.direction == direction]
