"""Evaluation metrics for a generated translation."""

from __future__ import annotations

import difflib
import math
import re
from collections import Counter
from typing import Iterable, Sequence

from .domain import Verdict

_TOKEN = re.compile(
    r"[A-Za-z_]\w*"  # identifiers and keywords
    r"|(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?\w*"  # numeric literals incl. suffixes / hex
    r"|\S"  # any other single non-space character
)
_NUMBER = re.compile(r"[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?")
DEFAULT_TIMING_PATTERNS = (r"[Tt]ime\D*?\d",)
NUMERIC_REL_TOL = 1e-6


def tokenize_code(code: str) -> list[str]:
    """Split *code* into identifier, number and single punctuation tokens.

    >>> tokenize_code("int a=b;")
    ['int', 'a', '=', 'b', ';']
    """
    return _TOKEN.findall(code)


def sequence_ratio(a: Sequence, b: Sequence) -> float:
    """Ratcliff/Obershelp ratio ``2M / (|a| + |b|)``; two empty sequences score 1.

    ``difflib.SequenceMatcher`` without junk heuristics is exactly the
    recursive longest-block matcher, picking the leftmost block in *a* and
    then in *b* on ties.
    """
    total = len(a) + len(b)
    if total == 0:
        return 1.0
    sm = difflib.SequenceMatcher(None, a, b, autojunk=False)
    matched = sum(block.size for block in sm.get_matching_blocks())
    return 2.0 * matched / total


def sim_t(code_a: str, code_b: str) -> float:
    return sequence_ratio(tokenize_code(code_a), tokenize_code(code_b))


def normalized_lines(code: str) -> list[str]:
    return [ln.strip() for ln in code.splitlines() if ln.strip()]


def line_ratio(lines_a: Iterable[str], lines_b: Iterable[str]) -> float:
    ca, cb = Counter(lines_a), Counter(lines_b)
    longest = max(sum(ca.values()), sum(cb.values()))
    if longest == 0:
        return 1.0
    return sum((ca & cb).values()) / longest


def sim_l(code_a: str, code_b: str) -> float:
    """Shared lines (as a multiset, order ignored) over the longer code's line count."""
    return line_ratio(normalized_lines(code_a), normalized_lines(code_b))


def runtime_ratio(source_runtime_s: float, generated_runtime_s: float) -> float:
    if not generated_runtime_s > 0:
        raise ValueError("generated runtime must be positive")
    if source_runtime_s < 0:
        raise ValueError("source runtime must be nonnegative")
    return source_runtime_s / generated_runtime_s


def _filtered_lines(text: str, patterns: Sequence[str]) -> list[str]:
    compiled = [re.compile(p) for p in patterns]
    return [ln.rstrip() for ln in text.splitlines() if not any(p.search(ln) for p in compiled)]


def _lines_equal(a: str, b: str, rel_tol: float) -> bool:
    if a == b:
        return True
    nums_a, nums_b = _NUMBER.findall(a), _NUMBER.findall(b)
    if len(nums_a) != len(nums_b) or _NUMBER.split(a) != _NUMBER.split(b):
        return False
    return all(math.isclose(float(x), float(y), rel_tol=rel_tol) for x, y in zip(nums_a, nums_b))


def compare_output(reference_stdout: str, generated_stdout: str, mode: str = "filtered",
                   timing_patterns: Sequence[str] = DEFAULT_TIMING_PATTERNS,
                   rel_tol: float = NUMERIC_REL_TOL) -> Verdict:
    """Compare two program outputs.

    ``exact`` demands byte equality. ``filtered`` drops lines that report
    timings, then compares line by line, treating numbers as equal within
    *rel_tol*.
    """
    if mode == "exact":
        return Verdict.MATCH if reference_stdout == generated_stdout else Verdict.MISMATCH
    if mode != "filtered":
        raise ValueError(f"unknown comparison mode {mode!r}")
    ref = _filtered_lines(reference_stdout, timing_patterns)
    gen = _filtered_lines(generated_stdout, timing_patterns)
    while ref and not ref[-1]:
        ref.pop()
    while gen and not gen[-1]:
        gen.pop()
    if len(ref) != len(gen):
        return Verdict.MISMATCH
    ok = all(_lines_equal(a, b, rel_tol) for a, b in zip(ref, gen))
    return Verdict.MATCH if ok else Verdict.MISMATCH
