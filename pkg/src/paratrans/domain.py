"""Core value types shared across the pipeline.

Everything here is a frozen dataclass. Code is plain text throughout; nothing
parses it.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional


class ConfigError(ValueError):
    """Raised for malformed configuration (language specs, profiles, loop settings)."""


class Status(str, enum.Enum):
    SUCCESS = "Success"
    COMPILE_BUDGET_EXCEEDED = "CompileBudgetExceeded"
    EXEC_BUDGET_EXCEEDED = "ExecBudgetExceeded"
    EXTRACTION_FAILED = "ExtractionFailed"
    BASELINE_FAILED = "BaselineFailed"
    CONTEXT_OVERFLOW = "ContextOverflow"
    # Only produced by the bench harness when the model endpoint itself fails.
    BACKEND_ERROR = "BackendError"
    # Imported result rows that record a failure without saying which kind.
    NOT_AVAILABLE = "N/A"


class Verdict(str, enum.Enum):
    MATCH = "Match"
    MISMATCH = "Mismatch"
    UNCHECKED = "Unchecked"


def _placeholder_count(template: str, name: str) -> int:
    return template.count("{" + name + "}")


@dataclass(frozen=True)
class KnowledgeAsset:
    language: str
    text: str
    token_count: int = -1

    def __post_init__(self) -> None:
        from .llm import estimate_tokens

        expected = estimate_tokens(self.text)
        if self.token_count == -1:
            object.__setattr__(self, "token_count", expected)
        elif self.token_count != expected:
            raise ConfigError(
                f"knowledge asset for {self.language!r}: token_count {self.token_count} "
                f"!= estimate {expected}"
            )

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class LanguageSpec:
    """How to build and run one language.

    ``compile_cmd`` and ``run_cmd`` are argv templates. They are split with
    shell rules first, then each argument has ``{src}``/``{out}``/``{bin}``
    substituted; an argument that is exactly ``{args}`` expands to the runtime
    arguments.
    """

    name: str
    file_extension: str
    compile_cmd: str
    run_cmd: str = "{bin} {args}"
    knowledge_asset: Optional[KnowledgeAsset] = None
    env: dict[str, str] = field(default_factory=dict, compare=False)

    @property
    def ext(self) -> str:
        return self.file_extension if self.file_extension.startswith(".") else "." + self.file_extension


def language_spec_errors(spec: LanguageSpec) -> list[str]:
    errors = []
    if not spec.name or not spec.name.strip():
        errors.append("name is empty")
    for key in ("src", "out"):
        n = _placeholder_count(spec.compile_cmd, key)
        if n == 0:
            errors.append(f"compile_cmd missing {{{key}}}")
        elif n > 1:
            errors.append(f"compile_cmd has {n} {{{key}}} placeholders, expected exactly one")
    n = _placeholder_count(spec.run_cmd, "bin")
    if n == 0:
        errors.append("run_cmd missing {bin}")
    elif n > 1:
        errors.append(f"run_cmd has {n} {{bin}} placeholders, expected exactly one")
    return errors


def validate_language_spec(spec: LanguageSpec) -> None:
    """Raise :class:`ConfigError` listing every violated invariant of *spec*."""
    errors = language_spec_errors(spec)
    if errors:
        raise ConfigError(f"language {spec.name!r}: " + "; ".join(errors))


@dataclass(frozen=True)
class LlmProfile:
    name: str
    model_id: str
    context_length: int
    max_response_tokens: int
    backend: dict[str, Any] = field(default_factory=lambda: {"kind": "scripted"}, compare=False)
    temperature: float = 0.2

    def __post_init__(self) -> None:
        if not self.name:
            raise ConfigError("llm profile name is empty")
        if self.context_length <= 0:
            raise ConfigError(f"llm {self.name!r}: context_length must be positive")
        if not 0 < self.max_response_tokens < self.context_length:
            raise ConfigError(
                f"llm {self.name!r}: max_response_tokens must be in (0, context_length)"
            )
        if self.temperature < 0:
            raise ConfigError(f"llm {self.name!r}: temperature must be >= 0")


@dataclass(frozen=True)
class Direction:
    source: str
    target: str

    def __post_init__(self) -> None:
        if self.source == self.target:
            raise ConfigError(f"direction source and target are both {self.source!r}")

    def __str__(self) -> str:
        return f"{self.source}:{self.target}"

    @classmethod
    def parse(cls, text: str) -> "Direction":
        for sep in (":", "->"):
            if sep in text:
                src, tgt = text.split(sep, 1)
                return cls(src.strip(), tgt.strip())
        raise ConfigError(f"cannot parse direction {text!r}; expected SOURCE:TARGET")


@dataclass(frozen=True)
class TranslationTask:
    app_name: str
    source: LanguageSpec
    target: LanguageSpec
    source_code: str
    llm: LlmProfile
    runtime_args: tuple[str, ...] = ()
    reference_target_code: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.source_code.strip():
            raise ConfigError(f"task {self.app_name!r}: source code is empty")
        if self.source.name == self.target.name:
            raise ConfigError(f"task {self.app_name!r}: source and target language are identical")
        object.__setattr__(self, "runtime_args", tuple(str(a) for a in self.runtime_args))

    @property
    def direction(self) -> Direction:
        return Direction(self.source.name, self.target.name)


@dataclass(frozen=True)
class ToolResult:
    kind: str  # "compile" | "execute"
    exit_ok: bool
    stdout: str = ""
    stderr: str = ""
    wall_time_s: float = 0.0
    timed_out: bool = False
    returncode: Optional[int] = None
    command: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("compile", "execute"):
            raise ValueError(f"unknown ToolResult kind {self.kind!r}")
        if self.timed_out and self.exit_ok:
            raise ValueError("a timed-out step cannot be exit_ok")
        if self.wall_time_s < 0:
            raise ValueError("wall_time_s must be nonnegative")
        object.__setattr__(self, "command", tuple(self.command))

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ToolResult":
        return cls(**{**d, "command": tuple(d.get("command", ()))})


@dataclass(frozen=True)
class MetricsRecord:
    """Per-translation evaluation numbers.

    Source runtime, ratio and the similarity scores are ``None`` when no
    reference implementation in the target language was available.
    """

    runtime_generated_s: float
    self_corr: int
    runtime_source_s: Optional[float] = None
    ratio: Optional[float] = None
    sim_t: Optional[float] = None
    sim_l: Optional[float] = None
    output_verdict: Verdict = Verdict.UNCHECKED

    def __post_init__(self) -> None:
        object.__setattr__(self, "output_verdict", Verdict(self.output_verdict))
        if self.runtime_generated_s < 0 or self.self_corr < 0:
            raise ValueError("runtimes and self_corr must be nonnegative")
        if self.runtime_source_s is not None and self.runtime_source_s < 0:
            raise ValueError("runtime_source_s must be nonnegative")
        for name in ("sim_t", "sim_l"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.ratio is not None:
            if self.ratio < 0:
                raise ValueError("ratio must be nonnegative")
            if self.runtime_source_s is not None and self.runtime_generated_s > 0:
                if not math.isclose(
                    self.ratio * self.runtime_generated_s, self.runtime_source_s, rel_tol=1e-9
                ):
                    raise ValueError("ratio inconsistent with runtimes")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["output_verdict"] = self.output_verdict.value
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MetricsRecord":
        return cls(**d)


@dataclass(frozen=True)
class TranscriptEntry:
    """One prompt/response exchange. ``kind`` says why the prompt was sent."""

    kind: str  # knowledge_summary | describe_source | translate | compile_error | exec_error | extraction_retry
    system: Optional[str]
    prompt: str
    response: str
    timestamp: str

    CORRECTION_KINDS = frozenset({"compile_error", "exec_error"})

    @property
    def is_correction(self) -> bool:
        return self.kind in self.CORRECTION_KINDS


@dataclass(frozen=True)
class Attempt:
    """One generated code version and the build steps run on it."""

    index: int
    code_file: str
    code: str
    compile: ToolResult
    execute: Optional[ToolResult] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "code_file": self.code_file,
            "code": self.code,
            "compile": asdict(self.compile),
            "execute": asdict(self.execute) if self.execute else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Attempt":
        return cls(
            index=d["index"],
            code_file=d["code_file"],
            code=d["code"],
            compile=ToolResult.from_dict(d["compile"]),
            execute=ToolResult.from_dict(d["execute"]) if d.get("execute") else None,
        )


_ATTEMPT_OPTIONAL = {Status.BASELINE_FAILED, Status.CONTEXT_OVERFLOW, Status.EXTRACTION_FAILED}


@dataclass(frozen=True)
class SessionRecord:
    app_name: str
    direction: str
    llm_name: str
    status: Status
    transcript: tuple[TranscriptEntry, ...] = ()
    attempts: tuple[Attempt, ...] = ()
    self_corr: int = 0
    final_code: Optional[str] = None
    final_stdout: Optional[str] = None
    metrics: Optional[MetricsRecord] = None
    detail: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "status", Status(self.status))
        object.__setattr__(self, "transcript", tuple(self.transcript))
        object.__setattr__(self, "attempts", tuple(self.attempts))
        n_corr = sum(1 for e in self.transcript if e.is_correction)
        if self.self_corr != n_corr:
            raise ValueError(f"self_corr {self.self_corr} != {n_corr} correction prompts")
        if self.status is Status.SUCCESS and (self.final_code is None or self.final_stdout is None):
            raise ValueError("successful session needs final_code and final_stdout")
        if not self.attempts and self.status not in _ATTEMPT_OPTIONAL:
            raise ValueError(f"status {self.status.value} requires at least one attempt")

    def to_dict(self) -> dict[str, Any]:
        return {
            "app_name": self.app_name,
            "direction": self.direction,
            "llm_name": self.llm_name,
            "status": self.status.value,
            "self_corr": self.self_corr,
            "transcript": [asdict(e) for e in self.transcript],
            "attempts": [a.to_dict() for a in self.attempts],
            "final_code": self.final_code,
            "final_stdout": self.final_stdout,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SessionRecord":
        return cls(
            app_name=d["app_name"],
            direction=d["direction"],
            llm_name=d["llm_name"],
            status=Status(d["status"]),
            transcript=tuple(TranscriptEntry(**e) for e in d["transcript"]),
            attempts=tuple(Attempt.from_dict(a) for a in d["attempts"]),
            self_corr=d["self_corr"],
            final_code=d.get("final_code"),
            final_stdout=d.get("final_stdout"),
            metrics=MetricsRecord.from_dict(d["metrics"]) if d.get("metrics") else None,
            detail=d.get("detail"),
        )
