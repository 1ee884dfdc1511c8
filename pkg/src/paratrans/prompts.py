"""Prompt dictionary and prompt assembly.

The dictionary lives in a multi-document YAML file. The first document holds
the shared templates (general system prompt, the two correction templates,
the self-prompting requests and the assembly layout); every following
document describes one translation direction with ``source``, ``target``,
``system`` and ``translate`` keys. Adding a language pair is a config change.
"""

from __future__ import annotations

import string
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Optional, Union

import yaml

from .domain import ConfigError, Direction, KnowledgeAsset, LlmProfile
from .llm import (
    ChatRequest,
    ContextOverflow,
    build_request,
    check_budget,
    complete,
    estimate_tokens,
)

TRUNCATION_MARKER = "[...truncated]"
EMPTY_EXEC_STDERR = "process exited with nonzero status and empty stderr"
EMPTY_COMPILE_STDERR = "compiler exited with nonzero status and empty stderr"
TRANSLATION_LEAD = "Think carefully before developing the following code that you describe as: "

_ALLOWED_FIELDS = {
    "compile_error": {"code", "compiler_cmd", "stderr"},
    "exec_error": {"code", "compiler_cmd", "stderr"},
    "knowledge_summary": {"language", "knowledge"},
    "describe_source": {"language", "source_code"},
    "assembly": {"knowledge", "knowledge_summary", "description", "translation_prompt", "source_code"},
}
_REQUIRED_FIELDS = {
    "compile_error": {"code", "compiler_cmd", "stderr"},
    "exec_error": {"code", "compiler_cmd", "stderr"},
    "knowledge_summary": {"knowledge"},
    "describe_source": {"source_code"},
    "assembly": _ALLOWED_FIELDS["assembly"],
}

# Called with (kind, request, response_text) after every exchange.
Recorder = Callable[[str, ChatRequest, str], None]


class UnknownDirection(ConfigError, KeyError):
    pass


def _fields(template: str) -> set[str]:
    return {name for _, name, _, _ in string.Formatter().parse(template) if name is not None}


@dataclass(frozen=True)
class PromptDictionary:
    general_system_prompt: str
    compile_error_template: str
    exec_error_template: str
    knowledge_summary_template: str
    describe_source_template: str
    assembly_template: str
    system_prompts: Mapping[Direction, str] = field(default_factory=dict)
    translation_prompts: Mapping[Direction, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        templates = {
            "compile_error": self.compile_error_template,
            "exec_error": self.exec_error_template,
            "knowledge_summary": self.knowledge_summary_template,
            "describe_source": self.describe_source_template,
            "assembly": self.assembly_template,
        }
        for key, tmpl in templates.items():
            names = _fields(tmpl)
            unknown = names - _ALLOWED_FIELDS[key]
            missing = _REQUIRED_FIELDS[key] - names
            if unknown or missing:
                raise ConfigError(
                    f"prompt template {key!r}: unknown placeholders {sorted(unknown)}, "
                    f"missing {sorted(missing)}"
                )
        if set(self.system_prompts) != set(self.translation_prompts):
            raise ConfigError("every direction needs both a system and a translate prompt")

    @property
    def directions(self) -> list[Direction]:
        return list(self.system_prompts)

    @classmethod
    def from_yaml(cls, text: str) -> "PromptDictionary":
        docs = [d for d in yaml.safe_load_all(text) if d]
        if not docs:
            raise ConfigError("prompt dictionary is empty")
        glob, *per_direction = docs
        try:
            systems, translations = {}, {}
            for doc in per_direction:
                d = Direction(str(doc["source"]), str(doc["target"]))
                systems[d] = doc["system"]
                translations[d] = doc["translate"]
            return cls(
                general_system_prompt=glob["general_system"],
                compile_error_template=glob["compile_error"],
                exec_error_template=glob["exec_error"],
                knowledge_summary_template=glob["knowledge_summary"],
                describe_source_template=glob["describe_source"],
                assembly_template=glob["assembly"],
                system_prompts=systems,
                translation_prompts=translations,
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed prompt dictionary: missing key {exc}") from exc

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PromptDictionary":
        return cls.from_yaml(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def default(cls) -> "PromptDictionary":
        text = resources.files("paratrans").joinpath("data/prompts.yaml").read_text(encoding="utf-8")
        return cls.from_yaml(text)


def system_prompt(prompts: PromptDictionary, direction: Direction) -> str:
    try:
        return prompts.system_prompts[direction]
    except KeyError:
        raise UnknownDirection(str(direction)) from None


def translation_prompt(prompts: PromptDictionary, direction: Direction) -> str:
    try:
        return prompts.translation_prompts[direction]
    except KeyError:
        raise UnknownDirection(str(direction)) from None


class SummaryCache:
    """Knowledge summaries keyed by (backend, model, asset digest)."""

    def __init__(self) -> None:
        self._data: dict[tuple[str, str, str], str] = {}
        self._lock = threading.Lock()

    def get(self, key):
        return self._data.get(key)

    def put(self, key, value: str) -> str:
        with self._lock:
            return self._data.setdefault(key, value)

    def __len__(self) -> int:
        return len(self._data)


DEFAULT_SUMMARY_CACHE = SummaryCache()


def _ask(backend, profile: LlmProfile, user: str, system: Optional[str], kind: str, record: Optional[Recorder]) -> str:
    request = build_request(profile, [user], system)
    text = complete(backend, request, profile).text
    if record is not None:
        record(kind, request, text)
    return text


def summarize_knowledge(
    backend,
    profile: LlmProfile,
    prompts: PromptDictionary,
    asset: KnowledgeAsset,
    cache: Optional[SummaryCache] = DEFAULT_SUMMARY_CACHE,
    record: Optional[Recorder] = None,
) -> str:
    """Ask the model to restate a knowledge asset in its own words.

    Results are cached per backend endpoint, model and asset content, so a
    second call for the same triple costs no request.
    """
    key = (getattr(backend, "cache_key", repr(backend)), profile.model_id, asset.digest)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    user = prompts.knowledge_summary_template.format(language=asset.language, knowledge=asset.text)
    text = _ask(backend, profile, user, prompts.general_system_prompt, "knowledge_summary", record)
    return cache.put(key, text) if cache is not None else text


def describe_source(
    backend,
    profile: LlmProfile,
    prompts: PromptDictionary,
    source_code: str,
    language: str,
    record: Optional[Recorder] = None,
) -> str:
    if not source_code.strip():
        raise ValueError("cannot describe empty source code")
    user = prompts.describe_source_template.format(language=language, source_code=source_code)
    return _ask(backend, profile, user, prompts.general_system_prompt, "describe_source", record)


@dataclass(frozen=True)
class PromptBundle:
    knowledge_text: str
    knowledge_summary: str
    source_description: str
    translation_prompt: str
    source_code: str
    assembled: str
    token_estimate: int


def assemble_translation_prompt(
    prompts: PromptDictionary,
    knowledge_text: str,
    knowledge_summary: str,
    description: str,
    source_code: str,
    direction: Direction,
    profile: Optional[LlmProfile] = None,
) -> PromptBundle:
    """Build the four-part translation prompt.

    Order is knowledge, knowledge summary, source description, then the
    direction's translation request followed by the source code. With a
    *profile*, raises :class:`ContextOverflow` if the prompt plus the system
    prompt plus the response allowance does not fit.
    """
    parts = {
        "knowledge_text": knowledge_text,
        "knowledge_summary": knowledge_summary,
        "description": description,
        "source_code": source_code,
    }
    empty = [k for k, v in parts.items() if not v or not v.strip()]
    if empty:
        raise ValueError(f"empty prompt parts: {', '.join(empty)}")
    tprompt = translation_prompt(prompts, direction)
    assembled = prompts.assembly_template.format(
        knowledge=knowledge_text,
        knowledge_summary=knowledge_summary,
        description=description,
        translation_prompt=tprompt,
        source_code=source_code,
    )
    bundle = PromptBundle(
        knowledge_text=knowledge_text,
        knowledge_summary=knowledge_summary,
        source_description=description,
        translation_prompt=tprompt,
        source_code=source_code,
        assembled=assembled,
        token_estimate=estimate_tokens(assembled),
    )
    if profile is not None:
        request = build_request(profile, [assembled], system_prompt(prompts, direction))
        check_budget(profile, request)
    return bundle


def truncate_head(text: str, limit: int) -> str:
    """Keep the last *limit* characters of *text*, marking the cut."""
    if limit < 0 or len(text) <= limit:
        return text
    return TRUNCATION_MARKER + (text[-limit:] if limit else "")


def _render_correction(template: str, code: str, compiler_cmd: str, stderr: str, max_stderr_chars: Optional[int]) -> str:
    if max_stderr_chars is not None:
        stderr = truncate_head(stderr, max_stderr_chars)
    return template.format(code=code, compiler_cmd=compiler_cmd, stderr=stderr)


def compile_error_prompt(
    prompts: PromptDictionary,
    code: str,
    compiler_cmd: str,
    stderr: str,
    max_stderr_chars: Optional[int] = None,
) -> str:
    if not stderr:
        raise ValueError("compile error prompt needs nonempty stderr")
    return _render_correction(prompts.compile_error_template, code, compiler_cmd, stderr, max_stderr_chars)


def exec_error_prompt(
    prompts: PromptDictionary,
    code: str,
    compiler_cmd: str,
    stderr: str,
    max_stderr_chars: Optional[int] = None,
) -> str:
    return _render_correction(
        prompts.exec_error_template, code, compiler_cmd, stderr or EMPTY_EXEC_STDERR, max_stderr_chars
    )


def stderr_budget_chars(
    profile: LlmProfile, template: str, system: Optional[str], code: str, compiler_cmd: str
) -> int:
    """A quarter of what the context window has left once everything but stderr is in."""
    fixed = estimate_tokens(template.format(code=code, compiler_cmd=compiler_cmd, stderr=""))
    fixed += estimate_tokens(system or "")
    remaining = profile.context_length - profile.max_response_tokens - fixed
    # The default estimator counts four bytes per token.
    return max(0, remaining // 4) * 4


__all__ = [
    "ContextOverflow",
    "PromptBundle",
    "PromptDictionary",
    "SummaryCache",
    "UnknownDirection",
    "assemble_translation_prompt",
    "compile_error_prompt",
    "describe_source",
    "exec_error_prompt",
    "stderr_budget_chars",
    "summarize_knowledge",
    "system_prompt",
    "translation_prompt",
    "truncate_head",
]
