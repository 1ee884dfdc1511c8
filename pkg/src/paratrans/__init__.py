"""Self-correcting LLM translation of parallel programs between languages."""

from .domain import (
    ConfigError,
    Direction,
    KnowledgeAsset,
    LanguageSpec,
    LlmProfile,
    MetricsRecord,
    SessionRecord,
    Status,
    ToolResult,
    TranslationTask,
    Verdict,
    validate_language_spec,
)
from .extract import ExtractedCode, ExtractionFailed, extract_code
from .llm import ContextOverflow, HttpBackend, ScriptedBackend, ScriptExhausted, complete, estimate_tokens
from .loop import LoopConfig, run_pipeline
from .metrics import compare_output, runtime_ratio, sim_l, sim_t, tokenize_code

__version__ = "0.1.0"
