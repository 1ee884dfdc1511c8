"""Load the single YAML document that wires languages, models, prompts and loop settings.

Example::

    prompts: prompts.yaml            # optional, built-in dictionary otherwise
    manifest: suite.yaml             # optional default for translate/validate/bench
    languages:
      cuda:
        extension: .cu
        compile: "nvcc -O3 -arch=sm_80 -o {out} {src}"
        run: "{bin} {args}"
        knowledge: knowledge/cuda.txt
    llms:
      - name: gpt-4
        model_id: gpt-4-32k
        context_length: 32768
        max_response_tokens: 4096
        backend: {kind: http, url: "https://host/v1", api_key_env: OPENAI_API_KEY}
    loop: {max_self_corr: 50, exec_timeout_s: 300}
    resources: {accelerator: 1}

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .domain import ConfigError, KnowledgeAsset, LanguageSpec, LlmProfile, validate_language_spec
from .loop import LoopConfig
from .prompts import PromptDictionary
from .toolchain import configure_resource


@dataclass
class Config:
    languages: dict[str, LanguageSpec]
    llms: dict[str, LlmProfile]
    prompts: PromptDictionary
    loop: LoopConfig = field(default_factory=LoopConfig)
    manifest: Optional[Path] = None
    path: Optional[Path] = None

    def language(self, name: str) -> LanguageSpec:
        try:
            return self.languages[name]
        except KeyError:
            raise ConfigError(f"unknown language {name!r}; configured: {sorted(self.languages)}") from None

    def llm(self, name: str) -> LlmProfile:
        try:
            return self.llms[name]
        except KeyError:
            raise ConfigError(f"unknown llm {name!r}; configured: {sorted(self.llms)}") from None

    def with_loop(self, **overrides) -> "Config":
        data = {k: v for k, v in overrides.items() if v is not None}
        if not data:
            return self
        return Config(self.languages, self.llms, self.prompts,
                      LoopConfig(**{**asdict(self.loop), **data}), self.manifest, self.path)


def _resolve(base: Path, p: str) -> Path:
    path = Path(p).expanduser()
    return path if path.is_absolute() else base / path


def _language(name: str, d: dict[str, Any], base: Path) -> LanguageSpec:
    asset = None
    if d.get("knowledge"):
        kpath = _resolve(base, d["knowledge"])
        try:
            asset = KnowledgeAsset(name, kpath.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"language {name!r}: cannot read knowledge file {kpath}: {exc}") from exc
    try:
        spec = LanguageSpec(
            name=name,
            file_extension=d["extension"],
            compile_cmd=d["compile"],
            run_cmd=d.get("run", "{bin} {args}"),
            knowledge_asset=asset,
            env={str(k): str(v) for k, v in (d.get("env") or {}).items()},
        )
    except KeyError as exc:
        raise ConfigError(f"language {name!r}: missing key {exc}") from exc
    validate_language_spec(spec)
    return spec


def _llm(d: dict[str, Any]) -> LlmProfile:
    try:
        return LlmProfile(
            name=str(d["name"]),
            model_id=str(d.get("model_id", d["name"])),
            context_length=int(d["context_length"]),
            max_response_tokens=int(d["max_response_tokens"]),
            backend=dict(d.get("backend") or {"kind": "scripted"}),
            temperature=float(d.get("temperature", 0.2)),
        )
    except KeyError as exc:
        raise ConfigError(f"llm entry missing key {exc}") from exc


def parse_config(data: dict[str, Any], base: Path, path: Optional[Path] = None) -> Config:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    langs = data.get("languages") or {}
    if not langs:
        raise ConfigError("config declares no languages")
    languages = {str(name): _language(str(name), d or {}, base) for name, d in langs.items()}
    llm_list = data.get("llms") or []
    llms = {}
    for entry in llm_list:
        profile = _llm(entry)
        if profile.name in llms:
            raise ConfigError(f"duplicate llm name {profile.name!r}")
        llms[profile.name] = profile
    prompts = (PromptDictionary.load(_resolve(base, data["prompts"])) if data.get("prompts")
               else PromptDictionary.default())
    try:
        loop = LoopConfig(**(data.get("loop") or {}))
    except TypeError as exc:
        raise ConfigError(f"bad loop settings: {exc}") from exc
    for name, tokens in (data.get("resources") or {}).items():
        configure_resource(str(name), int(tokens))
    manifest = _resolve(base, data["manifest"]) if data.get("manifest") else None
    return Config(languages, llms, prompts, loop, manifest, path)


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return parse_config(data, path.parent.resolve(), path)


def fingerprint(*parts: Any) -> str:
    """Stable short hash of JSON-serializable parts."""
    blob = json.dumps(parts, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]
