"""Pull the generated program out of a free-form model reply."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

_FENCE = re.compile(r"```([^\n`]*)\n(.*?)\n?```", re.DOTALL)
_CODE_LINE_ENDINGS = (";", "{", "}")
FALLBACK_MIN_FRACTION = 0.6


class ExtractionFailed(ValueError):
    pass


@dataclass(frozen=True)
class ExtractedCode:
    code: str
    fence_language_tag: Optional[str]
    block_index: int
    total_blocks: int

    def __post_init__(self) -> None:
        if not self.code:
            raise ValueError("extracted code is empty")
        if not 0 <= self.block_index < self.total_blocks:
            raise ValueError("block_index out of range")


def _looks_like_code(text: str) -> bool:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        return False
    codey = sum(1 for ln in lines if ln.endswith(_CODE_LINE_ENDINGS) or ln.startswith("#"))
    return codey >= FALLBACK_MIN_FRACTION * len(lines)


def extract_code(response_text: str) -> ExtractedCode:
    """Return the longest triple-backtick block in *response_text*.

    Ties go to the earliest block. When the reply has no fence at all but at
    least 60% of its nonblank lines look like C-family code (ending in ``;``,
    ``{`` or ``}``, or starting with ``#``), the whole reply is taken as the
    program.
    """
    blocks = [(m.group(1).strip() or None, m.group(2)) for m in _FENCE.finditer(response_text)]
    blocks = [(tag.split()[0] if tag else None, code) for tag, code in blocks if code.strip()]
    if blocks:
        best = max(range(len(blocks)), key=lambda i: (len(blocks[i][1]), -i))
        tag, code = blocks[best]
        return ExtractedCode(code, tag, best, len(blocks))
    if "```" not in response_text and _looks_like_code(response_text):
        return ExtractedCode(response_text.strip("\n"), None, 0, 1)
    raise ExtractionFailed("no fenced code block found and the reply does not look like code")
