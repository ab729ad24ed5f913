"""Token counters used for statistics, simulator lengths and response lengths."""

from __future__ import annotations

import logging
from typing import Protocol

logger = logging.getLogger(__name__)


class TokenCounter(Protocol):
    """Maps a string to a non-negative token count."""

    name: str

    def __call__(self, text: str) -> int: ...


class WhitespaceCounter:
    """Default counter: whitespace tokenization."""

    name = "whitespace"

    def __call__(self, text: str) -> int:
        return len(text.split())


class TiktokenCounter:
    """GPT-4o compatible counter backed by tiktoken (optional dependency)."""

    def __init__(self, encoding: str = "o200k_base"):
        try:
            import tiktoken
        except ImportError as e:  # no cov
            raise ImportError(
                "tiktoken is not installed; install the 'tiktoken' extra"
            ) from e
        self._encoding = tiktoken.get_encoding(encoding)
        self.name = f"tiktoken:{encoding}"

    def __call__(self, text: str) -> int:
        return len(self._encoding.encode(text, disallowed_special=()))


def get_counter(name: str = "whitespace") -> TokenCounter:
    """Resolve a counter by name (``whitespace`` or ``tiktoken[:encoding]``)."""
    if name == "whitespace":
        return WhitespaceCounter()
    if name.startswith("tiktoken"):
        _, _, encoding = name.partition(":")
        return TiktokenCounter(encoding or "o200k_base")
    raise ValueError(f"Unknown token counter: {name}")
