"""Exception hierarchy for the evaluation harness."""

from __future__ import annotations

from typing import Optional


class LongformMqmError(Exception):
    """Base class of every error raised by the harness."""


class ConfigError(LongformMqmError):
    """Invalid configuration file or flag override."""


class CorpusError(LongformMqmError):
    """Malformed corpus input or a broken granularity invariant."""


class PromptError(LongformMqmError):
    """A prompt could not be rendered for the given unit and options."""


class BackendError(LongformMqmError):
    """A completion failed after all retries."""

    def __init__(
        self, message: str, *, status: Optional[int] = None, unit_id: Optional[str] = None
    ):
        super().__init__(message)
        self.status = status
        self.unit_id = unit_id

    def __str__(self) -> str:
        base = super().__str__()
        return f"{base} (status={self.status}, unit_id={self.unit_id})"


class CacheCorruptionError(LongformMqmError):
    """A cached response exists but cannot be trusted."""


class ScoringError(LongformMqmError):
    """Scores cannot be aggregated from the given inputs."""


class MetaEvalError(LongformMqmError):
    """Meta-evaluation inputs are inconsistent."""


class ManifestError(LongformMqmError):
    """Run artifacts are missing or belong to different runs."""


class RecordError(LongformMqmError):
    """A JSONL line that is not valid UTF-8 or not valid JSON."""

    def __init__(self, path: str, lineno: int, reason: str):
        super().__init__(f"{path}: line {lineno}: {reason}")
        self.path = path
        self.lineno = lineno
        self.reason = reason
