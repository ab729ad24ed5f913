"""Deterministic JSON / JSONL artifact I/O."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Iterable, Iterator, List, Tuple, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from longform_mqm.errors import ManifestError, RecordError

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)

PathLike = Union[str, Path]


def dumps(data: Any) -> str:
    """Canonical JSON text: sorted keys, UTF-8 kept as is."""
    return json.dumps(data, sort_keys=True, ensure_ascii=False)


def _plain(item: Any) -> Any:
    return item.model_dump(mode="json") if isinstance(item, BaseModel) else item


def write_jsonl(path: PathLike, items: Iterable[Any]) -> int:
    """Write one canonical JSON object per line and return the line count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for item in items:
            f.write(dumps(_plain(item)))
            f.write("\n")
            n += 1
    return n


def iter_jsonl(path: PathLike) -> Iterator[Tuple[int, Any]]:
    """
    Yield ``(line_number, object)`` for every non-blank line.

    Lines are decoded one at a time so a bad byte is reported with its line.

    Raises:
        RecordError: If a line is not valid UTF-8 or not valid JSON
    """
    with open(path, "rb") as f:
        for lineno, raw in enumerate(f, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise RecordError(str(path), lineno, f"invalid UTF-8 at byte {e.start}") from e
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise RecordError(str(path), lineno, f"invalid JSON: {e.msg}") from e
            yield lineno, record


def read_jsonl(path: PathLike, model: Type[M]) -> List[M]:
    """
    Read a JSONL artifact into models.

    Raises:
        ManifestError: If a line is not valid JSON or does not validate
    """
    out: List[M] = []
    try:
        for lineno, record in iter_jsonl(path):
            try:
                out.append(model.model_validate(record))
            except ValidationError as e:
                raise ManifestError(f"{path}:{lineno}: schema mismatch: {e}") from e
    except RecordError as e:
        raise ManifestError(str(e)) from e
    return out


def write_json(path: PathLike, data: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(_plain(data), f, sort_keys=True, ensure_ascii=False, indent=2)
        f.write("\n")


def read_json(path: PathLike) -> Any:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: invalid JSON: {e.msg}") from e
    except UnicodeDecodeError as e:
        raise ManifestError(f"{path}: invalid UTF-8 at byte {e.start}") from e
