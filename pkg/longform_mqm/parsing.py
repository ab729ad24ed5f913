"""Parsing, normalization and serialization of MQM JSON responses."""

from __future__ import annotations

import json
import logging
import math
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from longform_mqm.models import (
    ErrorAnnotation,
    ErrorCategory,
    GoldSpan,
    ParsedResponse,
    ParseStatus,
    Severity,
)

logger = logging.getLogger(__name__)

_SEVERITIES = {s.value: s for s in Severity}
_CATEGORIES = {c.value: c for c in ErrorCategory}


def extract_json_object(text: str) -> Optional[str]:
    """
    Return the first balanced top-level ``{...}`` in ``text``.

    Braces inside JSON strings are ignored. Code fences and surrounding prose
    are skipped because only the object itself is returned.
    """
    start = text.find("{")
    if start < 0:
        return None
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def _as_raw(item: Union[ErrorAnnotation, Dict[str, Any]]) -> Any:
    if isinstance(item, ErrorAnnotation):
        raw: Dict[str, Any] = {
            "error_span": item.span_text,
            "error_category": item.category.value,
            "error_type": item.error_type,
            "severity": item.severity.value,
        }
        if item.explanation is not None:
            raw["explanation"] = item.explanation
        return raw
    return item


def normalize(errors: Iterable[Union[ErrorAnnotation, Dict[str, Any]]]) -> Tuple[List[ErrorAnnotation], int]:
    """
    Normalize raw annotations.

    Trims span text, case-folds severity and category, maps a missing
    ``error_span`` to an omission and drops annotations whose severity or
    category cannot be mapped.

    Returns:
        Tuple of the kept annotations and the number dropped
    """
    kept: List[ErrorAnnotation] = []
    dropped = 0
    for item in errors:
        raw = _as_raw(item)
        if not isinstance(raw, dict):
            dropped += 1
            continue
        severity = _SEVERITIES.get(str(raw.get("severity", "")).strip().lower())
        if severity is None:
            dropped += 1
            continue
        category_raw = raw.get("error_category")
        if category_raw is None or str(category_raw).strip() == "":
            category = ErrorCategory.OTHER
        else:
            category = _CATEGORIES.get(str(category_raw).strip().lower())
            if category is None:
                dropped += 1
                continue
        span = raw.get("error_span")
        explanation = raw.get("explanation")
        kept.append(
            ErrorAnnotation(
                span_text="" if span is None else str(span).strip(),
                explanation=None if explanation is None else str(explanation),
                category=category,
                error_type=str(raw.get("error_type") or "").strip(),
                severity=severity,
            )
        )
    return kept, dropped


def _coerce_score(value: Any) -> Tuple[Optional[int], bool]:
    if value is None or isinstance(value, bool):
        return None, False
    if isinstance(value, str):
        try:
            value = float(value.strip())
        except ValueError:
            return None, False
    if not isinstance(value, (int, float)) or (isinstance(value, float) and not math.isfinite(value)):
        return None, False
    score = int(round(value))
    clamped = min(100, max(0, score))
    return clamped, clamped != score


def parse_mqm_response(text: str, expects_da: bool = False) -> ParsedResponse:
    """
    Parse a model response; never raises.

    Strict JSON is tried first, then a single balanced-object extraction.
    ``quality_score`` is kept only when the prompt asked for it.
    """
    raw_len = len(text)
    status = ParseStatus.CLEAN
    try:
        obj = json.loads(text.strip())
    except (json.JSONDecodeError, ValueError, RecursionError):
        candidate = extract_json_object(text)
        obj = None
        if candidate is not None:
            try:
                obj = json.loads(candidate)
                status = ParseStatus.RECOVERED
            except (json.JSONDecodeError, ValueError, RecursionError):
                obj = None

    if not isinstance(obj, dict) or not isinstance(obj.get("errors"), list):
        return ParsedResponse(parse_status=ParseStatus.FAILED, raw_len_chars=raw_len)

    errors, dropped = normalize(obj["errors"])
    quality_score, clamped = (None, False)
    if expects_da:
        quality_score, clamped = _coerce_score(obj.get("quality_score"))
    if dropped:
        logger.debug("Dropped %d unmappable annotations", dropped)
    return ParsedResponse(
        errors=errors,
        quality_score=quality_score,
        parse_status=status,
        raw_len_chars=raw_len,
        n_dropped=dropped,
        score_clamped=clamped,
    )


def serialize_response(
    errors: Sequence[ErrorAnnotation],
    with_explanations: bool = True,
    quality_score: Optional[int] = None,
) -> str:
    """Serialize annotations in the response schema, keys in schema order."""
    items = []
    for e in errors:
        item: Dict[str, Any] = {"error_span": e.span_text}
        if with_explanations and e.explanation is not None:
            item["explanation"] = e.explanation
        item["error_category"] = e.category.value
        item["error_type"] = e.error_type
        item["severity"] = e.severity.value
        items.append(item)
    body: Dict[str, Any] = {"errors": items}
    if quality_score is not None:
        body["quality_score"] = quality_score
    return json.dumps(body, indent=2, ensure_ascii=False)


def category_from_label(label: str) -> Tuple[ErrorCategory, str]:
    """Split a gold label such as ``Accuracy/Mistranslation`` into category and type."""
    head, _, tail = label.partition("/")
    category = _CATEGORIES.get(head.strip().lower(), ErrorCategory.OTHER)
    error_type = tail.strip().lower() if tail else (head.strip().lower() if category == ErrorCategory.OTHER else "")
    return category, error_type


def annotations_from_gold(tgt: str, gold: Sequence[GoldSpan]) -> List[ErrorAnnotation]:
    """Gold spans as annotations without explanations."""
    out = []
    for g in gold:
        category, error_type = category_from_label(g.category)
        out.append(
            ErrorAnnotation(
                span_text=tgt[g.start : g.end],
                category=category,
                error_type=error_type,
                severity=g.severity,
            )
        )
    return out
