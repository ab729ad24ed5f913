"""Seeded synthetic corpora with gold MQM spans."""

from __future__ import annotations

import itertools
import logging
import random
from typing import List, Optional, Sequence, Tuple

from longform_mqm.models import GoldSpan, Segment, Severity

logger = logging.getLogger(__name__)

_SYLLABLES = ["ka", "lo", "mi", "ne", "ru", "ta", "vo", "se", "di", "pa", "zu", "fe"]
VOCABULARY = ["".join(p) for n in (2, 3) for p in itertools.product(_SYLLABLES, repeat=n)]

_CATEGORIES = ["accuracy", "fluency", "style", "terminology"]
_SEVERITY_MIX: Sequence[Tuple[Severity, float]] = (
    (Severity.MINOR, 0.5),
    (Severity.MAJOR, 0.4),
    (Severity.CRITICAL, 0.1),
)
_ERROR_SLOTS = 4


def default_error_rates(n_systems: int, low: float = 0.3, high: float = 0.5) -> List[float]:
    """Evenly spaced expected gold errors per segment, best system first."""
    if n_systems == 1:
        return [low]
    step = (high - low) / (n_systems - 1)
    return [round(low + i * step, 6) for i in range(n_systems)]


def _sentence(rng: random.Random, n_words: int) -> List[str]:
    return [rng.choice(VOCABULARY) for _ in range(n_words)]


def _severity(rng: random.Random) -> Severity:
    x = rng.random()
    acc = 0.0
    for severity, p in _SEVERITY_MIX:
        acc += p
        if x < acc:
            return severity
    return Severity.MINOR


def _gold_spans(rng: random.Random, words: List[str], rate: float, omission_rate: float) -> List[GoldSpan]:
    n_errors = sum(rng.random() < min(1.0, rate / _ERROR_SLOTS) for _ in range(_ERROR_SLOTS))
    if not n_errors:
        return []
    starts = []
    pos = 0
    for w in words:
        starts.append(pos)
        pos += len(w) + 1
    picked = sorted(rng.sample(range(len(words)), min(n_errors, len(words))))
    spans = []
    for i in picked:
        category = rng.choice(_CATEGORIES)
        severity = _severity(rng)
        if rng.random() < omission_rate:
            spans.append(GoldSpan(start=starts[i], end=starts[i], severity=severity, category=category, is_omission=True))
        else:
            spans.append(
                GoldSpan(start=starts[i], end=starts[i] + len(words[i]), severity=severity, category=category)
            )
    return spans


def make_corpus(
    n_docs: int,
    n_systems: int = 3,
    seed: int = 0,
    min_segments: int = 3,
    max_segments: int = 8,
    words_per_side: Tuple[int, int] = (40, 60),
    error_rates: Optional[Sequence[float]] = None,
    omission_rate: float = 0.1,
    lp: str = "en-de",
) -> List[Segment]:
    """
    Build a seeded corpus of ``n_docs`` documents translated by ``n_systems`` systems.

    Each segment pair carries roughly 100 whitespace tokens. System ``i``
    receives on average ``error_rates[i]`` gold errors per segment, so lower
    rates mean better systems.
    """
    rates = list(error_rates) if error_rates is not None else default_error_rates(n_systems)
    if len(rates) != n_systems:
        raise ValueError(f"expected {n_systems} error rates, got {len(rates)}")
    rng = random.Random(seed)
    systems = [f"sys-{i}" for i in range(n_systems)]
    segments: List[Segment] = []
    for d in range(n_docs):
        doc_id = f"synth-{d:04d}"
        for s in range(rng.randint(min_segments, max_segments)):
            src = " ".join(_sentence(rng, rng.randint(*words_per_side))) + "."
            translations = {}
            gold = {}
            for system_id, rate in zip(systems, rates):
                words = _sentence(rng, rng.randint(*words_per_side))
                translations[system_id] = " ".join(words) + "."
                gold[system_id] = _gold_spans(rng, words, rate, omission_rate)
            segments.append(
                Segment(doc_id=doc_id, seg_index=s, src=src, lp=lp, translations=translations, gold=gold)
            )
    logger.info("Generated %d synthetic segments over %d documents", len(segments), n_docs)
    return segments
