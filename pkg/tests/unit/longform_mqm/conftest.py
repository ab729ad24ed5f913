"""Shared fixtures for the longform_mqm unit tests."""

from pathlib import Path
from typing import List

import pytest

from longform_mqm.models import GoldSpan, Segment, Severity
from longform_mqm.synthetic import make_corpus

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN_DIR


@pytest.fixture
def two_segment_doc() -> List[Segment]:
    """One document, two segments, one system; gold on both segments."""
    return [
        Segment(
            doc_id="doc-a",
            seg_index=0,
            src="der Hund",
            lp="en-de",
            translations={"sys-a": "the dog ran"},
            gold={"sys-a": [GoldSpan(start=4, end=7, severity=Severity.MINOR, category="accuracy")]},
        ),
        Segment(
            doc_id="doc-a",
            seg_index=1,
            src="die Katze",
            lp="en-de",
            translations={"sys-a": "cat sat."},
            gold={"sys-a": [GoldSpan(start=0, end=3, severity=Severity.MAJOR, category="fluency")]},
        ),
    ]


@pytest.fixture
def sentinel_doc() -> List[Segment]:
    """Three-segment document with sentinel texts for golden prompts."""
    return [
        Segment(
            doc_id="doc-a",
            seg_index=i,
            src=f"<<SRC-{i}>>",
            lp="en-de",
            translations={"sys-a": f"<<TGT-{i}>>"},
            gold={"sys-a": []},
        )
        for i in range(3)
    ]


@pytest.fixture
def small_corpus() -> List[Segment]:
    """10 synthetic documents, 3 systems."""
    return make_corpus(10, n_systems=3, seed=0)


@pytest.fixture
def corpus_50() -> List[Segment]:
    """50 synthetic documents, 3 systems (divisible into doc5 groups)."""
    return make_corpus(50, n_systems=3, seed=1)
