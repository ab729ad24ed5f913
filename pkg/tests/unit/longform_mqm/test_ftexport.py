"""Tests for fine-tuning data export."""

import json

import pytest

from longform_mqm.corpus import build_granularity
from longform_mqm.ftexport import FT_PROMPT, build_ft_examples, export_ft
from longform_mqm.models import GoldSpan, Granularity, ParseStatus, Segment, Severity
from longform_mqm.parsing import parse_mqm_response
from longform_mqm.prompting import render_gemba


@pytest.fixture
def toy_corpus():
    """2 documents x 2 segments x 1 system, all annotated."""
    return [
        Segment(
            doc_id=f"doc-{d}",
            seg_index=i,
            src=f"quelle {d} {i}",
            lp="en-de",
            translations={"sys-a": f"target {d} {i}"},
            gold={"sys-a": [GoldSpan(start=0, end=6, severity=Severity.MINOR, category="style")] if i else []},
        )
        for d in range(2)
        for i in range(2)
    ]


def test_toy_counts(toy_corpus):
    examples, skipped = build_ft_examples(toy_corpus, group_size=5)
    counts = {g: sum(e.granularity == g for e in examples) for g in Granularity}
    assert counts == {Granularity.SEG: 4, Granularity.DOC: 2, Granularity.DOC5: 0}
    assert skipped == {"seg": 0, "doc": 0, "doc5": 0}


def test_assistant_turns_reparse_cleanly(small_corpus):
    examples, _ = build_ft_examples(small_corpus)
    assert examples
    for example in examples:
        system, user, assistant = example.messages
        assert parse_mqm_response(assistant.content).parse_status == ParseStatus.CLEAN
        assert "explanation" not in assistant.content
        assert "quality_score" not in assistant.content
        assert user.content.startswith("Please score the following input")


def test_messages_are_the_zero_shot_prompt(toy_corpus):
    examples, _ = build_ft_examples(toy_corpus)
    (unit,) = [u for u in build_granularity(toy_corpus, Granularity.DOC) if u.unit_id == "doc/en-de/doc-0/sys-a"]
    bundle = render_gemba(unit, FT_PROMPT)
    doc_example = next(e for e in examples if e.granularity == Granularity.DOC)
    assert [m.content for m in doc_example.messages[:2]] == [bundle.shared_prefix, bundle.suffix]
    assert json.loads(doc_example.messages[2].content)["errors"][0]["error_span"] == "target"


def test_counts_follow_units_with_gold(small_corpus):
    examples, _ = build_ft_examples(small_corpus, group_size=5, seed=7)
    for level in Granularity:
        expected = sum(u.has_gold for u in build_granularity(small_corpus, level, group_size=5, seed=7))
        assert sum(e.granularity == level for e in examples) == expected


def test_unannotated_units_are_left_out(toy_corpus):
    toy_corpus[0] = toy_corpus[0].model_copy(update={"gold": {}})
    examples, _ = build_ft_examples(toy_corpus)
    assert sum(e.granularity == Granularity.SEG for e in examples) == 3
    assert sum(e.granularity == Granularity.DOC for e in examples) == 1


def test_empty_translation_is_skipped(toy_corpus):
    toy_corpus[0] = toy_corpus[0].model_copy(update={"translations": {"sys-a": ""}})
    _, skipped = build_ft_examples(toy_corpus)
    assert skipped["seg"] == 1


def test_export_writes_messages_and_stats(tmp_path, toy_corpus):
    stats = export_ft(toy_corpus, tmp_path, group_size=5, seed=7)
    lines = (tmp_path / "ft.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 6
    first = json.loads(lines[0])
    assert list(first) == ["messages"]
    assert [m["role"] for m in first["messages"]] == ["system", "user", "assistant"]
    on_disk = json.loads((tmp_path / "ft_stats.json").read_text())
    assert on_disk == stats
    assert stats["counts"] == {"seg": 4, "doc": 2, "doc5": 0}
    assert (stats["total"], stats["epochs_note"]) == (6, "2 epochs")
