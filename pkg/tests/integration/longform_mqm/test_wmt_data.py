"""Checks against the WMT MQM corpora; skipped unless the files are present."""

import os
from collections import Counter

import pytest

from longform_mqm.corpus import build_granularity, corpus_stats, import_corpus
from longform_mqm.ftexport import build_ft_examples
from longform_mqm.models import Granularity
from longform_mqm.tokens import get_counter

WMT23_TRAIN = os.getenv("LONGFORM_MQM_WMT23")
WMT24_TEST = os.getenv("LONGFORM_MQM_WMT24")


@pytest.mark.skipif(not WMT23_TRAIN or not os.path.exists(WMT23_TRAIN), reason="LONGFORM_MQM_WMT23 not set")
def test_wmt23_fine_tuning_counts():
    segments = import_corpus(WMT23_TRAIN, "wmt_tagged")
    examples, _ = build_ft_examples(segments, group_size=5, seed=7)
    counts = Counter(e.granularity for e in examples)
    assert (counts[Granularity.SEG], counts[Granularity.DOC], counts[Granularity.DOC5]) == (35472, 6530, 1305)


@pytest.mark.skipif(not WMT24_TEST or not os.path.exists(WMT24_TEST), reason="LONGFORM_MQM_WMT24 not set")
def test_wmt24_token_statistics():
    pytest.importorskip("tiktoken")
    segments = import_corpus(WMT24_TEST, "wmt_tagged")
    counter = get_counter("tiktoken")
    expected = {Granularity.SEG: 102.5, Granularity.DOC: 506.9, Granularity.DOC5: 2712.5}
    for level, mean in expected.items():
        units = build_granularity(segments, level, group_size=5, seed=7)
        (row,) = [r for r in corpus_stats(units, counter) if r.granularity == level]
        assert row.mean_tokens == pytest.approx(mean, rel=0.01)
