"""Tests for prompt rendering, demonstration selection and demo pools."""

import json
from collections import Counter

import pytest

from longform_mqm.corpus import build_granularity
from longform_mqm.errors import CorpusError, PromptError
from longform_mqm.models import (
    DecodingParams,
    Demonstration,
    EvalUnit,
    Granularity,
    ParseStatus,
    PromptFamily,
    PromptOptions,
)
from longform_mqm.parsing import parse_mqm_response
from longform_mqm.prompting import (
    build_demo_pool,
    language_names,
    load_demo_pool,
    load_gemba_demos,
    render_fsp,
    render_gemba,
    render_gmicl,
    select_gm_demos,
    write_demo_pool,
)

GEMBA_3 = PromptOptions(family=PromptFamily.GEMBA, n_shots=3, with_explanations=True, with_da=False)
GEMBA_0 = PromptOptions(family=PromptFamily.GEMBA, n_shots=0, with_explanations=False, with_da=True)
FSP_3 = PromptOptions(family=PromptFamily.FSP, n_shots=3, with_explanations=True, with_da=True)
GMICL_5 = PromptOptions(family=PromptFamily.GMICL, n_shots=5, with_explanations=True, with_da=True)

DEMO_ERROR = json.dumps(
    {"errors": [{"error_span": "DEMO-0", "error_category": "accuracy", "error_type": "mistranslation", "severity": "minor"}]}
)


def _unit(granularity=Granularity.SEG, src="<<SOURCE>>", tgt="<<TRANSLATION>>", unit_id="seg/en-de/doc-a#0/sys-a"):
    return EvalUnit(unit_id=unit_id, granularity=granularity, system_id="sys-a", lp="en-de", src=src, tgt=tgt)


def _sentinel_demos():
    return [
        Demonstration(
            demo_id=f"demo-{i}",
            src=f"<<DEMO-SRC-{i}>>",
            tgt=f"<<DEMO-TGT-{i}>>",
            gold_response=DEMO_ERROR if i == 0 else '{"errors": []}',
            granularity=Granularity.DOC,
        )
        for i in range(5)
    ]


def _pool(counts):
    pool = []
    for granularity, n in counts.items():
        for i in range(n):
            pool.append(
                Demonstration(
                    demo_id=f"{granularity.value}-{i:02d}",
                    src=f"src {i}",
                    tgt=f"tgt {i}",
                    gold_response='{"errors": []}',
                    granularity=granularity,
                    token_len=10 * (i + 1),
                )
            )
    return pool


class TestGoldenPrompts:
    """Rendered prompts match the committed golden files byte for byte."""

    def test_gemba_three_shot(self, golden_dir):
        bundle = render_gemba(_unit(), GEMBA_3)
        assert bundle.prompt == (golden_dir / "gemba_3shot.txt").read_text(encoding="utf-8")

    def test_gemba_zero_shot(self, golden_dir):
        bundle = render_gemba(_unit(), GEMBA_0)
        assert bundle.prompt == (golden_dir / "gemba_0shot_noexpl_da.txt").read_text(encoding="utf-8")

    def test_fsp(self, golden_dir, sentinel_doc):
        (doc_unit,) = build_granularity(sentinel_doc, Granularity.DOC)
        bundle = render_fsp(doc_unit, 1, FSP_3)
        assert bundle.prompt == (golden_dir / "fsp_3shot_focus1.txt").read_text(encoding="utf-8")

    def test_gmicl(self, golden_dir):
        unit = _unit(Granularity.DOC, unit_id="doc/en-de/doc-a/sys-a")
        bundle = render_gmicl(unit, _sentinel_demos(), GMICL_5)
        assert bundle.prompt == (golden_dir / "gmicl_5shot.txt").read_text(encoding="utf-8")


class TestGemba:
    def test_three_demonstration_blocks_before_scored_input(self):
        bundle = render_gemba(_unit(), GEMBA_3)
        assert bundle.shared_prefix.count("<input>") == 3
        assert bundle.suffix.count("<input>") == 1
        assert bundle.suffix.startswith("Please score the following input")

    def test_zero_shot_has_schema_only(self):
        bundle = render_gemba(_unit(), GEMBA_0)
        assert bundle.prompt.count("<input>") == 1
        assert "Please respond in JSON following this schema" in bundle.prompt
        assert bundle.expects_da

    def test_pure(self):
        assert render_gemba(_unit(), GEMBA_3) == render_gemba(_unit(), GEMBA_3)

    def test_cache_key_depends_on_prefix_only(self):
        one = render_gemba(_unit(tgt="a"), GEMBA_3)
        other = render_gemba(_unit(tgt="b"), GEMBA_3)
        assert one.cache_key == other.cache_key
        assert one.prompt != other.prompt

    def test_decoding_defaults_per_granularity(self):
        assert render_gemba(_unit(), GEMBA_3).decoding.max_output_tokens == 4096
        custom = DecodingParams(max_output_tokens=10)
        assert render_gemba(_unit(), GEMBA_3, custom).decoding == custom

    def test_wrong_family(self):
        with pytest.raises(PromptError):
            render_gemba(_unit(), FSP_3)

    def test_empty_translation(self):
        with pytest.raises(PromptError, match="empty translation"):
            render_gemba(_unit(tgt=""), GEMBA_3)

    def test_fixed_demos_parse_cleanly(self):
        demos = load_gemba_demos()
        assert [d.demo_id for d in demos] == ["gemba-en-de", "gemba-en-cs", "gemba-zh-en"]
        assert all(parse_mqm_response(d.gold_response).parse_status == ParseStatus.CLEAN for d in demos)


class TestFsp:
    def test_bundles_share_prefix_and_cache_key(self, sentinel_doc):
        (doc_unit,) = build_granularity(sentinel_doc, Granularity.DOC)
        bundles = [render_fsp(doc_unit, i, FSP_3) for i in range(3)]
        assert len({b.shared_prefix for b in bundles}) == 1
        assert len({b.cache_key for b in bundles}) == 1
        for i, b in enumerate(bundles):
            assert b.suffix.startswith(f"<target_segment><<TGT-{i}>></target_segment>")
        assert len({b.suffix for b in bundles}) == 3

    def test_single_segment_document(self, sentinel_doc):
        (doc_unit,) = build_granularity(sentinel_doc[:1], Granularity.DOC)
        bundle = render_fsp(doc_unit, 0, FSP_3)
        assert f"<target_segment>{doc_unit.tgt}</target_segment>" in bundle.suffix

    def test_part_outside_translation_is_corpus_error(self, sentinel_doc):
        (doc_unit,) = build_granularity(sentinel_doc, Granularity.DOC)
        broken = doc_unit.model_copy(update={"tgt": doc_unit.tgt[:5]})
        with pytest.raises(CorpusError, match="not found at its offset"):
            render_fsp(broken, 2, FSP_3)

    def test_focus_out_of_range(self, sentinel_doc):
        (doc_unit,) = build_granularity(sentinel_doc, Granularity.DOC)
        with pytest.raises(PromptError, match="out of range"):
            render_fsp(doc_unit, 3, FSP_3)


class TestSelectDemos:
    def test_bucket_filter(self):
        pool = _pool({Granularity.SEG: 10, Granularity.DOC: 10, Granularity.DOC5: 10})
        unit = _unit(Granularity.DOC5, unit_id="doc5/en-de/group-0000/sys-a")
        demos = select_gm_demos(pool, unit, k=5, seed=0)
        assert len(demos) == 5
        assert {d.granularity for d in demos} == {Granularity.DOC5}
        assert len({d.demo_id for d in demos}) == 5

    def test_deterministic(self):
        pool = _pool({Granularity.DOC: 10})
        unit = _unit(Granularity.DOC, unit_id="doc/en-de/d/sys-a")
        assert select_gm_demos(pool, unit, seed=3) == select_gm_demos(list(reversed(pool)), unit, seed=3)

    def test_insufficient(self):
        pool = _pool({Granularity.SEG: 10, Granularity.DOC5: 3})
        unit = _unit(Granularity.DOC5, unit_id="doc5/en-de/group-0000/sys-a")
        with pytest.raises(PromptError, match=r"insufficient demonstrations for doc5: need 5, available \{seg: 10, doc: 0, doc5: 3\}"):
            select_gm_demos(pool, unit, k=5)

    def test_length_match(self):
        pool = _pool({Granularity.DOC: 10})
        # unit of 52 whitespace tokens; closest demo lengths are 50, 60, 40, 70, 30
        unit = _unit(Granularity.DOC, src=" ".join(["w"] * 26), tgt=" ".join(["w"] * 26), unit_id="doc/en-de/d/sys-a")
        demos = select_gm_demos(pool, unit, k=5, match="length")
        assert [d.token_len for d in demos] == [50, 60, 40, 70, 30]


class TestGmicl:
    def test_five_example_blocks(self):
        unit = _unit(Granularity.DOC, unit_id="doc/en-de/d/sys-a")
        bundle = render_gmicl(unit, _sentinel_demos(), GMICL_5)
        assert bundle.shared_prefix.count("<input>") == 5
        assert "Here are some examples:" in bundle.shared_prefix

    def test_bad_demo_fails_at_render_time(self):
        demos = _sentinel_demos()
        demos[2] = demos[2].model_copy(update={"gold_response": "no json here"})
        with pytest.raises(PromptError, match="demo-2"):
            render_gmicl(_unit(Granularity.DOC), demos, GMICL_5)

    def test_wrong_demo_count(self):
        with pytest.raises(PromptError, match="exactly 5"):
            render_gmicl(_unit(Granularity.DOC), _sentinel_demos()[:4], GMICL_5)

    def test_demo_seed_changes_demo_region_only(self):
        pool = _pool({Granularity.DOC: 12})
        unit = _unit(Granularity.DOC, unit_id="doc/en-de/d/sys-a")
        first = render_gmicl(unit, select_gm_demos(pool, unit, seed=1), GMICL_5)
        second = render_gmicl(unit, select_gm_demos(pool, unit, seed=2), GMICL_5)
        head = "Here are some examples:\n"
        assert first.shared_prefix != second.shared_prefix
        assert first.shared_prefix.split(head)[0] == second.shared_prefix.split(head)[0]
        assert first.suffix == second.suffix

    @pytest.mark.parametrize(
        "expl,da,closing",
        [
            (True, True, "MQM (with explanation, with quality_score):"),
            (True, False, "MQM (with explanation):"),
            (False, True, "MQM (with quality_score):"),
            (False, False, "Only the JSON response is required.\n\nMQM:"),
        ],
    )
    def test_closing_variants(self, expl, da, closing):
        opts = PromptOptions(family=PromptFamily.GMICL, n_shots=5, with_explanations=expl, with_da=da)
        bundle = render_gmicl(_unit(Granularity.DOC), _sentinel_demos(), opts)
        assert bundle.suffix.endswith(closing)


class TestDemoPool:
    def test_build_covers_every_granularity(self, small_corpus):
        pool = build_demo_pool(small_corpus, group_size=5, seed=7)
        counts = Counter(d.granularity for d in pool)
        assert counts[Granularity.DOC] == 30
        assert counts[Granularity.DOC5] == 6
        assert counts[Granularity.SEG] == 3 * len(small_corpus)
        assert all(parse_mqm_response(d.gold_response).parse_status == ParseStatus.CLEAN for d in pool)
        assert all(d.token_len > 0 for d in pool)

    def test_write_and_load(self, tmp_path, small_corpus):
        pool = build_demo_pool(small_corpus)
        write_demo_pool(tmp_path / "pool.jsonl", pool)
        assert load_demo_pool(tmp_path / "pool.jsonl") == pool

    def test_invalid_line(self, tmp_path):
        path = tmp_path / "pool.jsonl"
        path.write_text('{"src": "x"}\n')
        with pytest.raises(PromptError, match="line 1"):
            load_demo_pool(path)


def test_language_names():
    assert language_names("en-de", GEMBA_3) == ("English", "German")
    assert language_names("xx-yy", GEMBA_3) == ("xx", "yy")
    assert language_names("en-de", PromptOptions(src_lang="Englisch")) == ("Englisch", "German")
