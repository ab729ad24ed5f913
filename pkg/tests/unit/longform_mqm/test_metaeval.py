"""Tests for ranking accuracy, character-level span F1 and report tables."""

import json
import random

import pytest

from longform_mqm.corpus import build_granularity
from longform_mqm.errors import MetaEvalError
from longform_mqm.metaeval import (
    char_prf,
    combine_prf,
    length_report,
    localize_spans,
    pairwise_accuracy,
    percentile,
    span_count_report,
    unit_prf,
    write_table,
)
from longform_mqm.models import (
    PRF,
    ErrorAnnotation,
    GoldSpan,
    Granularity,
    LocatedSpan,
    ParseStatus,
    ResponseRecord,
    Severity,
    UnitResult,
)

MINOR, MAJOR = Severity.MINOR, Severity.MAJOR


def _pred(text, severity=MAJOR):
    return ErrorAnnotation(span_text=text, severity=severity)


def _gold(start, end, severity=MAJOR):
    return GoldSpan(start=start, end=end, severity=severity)


def _prf(tgt, preds, gold):
    return char_prf(localize_spans(preds, tgt, gold), gold, len(tgt))


def _brute_force_accuracy(metric, gold):
    """Ordered-pair enumeration: every gold-better pair counted once."""
    correct = total = 0
    for a in gold:
        for b in gold:
            if gold[a] > gold[b]:
                total += 1
                correct += metric[a] > metric[b]
    return correct / total


class TestPairwiseAccuracy:
    def test_worked_example(self):
        gold = {"A": -1, "B": -3, "C": -2}
        metric = {"A": -0.5, "B": -2, "C": -2.5}
        assert pairwise_accuracy(metric, gold) == pytest.approx(2 / 3)

    def test_identity_and_reversal(self):
        gold = {"A": 1.0, "B": 2.0, "C": 3.0}
        assert pairwise_accuracy(gold, gold) == 1.0
        assert pairwise_accuracy({k: -v for k, v in gold.items()}, gold) == 0.0

    def test_metric_tie_is_wrong_and_gold_tie_excluded(self):
        gold = {"A": 1.0, "B": 2.0, "C": 2.0}
        metric = {"A": 5.0, "B": 5.0, "C": 9.0}
        # pairs: A<B tied by metric (wrong), A<C right, B=C excluded
        assert pairwise_accuracy(metric, gold) == 0.5

    def test_matches_brute_force_on_random_instances(self):
        rng = random.Random(0)
        systems = [f"s{i}" for i in range(6)]
        for _ in range(200):
            # small integer ranges force ties in both maps
            gold = {s: rng.randint(0, 3) for s in systems}
            if len(set(gold.values())) == 1:
                continue
            metric = {s: rng.randint(0, 3) for s in systems}
            assert pairwise_accuracy(metric, gold) == pytest.approx(_brute_force_accuracy(metric, gold))

    def test_invariant_under_monotone_transform(self):
        rng = random.Random(1)
        gold = {f"s{i}": rng.random() for i in range(6)}
        metric = {s: rng.random() for s in gold}
        transformed = {s: 3 * v**3 + 7 for s, v in metric.items()}
        assert pairwise_accuracy(transformed, gold) == pairwise_accuracy(metric, gold)

    def test_all_gold_tied(self):
        with pytest.raises(MetaEvalError, match="no rankable pairs"):
            pairwise_accuracy({"A": 1, "B": 2}, {"A": 0, "B": 0})

    def test_different_systems(self):
        with pytest.raises(MetaEvalError, match="different systems"):
            pairwise_accuracy({"A": 1, "B": 2}, {"A": 0, "C": 1})

    def test_single_system(self):
        with pytest.raises(MetaEvalError, match="at least two"):
            pairwise_accuracy({"A": 1}, {"A": 0})


class TestLocalizeSpans:
    def test_repeated_substring(self):
        located = localize_spans([_pred("X"), _pred("X")], "aXbXc", [])
        assert [(s.start, s.end, s.matched) for s in located] == [(1, 2, True), (3, 4, True)]

    def test_no_occurrence(self):
        (span,) = localize_spans([_pred("zz")], "abc", [])
        assert (span.matched, span.start, span.length) == (False, None, 2)

    def test_occupied(self):
        first, second = localize_spans([_pred("XX"), _pred("X")], "XX", [])
        assert (first.start, first.end) == (0, 2)
        assert not second.matched

    def test_prefers_gold_overlap(self):
        (span,) = localize_spans([_pred("ab")], "ab ab", [_gold(3, 5)])
        assert (span.start, span.end) == (3, 5)

    def test_omissions_skipped(self):
        assert localize_spans([_pred("")], "abc", []) == []

    def test_windows(self):
        (span,) = localize_spans([_pred("X")], "X X", [], windows=[(2, 3)])
        assert span.start == 2
        (outside,) = localize_spans([_pred("X")], "X X", [], windows=[(1, 2)])
        assert not outside.matched

    def test_locations_never_overlap(self):
        tgt = "aaaa"
        located = localize_spans([_pred("aa"), _pred("a"), _pred("aa"), _pred("a")], tgt, [])
        used = [c for s in located if s.matched for c in range(s.start, s.end)]
        assert len(used) == len(set(used))
        assert all(tgt[s.start : s.end] == "aa"[: s.length] for s in located if s.matched)


class TestCharPrf:
    def test_exact_match(self):
        prf = _prf("the cat sat", [_pred("cat", MAJOR)], [_gold(4, 7, MAJOR)])
        assert (prf.precision, prf.recall, prf.f1) == (1.0, 1.0, 1.0)

    def test_severity_mismatch_gets_half_credit(self):
        prf = _prf("the cat sat", [_pred("cat", MINOR)], [_gold(4, 7, MAJOR)])
        assert (prf.credit_p, prf.credit_r) == (1.5, 1.5)
        assert (prf.precision, prf.recall, prf.f1) == (0.5, 0.5, 0.5)

    def test_empty_gold(self):
        prf = _prf("the cat sat", [_pred("cat")], [])
        assert (prf.precision, prf.recall, prf.f1) == (0.0, 0.0, 0.0)

    def test_unmatched_counts_in_precision_only(self):
        prf = _prf("the cat sat", [_pred("cat"), _pred("dog")], [_gold(4, 7)])
        assert (prf.pred_chars, prf.precision, prf.recall) == (6, 0.5, 1.0)
        assert prf.f1 == pytest.approx(2 / 3)

    def test_prediction_wider_than_gold(self):
        prf = _prf("the cat sat", [_pred("cat sat")], [_gold(4, 7)])
        assert prf.precision == pytest.approx(3 / 7)
        assert prf.recall == 1.0

    def test_prediction_over_two_gold_severities(self):
        prf = _prf("the cat sat", [_pred("cat sat", MINOR)], [_gold(4, 7, MAJOR), _gold(8, 11, MINOR)])
        # chars 4-6 half credit, 7 none, 8-10 full
        assert (prf.credit_p, prf.pred_chars) == (4.5, 7)
        assert (prf.credit_r, prf.gold_chars) == (4.5, 6)
        assert prf.recall == 0.75

    def test_gold_characters_counted_once(self):
        prf = _prf("abc", [_pred("abc", MINOR)], [_gold(0, 3, MAJOR), _gold(0, 3, MINOR)])
        assert (prf.gold_chars, prf.precision, prf.recall) == (3, 1.0, 1.0)

    def test_omission_gold_has_no_characters(self):
        gold = [GoldSpan(start=0, end=0, severity=MAJOR, is_omission=True)]
        prf = _prf("abc", [], gold)
        assert (prf.gold_chars, prf.precision, prf.recall, prf.f1) == (0, 0.0, 0.0, 0.0)

    def test_occupancy_leaves_third_copy_unmatched(self):
        prf = _prf("ab ab", [_pred("ab", MINOR)] * 3, [_gold(0, 2, MINOR), _gold(3, 5, MINOR)])
        assert (prf.credit_p, prf.pred_chars) == (4.0, 6)
        assert prf.precision == pytest.approx(2 / 3)
        assert prf.recall == 1.0

    def test_dropping_unmatched_prediction(self):
        gold = [_gold(4, 7)]
        with_unmatched = _prf("the cat sat", [_pred("cat"), _pred("dog"), _pred("sat", MINOR)], gold)
        without = _prf("the cat sat", [_pred("cat"), _pred("sat", MINOR)], gold)
        assert without.recall == with_unmatched.recall
        assert without.precision >= with_unmatched.precision

    def test_perfect_prediction(self):
        tgt = "alpha beta gamma delta"
        gold = [_gold(0, 5, MINOR), _gold(11, 16, MAJOR)]
        preds = [_pred("alpha", MINOR), _pred("gamma", MAJOR)]
        assert _prf(tgt, preds, gold).f1 == 1.0

    def test_located_directly(self):
        located = [LocatedSpan(start=0, end=1, length=1, severity=MAJOR, matched=True)]
        prf = char_prf(located, [_gold(0, 2)], 3)
        assert (prf.precision, prf.recall) == (1.0, 0.5)


def test_combine_prf_is_micro_averaged():
    a = PRF(precision=1.0, recall=1.0, f1=1.0, credit_p=3, credit_r=3, pred_chars=3, gold_chars=3)
    b = PRF(precision=0.0, recall=0.0, f1=0.0, credit_p=0, credit_r=0, pred_chars=1, gold_chars=5)
    combined = combine_prf([a, b])
    assert (combined.precision, combined.recall) == (0.75, 0.375)
    assert combine_prf([]).f1 == 0.0


def test_unit_prf_uses_focus_windows(two_segment_doc):
    (unit,) = build_granularity(two_segment_doc, Granularity.DOC)
    result = UnitResult(
        run_id="r",
        unit_id=unit.unit_id,
        system_id=unit.system_id,
        granularity=unit.granularity,
        method="fsp-3shot",
        errors=[_pred("dog", MINOR), _pred("cat", MAJOR)],
        focus_error_counts=[1, 1],
    )
    assert unit_prf(unit, result).f1 == 1.0
    # "cat" reported for the first segment cannot be found there
    misplaced = result.model_copy(update={"focus_error_counts": [2, 0]})
    prf = unit_prf(unit, misplaced)
    assert prf.recall == pytest.approx(3 / 6)


def _result(method, granularity, doc_ids, n_errors=0, lengths=(), system="A", lp="en-de", unit="u"):
    return UnitResult(
        run_id="r",
        unit_id=f"{granularity.value}/{lp}/{unit}/{system}",
        system_id=system,
        lp=lp,
        granularity=granularity,
        method=method,
        doc_ids=list(doc_ids),
        n_source_docs=len(doc_ids),
        errors=[_pred(f"e{i}") for i in range(n_errors)],
        responses=[
            ResponseRecord(request_id=f"{unit}-{i}", text="x", output_tokens=n, parse_status=ParseStatus.CLEAN)
            for i, n in enumerate(lengths)
        ],
    )


class TestSpanCountReport:
    def test_doc5_normalized_per_document(self):
        df = span_count_report([_result("gemba-3shot", Granularity.DOC5, ["d1", "d2", "d3", "d4", "d5"], 40)])
        (row,) = df.to_dict(orient="records")
        assert (row["n_docs"], row["total_spans"], row["spans_per_doc"]) == (5, 40, 8.0)

    def test_empty(self):
        df = span_count_report([])
        assert df.empty
        assert list(df.columns) == ["method", "granularity", "lp", "n_units", "n_docs", "total_spans", "spans_per_doc"]

    def test_row_order(self):
        results = [
            _result("gemba-3shot", Granularity.DOC5, ["d1"]),
            _result("gemba-3shot", Granularity.SEG, ["d1"]),
            _result("fsp-3shot", Granularity.DOC, ["d1"]),
        ]
        df = span_count_report(results)
        assert list(zip(df["method"], df["granularity"])) == [
            ("fsp-3shot", "doc"),
            ("gemba-3shot", "seg"),
            ("gemba-3shot", "doc5"),
        ]


class TestLengthReport:
    def test_expected_length_and_deficit(self):
        results = [_result("gemba-3shot", Granularity.SEG, ["d"], lengths=[n], unit=f"d#{i}") for i, n in enumerate([300, 400, 300])]
        results.append(_result("gemba-3shot", Granularity.DOC, ["d"], lengths=[300], unit="d"))
        rows = {r["granularity"]: r for r in length_report(results).to_dict(orient="records")}
        assert rows["doc"]["expected_mean"] == 1000
        assert rows["doc"]["deficit_ratio"] == pytest.approx(0.30)
        assert rows["seg"]["mean"] == pytest.approx(1000 / 3)

    def test_expected_absent_without_segment_run(self):
        df = length_report([_result("gemba-3shot", Granularity.DOC, ["d"], lengths=[300])])
        (row,) = df.to_dict(orient="records")
        assert row["mean"] == 300
        assert row["expected_mean"] != row["expected_mean"]  # NaN

    def test_other_family_is_not_a_reference(self):
        results = [
            _result("fsp-3shot", Granularity.SEG, ["d"], lengths=[100]),
            _result("gemba-3shot", Granularity.DOC, ["d"], lengths=[300]),
        ]
        rows = {r["method"]: r for r in length_report(results).to_dict(orient="records")}
        assert rows["gemba-3shot"]["deficit_ratio"] != rows["gemba-3shot"]["deficit_ratio"]

    def test_segment_runs_of_one_family_stay_apart(self):
        results = [_result("gemba-3shot", Granularity.SEG, ["d"], lengths=[n], unit=f"d#{i}") for i, n in enumerate([300, 400, 300])]
        results.append(_result("gemba-0shot", Granularity.SEG, ["d"], lengths=[500], unit="d#0"))
        results.append(_result("gemba-3shot", Granularity.DOC, ["d"], lengths=[300], unit="d"))
        results.append(_result("gemba-0shot", Granularity.DOC, ["d"], lengths=[250], unit="d"))
        rows = {
            (r["method"], r["granularity"]): r
            for r in length_report(results).to_dict(orient="records")
        }
        assert rows[("gemba-3shot", "doc")]["expected_mean"] == 1000
        assert rows[("gemba-3shot", "doc")]["deficit_ratio"] == pytest.approx(0.30)
        assert rows[("gemba-0shot", "doc")]["expected_mean"] == 500
        assert rows[("gemba-0shot", "doc")]["deficit_ratio"] == pytest.approx(0.50)


def test_percentile_nearest_rank():
    assert percentile(list(range(1, 101)), 99) == 100
    assert percentile([5.0], 50) == 5.0
    # rank ceil(0.5 * 4) = 2, not the upper neighbour of the interpolated position
    assert percentile([40, 10, 30, 20], 50) == 20
    assert percentile([10, 20, 30, 40], 25) == 10
    assert percentile([10, 20, 30, 40], 0) == 10
    with pytest.raises(MetaEvalError, match="empty"):
        percentile([], 50)


def test_write_table(tmp_path):
    df = span_count_report([_result("gemba-3shot", Granularity.SEG, ["d"], 2)])
    write_table(df, tmp_path / "span_counts", ["run-1"])
    data = json.loads((tmp_path / "span_counts.json").read_text())
    assert data["run_ids"] == ["run-1"]
    assert data["rows"][0]["spans_per_doc"] == 2.0
    assert (tmp_path / "span_counts.csv").read_text().splitlines()[0].startswith("method,granularity,lp")
