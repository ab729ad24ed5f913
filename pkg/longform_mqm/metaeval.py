"""Meta-evaluation: ranking accuracy, character-level span F1 and report tables."""

from __future__ import annotations

import itertools
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np
import pandas as pd

from longform_mqm.artifacts import write_json
from longform_mqm.errors import MetaEvalError
from longform_mqm.models import PRF, ErrorAnnotation, EvalUnit, GoldSpan, Granularity, LocatedSpan, UnitResult
from longform_mqm.tokens import TokenCounter

logger = logging.getLogger(__name__)

PARTIAL_CREDIT = 0.5


##################################################
# system ranking
##################################################


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def pairwise_accuracy(metric: Mapping[str, float], gold: Mapping[str, float]) -> float:
    """
    Fraction of gold-ordered system pairs the metric orders the same way.

    Gold-tied pairs are left out; a metric tie on a gold-ordered pair counts
    as wrong.

    Raises:
        MetaEvalError: If the system sets differ, fewer than two systems are
            given or every gold pair is tied
    """
    if set(metric) != set(gold):
        raise MetaEvalError(
            f"metric and gold cover different systems: {sorted(set(metric) ^ set(gold))}"
        )
    if len(gold) < 2:
        raise MetaEvalError("pairwise accuracy needs at least two systems")
    correct = total = 0
    for a, b in itertools.combinations(sorted(gold), 2):
        g = _sign(gold[a] - gold[b])
        if g == 0:
            continue
        total += 1
        correct += _sign(metric[a] - metric[b]) == g
    if total == 0:
        raise MetaEvalError("no rankable pairs: all gold scores are tied")
    return correct / total


##################################################
# character-level span F1
##################################################


def _occurrences(text: str, needle: str) -> List[int]:
    found = []
    start = text.find(needle)
    while start >= 0:
        found.append(start)
        start = text.find(needle, start + 1)
    return found


def localize_spans(
    preds: Sequence[ErrorAnnotation],
    tgt: str,
    gold: Sequence[GoldSpan],
    windows: Optional[Sequence[Tuple[int, int]]] = None,
) -> List[LocatedSpan]:
    """
    Greedily assign predicted span texts to locations in ``tgt``.

    Predictions are handled in response order. Each takes the fully
    unoccupied occurrence with the largest gold overlap, leftmost on ties.
    Zero-width predictions are skipped. ``windows`` optionally restricts
    prediction ``i`` to occurrences inside ``windows[i]``.
    """
    gold_chars = np.zeros(len(tgt), dtype=bool)
    for g in gold:
        gold_chars[g.start : g.end] = True
    occupied = np.zeros(len(tgt), dtype=bool)
    located: List[LocatedSpan] = []
    for i, pred in enumerate(preds):
        text = pred.span_text
        if not text:
            continue
        lo, hi = windows[i] if windows is not None else (0, len(tgt))
        best: Optional[Tuple[int, int]] = None
        for start in _occurrences(tgt, text):
            end = start + len(text)
            if start < lo or end > hi or occupied[start:end].any():
                continue
            overlap = int(gold_chars[start:end].sum())
            # strict > keeps the leftmost on ties
            if best is None or overlap > best[1]:
                best = (start, overlap)
        if best is None:
            located.append(LocatedSpan(length=len(text), severity=pred.severity, matched=False))
            continue
        start = best[0]
        occupied[start : start + len(text)] = True
        located.append(
            LocatedSpan(start=start, end=start + len(text), length=len(text), severity=pred.severity, matched=True)
        )
    return located


def _prf(credit_p: float, credit_r: float, pred_chars: int, gold_chars: int) -> PRF:
    precision = credit_p / pred_chars if pred_chars else 0.0
    recall = credit_r / gold_chars if gold_chars else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return PRF(
        precision=precision,
        recall=recall,
        f1=f1,
        credit_p=credit_p,
        credit_r=credit_r,
        pred_chars=pred_chars,
        gold_chars=gold_chars,
    )


def _char_severities(spans: Iterable[Tuple[int, int, object]], length: int) -> List[Set[object]]:
    cover: List[Set[object]] = [set() for _ in range(length)]
    for start, end, severity in spans:
        for c in range(start, end):
            cover[c].add(severity)
    return cover


def _credit(mine: Set[object], theirs: Set[object]) -> float:
    if not mine or not theirs:
        return 0.0
    return 1.0 if mine & theirs else PARTIAL_CREDIT


def char_prf(located: Sequence[LocatedSpan], gold: Sequence[GoldSpan], tgt_len: int) -> PRF:
    """
    Character precision/recall/F1 with half credit for a severity mismatch.

    Unmatched predictions count in the precision denominator only; gold
    characters are counted once however many gold spans cover them.
    """
    gold_cover = _char_severities(((g.start, g.end, g.severity) for g in gold), tgt_len)
    pred_cover = _char_severities(
        ((p.start, p.end, p.severity) for p in located if p.matched and p.start is not None and p.end is not None),
        tgt_len,
    )
    credit_p = 0.0
    for p in located:
        if not p.matched or p.start is None or p.end is None:
            continue
        for c in range(p.start, p.end):
            credit_p += _credit({p.severity}, gold_cover[c])
    credit_r = 0.0
    gold_chars = 0
    for c in range(tgt_len):
        if gold_cover[c]:
            gold_chars += 1
            credit_r += _credit(gold_cover[c], pred_cover[c])
    # unplaced predictions still count here
    pred_chars = sum(p.length for p in located)
    return _prf(credit_p, credit_r, pred_chars, gold_chars)


def combine_prf(values: Iterable[PRF]) -> PRF:
    """Micro-average: credits and character counts summed before dividing."""
    credit_p = credit_r = 0.0
    pred_chars = gold_chars = 0
    for v in values:
        credit_p += v.credit_p
        credit_r += v.credit_r
        pred_chars += v.pred_chars
        gold_chars += v.gold_chars
    return _prf(credit_p, credit_r, pred_chars, gold_chars)


def focus_windows(unit: EvalUnit, result: UnitResult) -> Optional[List[Tuple[int, int]]]:
    """Per-prediction search windows for focus-segment results, else None."""
    if result.focus_error_counts is None:
        return None
    windows: List[Tuple[int, int]] = []
    for part, count in zip(unit.parts, result.focus_error_counts):
        windows.extend([(part.tgt_offset, part.tgt_end)] * count)
    return windows


def unit_prf(unit: EvalUnit, result: UnitResult) -> PRF:
    located = localize_spans(result.errors, unit.tgt, unit.gold, focus_windows(unit, result))
    return char_prf(located, unit.gold, len(unit.tgt))


##################################################
# reports
##################################################

_KEYS = ["method", "granularity", "lp"]


def percentile(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the value at rank ceil(q/100 * n) of the sorted values."""
    ordered = np.sort(np.asarray(values, dtype=float))
    if ordered.size == 0:
        raise MetaEvalError("percentile of an empty sample")
    rank = max(1, int(np.ceil(q * ordered.size / 100)))
    return float(ordered[min(rank, ordered.size) - 1])


def span_count_report(results: Sequence[UnitResult]) -> pd.DataFrame:
    """
    Predicted spans per source document for each method, granularity and direction.

    The value is the total number of predicted spans divided by the number
    of distinct (system, document) pairs, which for doc5 units equals the
    mean of ``n_errors / n_source_docs``.
    """
    columns = _KEYS + ["n_units", "n_docs", "total_spans", "spans_per_doc"]
    rows: Dict[Tuple[str, str, str], Dict] = {}
    docs: Dict[Tuple[str, str, str], Set[Tuple[str, str]]] = defaultdict(set)
    for r in results:
        key = (r.method, r.granularity.value, r.lp)
        row = rows.setdefault(key, {"n_units": 0, "total_spans": 0})
        row["n_units"] += 1
        row["total_spans"] += r.n_errors
        docs[key].update((r.system_id, d) for d in r.doc_ids)
    out = []
    for key in sorted(rows, key=_row_order):
        n_docs = len(docs[key])
        out.append(
            dict(
                zip(_KEYS, key),
                n_units=rows[key]["n_units"],
                n_docs=n_docs,
                total_spans=rows[key]["total_spans"],
                spans_per_doc=rows[key]["total_spans"] / n_docs if n_docs else None,
            )
        )
    return pd.DataFrame(out, columns=columns)


def _row_order(key: Tuple[str, str, str]) -> Tuple[str, int, str]:
    method, granularity, lp = key
    return method, [g.value for g in Granularity].index(granularity), lp


def _response_length(result: UnitResult, counter: Optional[TokenCounter]) -> int:
    if counter is None:
        return sum(r.output_tokens for r in result.responses)
    return sum(counter(r.text) for r in result.responses)


def length_report(results: Sequence[UnitResult], counter: Optional[TokenCounter] = None) -> pd.DataFrame:
    """
    Response lengths per method, granularity and direction.

    ``expected`` is the sum of the segment-level response lengths of the
    documents a unit covers, taken from the segment run with the same method
    label (family, shots and options); the cells stay empty when no such run
    is present.
    """
    columns = _KEYS + [
        "n_units",
        "mean",
        "p50",
        "p99",
        "expected_mean",
        "expected_p50",
        "expected_p99",
        "deficit_ratio",
    ]
    seg_lengths: Dict[Tuple[str, str, str, str], int] = defaultdict(int)
    for r in results:
        if r.granularity == Granularity.SEG:
            for d in r.doc_ids:
                seg_lengths[(r.method, r.lp, r.system_id, d)] += _response_length(r, counter)

    groups: Dict[Tuple[str, str, str], List[UnitResult]] = defaultdict(list)
    for r in results:
        groups[(r.method, r.granularity.value, r.lp)].append(r)

    out = []
    for key in sorted(groups, key=_row_order):
        members = groups[key]
        actual = [_response_length(r, counter) for r in members]
        row = dict(zip(_KEYS, key), n_units=len(members))
        row.update(mean=float(np.mean(actual)), p50=percentile(actual, 50), p99=percentile(actual, 99))
        paired: List[Tuple[int, int]] = []
        for r, length in zip(members, actual):
            refs = [(r.method, r.lp, r.system_id, d) for d in r.doc_ids]
            if refs and all(ref in seg_lengths for ref in refs):
                paired.append((length, sum(seg_lengths[ref] for ref in refs)))
        if paired:
            expected = [e for _, e in paired]
            total_expected = sum(expected)
            row.update(
                expected_mean=float(np.mean(expected)),
                expected_p50=percentile(expected, 50),
                expected_p99=percentile(expected, 99),
                deficit_ratio=sum(a for a, _ in paired) / total_expected if total_expected else None,
            )
        out.append(row)
    return pd.DataFrame(out, columns=columns)


def prf_report(rows: Sequence[Tuple[str, str, str, PRF]]) -> pd.DataFrame:
    """One row per (method, granularity, direction) with micro-averaged P/R/F1."""
    grouped: Dict[Tuple[str, str, str], List[PRF]] = defaultdict(list)
    for method, granularity, lp, value in rows:
        grouped[(method, granularity, lp)].append(value)
    out = []
    for key in sorted(grouped, key=_row_order):
        combined = combine_prf(grouped[key])
        out.append(dict(zip(_KEYS, key), **combined.model_dump()))
    return pd.DataFrame(out, columns=_KEYS + list(PRF.model_fields))


def write_table(df: pd.DataFrame, stem: Union[str, Path], run_ids: Sequence[str] = ()) -> None:
    """Write ``<stem>.json`` (with the source run ids) and ``<stem>.csv``."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    records = df.astype(object).where(pd.notna(df), None).to_dict(orient="records")
    write_json(stem.with_suffix(".json"), {"run_ids": list(run_ids), "rows": records})
    df.to_csv(stem.with_suffix(".csv"), index=False, lineterminator="\n")
