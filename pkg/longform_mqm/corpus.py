"""Corpus import, granularity construction and statistics."""

from __future__ import annotations

import logging
import random
import re
from collections import defaultdict
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from pydantic import ValidationError

from longform_mqm.artifacts import iter_jsonl, read_jsonl, write_jsonl
from longform_mqm.errors import CorpusError, RecordError
from longform_mqm.models import (
    EvalUnit,
    GoldSpan,
    Granularity,
    Segment,
    SegmentPart,
    Severity,
    StatsRow,
)
from longform_mqm.tokens import TokenCounter, WhitespaceCounter

logger = logging.getLogger(__name__)

DEFAULT_JOINER = "\n"
DEFAULT_GROUP_SIZE = 5

_SEVERITIES = {s.value: s for s in Severity}
_NO_ERROR = {"no-error", "no_error", "neutral", "none", ""}
_MARKER = re.compile(r"</?v>")


class CorpusFormat(str, Enum):
    CANONICAL_JSONL = "canonical_jsonl"
    WMT_TAGGED = "wmt_tagged"


##################################################
# import
##################################################


def import_corpus(
    path: Union[str, Path], fmt: Union[CorpusFormat, str] = CorpusFormat.CANONICAL_JSONL, lp: str = ""
) -> List[Segment]:
    """
    Load segment-level parallel data with gold annotations.

    Args:
        path: Input file
        fmt: ``canonical_jsonl`` or ``wmt_tagged``
        lp: Translation direction assigned to records that carry none

    Returns:
        List[Segment]: segments ordered by document then seg_index

    Raises:
        CorpusError: On malformed records, out-of-range gold or broken seg order
    """
    fmt = CorpusFormat(fmt)
    if not Path(path).is_file():
        raise CorpusError(f"Corpus file not found: {path}")
    if fmt == CorpusFormat.CANONICAL_JSONL:
        segments = _read_canonical(path, lp)
    else:
        segments = _read_wmt_tagged(path, lp)
    ordered = check_documents(segments)
    logger.info("Imported %d segments from %s (%s)", len(ordered), path, fmt.value)
    return ordered


def _gold_span(raw: dict) -> GoldSpan:
    start, end = int(raw["start"]), int(raw["end"])
    return GoldSpan(
        start=start,
        end=end,
        severity=_severity(str(raw["severity"])),
        category=str(raw.get("category", "")),
        is_omission=bool(raw.get("is_omission", start == end)),
    )


def _severity(value: str) -> Severity:
    key = value.strip().lower()
    if key not in _SEVERITIES:
        raise ValueError(f"unknown severity '{value}'")
    return _SEVERITIES[key]


def _merge_raters(primary: List[GoldSpan], by_rater: Dict[str, List[GoldSpan]]) -> List[GoldSpan]:
    # Union across raters, exact duplicates removed, first occurrence wins
    merged = list(primary)
    for rater in sorted(by_rater):
        merged.extend(by_rater[rater])
    return list(dict.fromkeys(merged))


def _read_canonical(path: Union[str, Path], default_lp: str) -> List[Segment]:
    segments: List[Segment] = []
    try:
        records = list(iter_jsonl(path))
    except RecordError as e:
        raise CorpusError(f"{e.path}: line {e.lineno}: malformed record: {e.reason}") from e
    for lineno, record in records:
        try:
            translations: Dict[str, str] = {}
            gold: Dict[str, List[GoldSpan]] = {}
            for system_id, entry in record["systems"].items():
                translations[system_id] = entry["tgt"]
                spans = [_gold_span(g) for g in entry.get("gold", [])]
                by_rater = {
                    rater: [_gold_span(g) for g in raw]
                    for rater, raw in (entry.get("gold_by_rater") or {}).items()
                }
                if "gold" in entry or by_rater:
                    gold[system_id] = _merge_raters(spans, by_rater)
            segments.append(
                Segment(
                    doc_id=str(record["doc_id"]),
                    seg_index=int(record["seg_index"]),
                    src=record["src"],
                    lp=record.get("lp") or default_lp,
                    translations=translations,
                    gold=gold,
                )
            )
        except (KeyError, TypeError, AttributeError) as e:
            raise CorpusError(f"{path}: line {lineno}: malformed record: missing or invalid {e}") from e
        except (ValueError, ValidationError) as e:
            raise CorpusError(f"{path}: line {lineno}: {_first_error(e)}") from e
    return segments


def _first_error(e: Exception) -> str:
    if isinstance(e, ValidationError):
        return "; ".join(str(err["msg"]) for err in e.errors())
    return str(e)


def _strip_markers(text: str) -> str:
    return _MARKER.sub("", text)


def parse_tagged_target(marked: str) -> Tuple[str, Optional[Tuple[int, int]]]:
    """
    Strip ``<v>...</v>`` markers and return the clean text with the first marked range.

    A target without a marker returns ``None`` as its range.
    """
    clean = _strip_markers(marked)
    open_at = marked.find("<v>")
    if open_at < 0:
        return clean, None
    close_at = marked.find("</v>", open_at)
    if close_at < 0:
        raise ValueError("unbalanced <v> marker")
    start = len(_strip_markers(marked[:open_at]))
    end = start + len(_strip_markers(marked[open_at + 3 : close_at]))
    return clean, (start, end)


def _read_wmt_tagged(path: Union[str, Path], lp: str) -> List[Segment]:
    # (doc, seg_id) -> source, system -> clean target, system -> spans
    sources: Dict[Tuple[str, int], str] = {}
    targets: Dict[Tuple[str, int], Dict[str, str]] = defaultdict(dict)
    spans: Dict[Tuple[str, int], Dict[str, List[GoldSpan]]] = defaultdict(lambda: defaultdict(list))

    with open(path, "rb") as f:
        for lineno, raw in enumerate(f, start=1):
            try:
                line = raw.decode("utf-8").rstrip("\n").rstrip("\r")
            except UnicodeDecodeError as e:
                raise CorpusError(f"{path}: line {lineno}: malformed record: invalid UTF-8 at byte {e.start}") from e
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 7:
                raise CorpusError(f"{path}: line {lineno}: malformed record: expected 7 columns, got {len(cols)}")
            system, doc, seg_id, source, marked, category, severity = cols
            try:
                key = (doc, int(seg_id))
                clean, marked_range = parse_tagged_target(marked)
            except ValueError as e:
                raise CorpusError(f"{path}: line {lineno}: malformed record: {e}") from e

            if key in sources and sources[key] != source:
                raise CorpusError(f"{path}: line {lineno}: conflicting source for {doc}#{seg_id}")
            sources[key] = source
            previous = targets[key].get(system)
            if previous is not None and previous != clean:
                raise CorpusError(f"{path}: line {lineno}: conflicting target for {doc}#{seg_id}/{system}")
            targets[key][system] = clean
            annotated = spans[key][system]

            if severity.strip().lower() in _NO_ERROR:
                continue
            try:
                sev = _severity(severity)
            except ValueError as e:
                raise CorpusError(f"{path}: line {lineno}: {e}") from e
            start, end = marked_range if marked_range is not None else (0, 0)
            annotated.append(
                GoldSpan(start=start, end=end, severity=sev, category=category, is_omission=start == end)
            )

    # Reindex numeric seg_ids to 0..n-1 per document
    by_doc: Dict[str, List[int]] = defaultdict(list)
    for doc, seg_id in sources:
        by_doc[doc].append(seg_id)
    segments: List[Segment] = []
    for doc in by_doc:
        for new_index, seg_id in enumerate(sorted(by_doc[doc])):
            key = (doc, seg_id)
            try:
                segments.append(
                    Segment(
                        doc_id=doc,
                        seg_index=new_index,
                        src=sources[key],
                        lp=lp,
                        translations=dict(targets[key]),
                        gold={s: list(v) for s, v in spans[key].items()},
                    )
                )
            except ValidationError as e:
                raise CorpusError(f"{path}: {_first_error(e)}") from e
    return segments


def check_documents(segments: Iterable[Segment]) -> List[Segment]:
    """
    Validate seg_index contiguity per document and return segments in document order.

    Documents keep the order of their first appearance.

    Raises:
        CorpusError: If a document's seg_index values are not exactly 0..n-1
    """
    docs: Dict[str, List[Segment]] = {}
    for seg in segments:
        docs.setdefault(seg.doc_id, []).append(seg)
    ordered: List[Segment] = []
    for doc_id, segs in docs.items():
        segs = sorted(segs, key=lambda s: s.seg_index)
        indices = [s.seg_index for s in segs]
        if indices != list(range(len(segs))):
            raise CorpusError(f"non-contiguous seg_index in document '{doc_id}': {indices}")
        lps = {s.lp for s in segs}
        if len(lps) > 1:
            raise CorpusError(f"document '{doc_id}' mixes translation directions {sorted(lps)}")
        ordered.extend(segs)
    return ordered


def write_segments(path: Union[str, Path], segments: Sequence[Segment]) -> int:
    """Write segments in the canonical interchange format."""

    def record(seg: Segment) -> dict:
        systems = {}
        for system_id in sorted(seg.translations):
            systems[system_id] = {
                "tgt": seg.translations[system_id],
            }
            if system_id in seg.gold:
                systems[system_id]["gold"] = [g.model_dump(mode="json") for g in seg.gold[system_id]]
        out = {"doc_id": seg.doc_id, "seg_index": seg.seg_index, "src": seg.src, "systems": systems}
        if seg.lp:
            out["lp"] = seg.lp
        return out

    return write_jsonl(path, (record(s) for s in segments))


##################################################
# granularities
##################################################


def _documents(segments: Sequence[Segment]) -> Dict[str, List[Segment]]:
    docs: Dict[str, List[Segment]] = {}
    for seg in check_documents(segments):
        docs.setdefault(seg.doc_id, []).append(seg)
    return docs


def _unit_id(level: Granularity, lp: str, key: str, system_id: str) -> str:
    return f"{level.value}/{lp or '_'}/{key}/{system_id}"


def _concat(
    segs: Sequence[Segment], system_id: str, joiner: str
) -> Tuple[str, str, List[SegmentPart], List[GoldSpan]]:
    src_pieces: List[str] = []
    tgt_pieces: List[str] = []
    parts: List[SegmentPart] = []
    gold: List[GoldSpan] = []
    src_pos = tgt_pos = 0
    for i, seg in enumerate(segs):
        if i:
            src_pos += len(joiner)
            tgt_pos += len(joiner)
        tgt = seg.translations[system_id]
        parts.append(
            SegmentPart(
                doc_id=seg.doc_id,
                seg_index=seg.seg_index,
                tgt_offset=tgt_pos,
                tgt_len=len(tgt),
                src_offset=src_pos,
                src_len=len(seg.src),
            )
        )
        gold.extend(g.shifted(tgt_pos) for g in seg.gold.get(system_id, []))
        src_pieces.append(seg.src)
        tgt_pieces.append(tgt)
        src_pos += len(seg.src)
        tgt_pos += len(tgt)
    return joiner.join(src_pieces), joiner.join(tgt_pieces), parts, gold


def _systems(segs: Iterable[Segment]) -> List[str]:
    return sorted({s for seg in segs for s in seg.translations})


def build_granularity(
    segments: Sequence[Segment],
    level: Union[Granularity, str],
    group_size: int = DEFAULT_GROUP_SIZE,
    seed: int = 7,
    joiner: str = DEFAULT_JOINER,
) -> List[EvalUnit]:
    """
    Construct evaluation units at one granularity.

    seg: one unit per (segment, system). doc: a document's segments joined in
    order. doc5: per translation direction, document ids are sorted, shuffled
    with ``random.Random(seed)`` and chunked into groups of ``group_size``; a
    trailing short group is dropped. Gold offsets are shifted by the
    cumulative prefix length including joiners.
    """
    level = Granularity(level)
    if level == Granularity.DOC5 and group_size < 2:
        raise CorpusError(f"doc5 requires group_size >= 2, got {group_size}")
    if not segments:
        return []
    docs = _documents(segments)
    units: List[EvalUnit] = []

    if level == Granularity.SEG:
        for segs in docs.values():
            for seg in segs:
                for system_id in sorted(seg.translations):
                    src, tgt, parts, gold = _concat([seg], system_id, joiner)
                    units.append(
                        EvalUnit(
                            unit_id=_unit_id(level, seg.lp, f"{seg.doc_id}#{seg.seg_index}", system_id),
                            granularity=level,
                            system_id=system_id,
                            lp=seg.lp,
                            src=src,
                            tgt=tgt,
                            parts=parts,
                            gold=gold,
                            has_gold=system_id in seg.gold,
                        )
                    )
        return units

    if level == Granularity.DOC:
        groups = [(doc_id, [doc_id]) for doc_id in docs]
    else:
        groups = _doc5_groups(docs, group_size, seed)

    for key, doc_ids in groups:
        segs = [seg for doc_id in doc_ids for seg in docs[doc_id]]
        lp = segs[0].lp
        for system_id in _systems(segs):
            if any(system_id not in seg.translations for seg in segs):
                logger.warning("Skipping %s for system %s: not translated in every document", key, system_id)
                continue
            src, tgt, parts, gold = _concat(segs, system_id, joiner)
            units.append(
                EvalUnit(
                    unit_id=_unit_id(level, lp, key, system_id),
                    granularity=level,
                    system_id=system_id,
                    lp=lp,
                    src=src,
                    tgt=tgt,
                    parts=parts,
                    gold=gold,
                    n_source_docs=len(doc_ids),
                    has_gold=all(system_id in seg.gold for seg in segs),
                )
            )
    return units


def _doc5_groups(docs: Dict[str, List[Segment]], group_size: int, seed: int) -> List[Tuple[str, List[str]]]:
    by_lp: Dict[str, List[str]] = defaultdict(list)
    for doc_id, segs in docs.items():
        by_lp[segs[0].lp].append(doc_id)
    groups: List[Tuple[str, List[str]]] = []
    for lp in sorted(by_lp):
        doc_ids = sorted(by_lp[lp])
        random.Random(seed).shuffle(doc_ids)
        n_full = len(doc_ids) // group_size
        if len(doc_ids) % group_size:
            logger.info(
                "Dropping %d trailing documents of %s (group size %d)",
                len(doc_ids) % group_size,
                lp or "_",
                group_size,
            )
        for g in range(n_full):
            groups.append((f"group-{g:04d}", doc_ids[g * group_size : (g + 1) * group_size]))
    return groups


def write_units(path: Union[str, Path], units: Sequence[EvalUnit]) -> int:
    return write_jsonl(path, units)


def read_units(path: Union[str, Path]) -> List[EvalUnit]:
    return read_jsonl(path, EvalUnit)


##################################################
# statistics
##################################################


def corpus_stats(units: Sequence[EvalUnit], counter: Optional[TokenCounter] = None) -> List[StatsRow]:
    """Item count and mean src+tgt token count for every granularity."""
    counter = counter or WhitespaceCounter()
    totals: Dict[Granularity, List[int]] = {g: [] for g in Granularity}
    for unit in units:
        totals[unit.granularity].append(counter(unit.src) + counter(unit.tgt))
    rows = []
    for granularity, lengths in totals.items():
        mean = sum(lengths) / len(lengths) if lengths else None
        rows.append(StatsRow(granularity=granularity, n_items=len(lengths), mean_tokens=mean))
    return rows


##################################################
# sentence splitting (non-normative)
##################################################

_SENTENCE_END = re.compile(r"(?<=[.!?。！？])\s+")


def split_sentences(text: str) -> List[Tuple[int, int]]:
    """
    Rule-based sentence ranges: split after sentence-final punctuation followed by whitespace.

    Only for corpora without segment metadata; ranges exclude the separating whitespace.
    """
    ranges: List[Tuple[int, int]] = []
    start = 0
    for m in _SENTENCE_END.finditer(text):
        if m.start() > start:
            ranges.append((start, m.start()))
        start = m.end()
    if start < len(text):
        ranges.append((start, len(text)))
    return ranges


def resegment_unit(unit: EvalUnit) -> EvalUnit:
    """
    Re-derive parts of a unit from its translation by sentence splitting.

    Every part keeps the full source; no sentence alignment is attempted.
    """
    ranges = split_sentences(unit.tgt)
    if not ranges:
        raise CorpusError(f"{unit.unit_id}: no sentences found in translation")
    doc_id = unit.doc_ids[0] if unit.parts else unit.unit_id
    parts = [
        SegmentPart(
            doc_id=doc_id,
            seg_index=i,
            tgt_offset=start,
            tgt_len=end - start,
            src_offset=0,
            src_len=len(unit.src),
        )
        for i, (start, end) in enumerate(ranges)
    ]
    return unit.model_copy(update={"parts": parts})


def gold_part_indices(unit: EvalUnit) -> List[Optional[int]]:
    """
    Index of the part owning each gold span.

    A span belongs to the first part whose translation range contains it, so
    every span is assigned at most once; None when no part contains it. A
    zero-width span (an omission) on a boundary belongs to the part that
    starts there. With an empty joiner one part ends where the next begins.
    """
    owners: List[Optional[int]] = []
    for span in unit.gold:
        owner = None
        if span.start == span.end:
            owner = next((i for i, part in enumerate(unit.parts) if part.tgt_offset == span.start), None)
        if owner is None:
            owner = next(
                (i for i, part in enumerate(unit.parts) if part.tgt_offset <= span.start and span.end <= part.tgt_end),
                None,
            )
        if owner is None:
            logger.warning("%s: gold span [%d,%d) outside every part", unit.unit_id, span.start, span.end)
        owners.append(owner)
    return owners


def gold_by_part(unit: EvalUnit) -> List[List[GoldSpan]]:
    """Partition a unit's gold spans by owning part."""
    buckets: List[List[GoldSpan]] = [[] for _ in unit.parts]
    for span, owner in zip(unit.gold, gold_part_indices(unit)):
        if owner is not None:
            buckets[owner].append(span)
    return buckets
