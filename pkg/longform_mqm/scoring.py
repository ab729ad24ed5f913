"""Weighted-MQM and DA scores at unit and system level."""

from __future__ import annotations

import logging
from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from longform_mqm.corpus import gold_by_part
from longform_mqm.errors import ScoringError
from longform_mqm.models import (
    ErrorAnnotation,
    EvalUnit,
    GoldSpan,
    ParsedResponse,
    ParseStatus,
    ScoreMethod,
    Severity,
    SeverityWeights,
    SystemScore,
    UnitResult,
    UnitScore,
)

logger = logging.getLogger(__name__)


def penalty(severities: Iterable[Severity], w: SeverityWeights) -> float:
    return float(sum(w.weight(s) for s in severities))


def capped_score(total: float, w: SeverityWeights) -> float:
    if w.per_unit_cap is not None:
        total = min(total, w.per_unit_cap)
    return -total if total else 0.0


def unit_mqm_score(errors: Sequence[ErrorAnnotation], w: SeverityWeights) -> Tuple[float, int]:
    """Return ``(score, n_errors)`` with score = -min(penalty, cap)."""
    return capped_score(penalty((e.severity for e in errors), w), w), len(errors)


def combine_status(statuses: Sequence[ParseStatus]) -> ParseStatus:
    """clean if all clean, failed if all failed, recovered otherwise."""
    if statuses and all(s == ParseStatus.FAILED for s in statuses):
        return ParseStatus.FAILED
    if all(s == ParseStatus.CLEAN for s in statuses):
        return ParseStatus.CLEAN
    return ParseStatus.RECOVERED


def mean_quality_score(per_focus: Sequence[ParsedResponse]) -> Optional[float]:
    """Mean quality_score over foci that did not fail and carry one."""
    scores = [
        p.quality_score
        for p in per_focus
        if p.parse_status != ParseStatus.FAILED and p.quality_score is not None
    ]
    return sum(scores) / len(scores) if scores else None


def aggregate_fsp(
    doc_unit: EvalUnit, per_focus: Sequence[ParsedResponse], w: Optional[SeverityWeights] = None
) -> Tuple[List[ErrorAnnotation], UnitScore]:
    """
    Combine per-segment responses into the document result.

    Errors are concatenated in segment order without deduplication.

    Raises:
        ScoringError: If there is not exactly one response per segment
    """
    if len(per_focus) != len(doc_unit.parts):
        raise ScoringError(
            f"{doc_unit.unit_id}: {len(per_focus)} focus responses for {len(doc_unit.parts)} segments"
        )
    w = w or SeverityWeights()
    errors = [e for p in per_focus for e in p.errors]
    score, n_errors = unit_mqm_score(errors, w)
    return errors, UnitScore(
        unit_id=doc_unit.unit_id,
        system_id=doc_unit.system_id,
        granularity=doc_unit.granularity,
        lp=doc_unit.lp,
        method=ScoreMethod.MQM_WEIGHTED,
        score=score,
        n_errors=n_errors,
        parse_status=combine_status([p.parse_status for p in per_focus]),
    )


def mqm_unit_scores(results: Sequence[UnitResult], w: SeverityWeights) -> List[UnitScore]:
    """Weighted-MQM score of every result; failed parses score as zero errors."""
    return [
        UnitScore(
            run_id=r.run_id,
            unit_id=r.unit_id,
            system_id=r.system_id,
            granularity=r.granularity,
            lp=r.lp,
            method=ScoreMethod.MQM_WEIGHTED,
            score=unit_mqm_score(r.errors, w)[0],
            n_errors=r.n_errors,
            parse_status=r.parse_status,
        )
        for r in results
    ]


def da_unit_scores(results: Sequence[UnitResult]) -> List[UnitScore]:
    """DA score of every result that has one."""
    return [
        UnitScore(
            run_id=r.run_id,
            unit_id=r.unit_id,
            system_id=r.system_id,
            granularity=r.granularity,
            lp=r.lp,
            method=ScoreMethod.DA,
            score=r.quality_score,
            n_errors=r.n_errors,
            parse_status=r.parse_status,
        )
        for r in results
        if r.quality_score is not None and r.parse_status != ParseStatus.FAILED
    ]


def system_score(unit_scores: Sequence[UnitScore], system_id: str) -> SystemScore:
    """
    Arithmetic mean of a system's unit scores.

    Raises:
        ScoringError: If granularities or methods are mixed, or the system has no units
    """
    if len({u.granularity for u in unit_scores}) > 1:
        raise ScoringError("unit scores mix granularities")
    if len({u.method for u in unit_scores}) > 1:
        raise ScoringError("unit scores mix methods")
    mine = [u for u in unit_scores if u.system_id == system_id]
    if not mine:
        raise ScoringError(f"no units for system '{system_id}'")
    return SystemScore(
        system_id=system_id,
        granularity=mine[0].granularity,
        method=mine[0].method,
        score=sum(u.score for u in mine) / len(mine),
        n_units=len(mine),
        n_failed=sum(u.parse_status == ParseStatus.FAILED for u in mine),
    )


def da_system_score(results: Sequence[UnitResult], system_id: str) -> SystemScore:
    """
    Mean DA of a system; failed parses and clean parses without a score are excluded.

    Raises:
        ScoringError: If none of the system's units carries a usable quality_score
    """
    mine = [r for r in results if r.system_id == system_id]
    scored = da_unit_scores(mine)
    if not scored:
        raise ScoringError(f"no scoreable units for system '{system_id}'")
    excluded = len(mine) - len(scored)
    if excluded:
        logger.warning("%s: %d units excluded from DA (failed or missing quality_score)", system_id, excluded)
    return SystemScore(
        system_id=system_id,
        granularity=scored[0].granularity,
        method=ScoreMethod.DA,
        score=sum(u.score for u in scored) / len(scored),
        n_units=len(scored),
        n_failed=sum(r.parse_status == ParseStatus.FAILED for r in mine),
        n_excluded=excluded,
        n_clamped=sum(r.n_clamped for r in mine),
    )


def system_scores(
    results: Sequence[UnitResult], w: SeverityWeights, method: ScoreMethod = ScoreMethod.MQM_WEIGHTED
) -> Dict[str, SystemScore]:
    """System scores for every system in ``results``."""
    systems = sorted({r.system_id for r in results})
    if method == ScoreMethod.DA:
        return {s: da_system_score(results, s) for s in systems}
    units = mqm_unit_scores(results, w)
    return {s: system_score(units, s) for s in systems}


##################################################
# gold
##################################################


def gold_severities(gold: Iterable[GoldSpan], critical_as_major: bool = False) -> List[Severity]:
    out = []
    for g in gold:
        if critical_as_major and g.severity == Severity.CRITICAL:
            out.append(Severity.MAJOR)
        else:
            out.append(g.severity)
    return out


def gold_unit_score(gold: Sequence[GoldSpan], w: SeverityWeights, critical_as_major: bool = False) -> float:
    return capped_score(penalty(gold_severities(gold, critical_as_major), w), w)


def gold_system_scores(
    units: Sequence[EvalUnit], w: SeverityWeights, critical_as_major: bool = False
) -> Dict[str, float]:
    """
    Human system scores: mean gold score per segment.

    Units of any granularity are split back into their segments, so every
    granularity yields the same gold ranking. Units without gold are ignored.
    """
    per_system: Dict[str, List[float]] = defaultdict(list)
    for unit in units:
        if not unit.has_gold:
            continue
        for spans in gold_by_part(unit):
            per_system[unit.system_id].append(gold_unit_score(spans, w, critical_as_major))
    return {s: sum(v) / len(v) for s, v in sorted(per_system.items())}
