"""Request construction, execution and result collection for one evaluation run."""

from __future__ import annotations

import asyncio
import logging
from collections import defaultdict
from typing import Callable, Dict, List, Literal, Mapping, Optional, Sequence

from longform_mqm.backends import Backend, BiasedBackend, LiveBackend, OracleBackend, run_requests
from longform_mqm.cache import ResponseCache
from longform_mqm.config import RunConfig
from longform_mqm.errors import ConfigError, PromptError
from longform_mqm.models import (
    BackendResponse,
    DecodingParams,
    Demonstration,
    EvalRequest,
    EvalUnit,
    Granularity,
    ParsedResponse,
    ParseStatus,
    PromptFamily,
    PromptOptions,
    ResponseRecord,
    UnitResult,
)
from longform_mqm.parsing import parse_mqm_response
from longform_mqm.prompting import render_fsp, render_gemba, render_gmicl, select_gm_demos
from longform_mqm.scoring import aggregate_fsp, combine_status, mean_quality_score
from longform_mqm.tokens import TokenCounter

logger = logging.getLogger(__name__)


def build_requests(
    units: Sequence[EvalUnit],
    opts: PromptOptions,
    decoding_for: Callable[[Granularity], DecodingParams],
    demo_pool: Optional[Sequence[Demonstration]] = None,
    demo_seed: int = 0,
    demo_match: Literal["granularity", "length"] = "granularity",
    counter: Optional[TokenCounter] = None,
) -> List[EvalRequest]:
    """Render every unit (every focus segment for fsp) into requests."""
    requests: List[EvalRequest] = []
    for unit in units:
        decoding = decoding_for(unit.granularity)
        if opts.family == PromptFamily.GEMBA:
            requests.append(
                EvalRequest(request_id=unit.unit_id, unit_id=unit.unit_id, bundle=render_gemba(unit, opts, decoding))
            )
        elif opts.family == PromptFamily.FSP:
            for i in range(len(unit.parts)):
                requests.append(
                    EvalRequest(
                        request_id=f"{unit.unit_id}#{i}",
                        unit_id=unit.unit_id,
                        focus_index=i,
                        bundle=render_fsp(unit, i, opts, decoding),
                    )
                )
        else:
            if demo_pool is None:
                raise PromptError("gmicl needs a demonstration pool")
            demos = select_gm_demos(demo_pool, unit, seed=demo_seed, match=demo_match, counter=counter)
            requests.append(
                EvalRequest(
                    request_id=unit.unit_id, unit_id=unit.unit_id, bundle=render_gmicl(unit, demos, opts, decoding)
                )
            )
    return requests


def make_backend(config: RunConfig, units: Mapping[str, EvalUnit], counter: TokenCounter) -> Backend:
    kind = config.backend.kind
    if kind == "oracle":
        return OracleBackend(units, counter)
    if kind == "sim":
        return BiasedBackend(units, config.bias_params(), counter)
    if kind == "live":
        return LiveBackend(config.backend)
    raise ConfigError(f"unknown backend kind: {kind}")


def execute(
    requests: Sequence[EvalRequest],
    backend: Backend,
    cache: Optional[ResponseCache],
    concurrency: int = 8,
    rate_limit_rpm: Optional[float] = None,
    progress: bool = True,
) -> Dict[str, BackendResponse]:
    """Synchronous entry point to the async executor."""
    return asyncio.run(
        run_requests(
            requests,
            backend,
            cache=cache,
            concurrency=concurrency,
            rate_limit_rpm=rate_limit_rpm,
            progress=progress,
        )
    )


def _record(request: EvalRequest, response: BackendResponse, parsed: ParsedResponse) -> ResponseRecord:
    return ResponseRecord(
        request_id=request.request_id,
        focus_index=request.focus_index,
        text=response.text,
        input_tokens=response.input_tokens,
        output_tokens=response.output_tokens,
        latency_ms=response.latency_ms,
        from_cache=response.from_cache,
        parse_status=parsed.parse_status,
        n_dropped=parsed.n_dropped,
    )


def collect_results(
    run_id: str,
    units: Sequence[EvalUnit],
    requests: Sequence[EvalRequest],
    responses: Mapping[str, BackendResponse],
    opts: PromptOptions,
) -> List[UnitResult]:
    """
    Parse responses and fold them into one result per unit, in unit order.

    FSP units combine their focus responses with :func:`aggregate_fsp`.
    """
    # Group requests by unit; fsp units have one per focus segment
    by_unit: Dict[str, List[EvalRequest]] = defaultdict(list)
    for request in requests:
        by_unit[request.unit_id].append(request)

    results: List[UnitResult] = []
    for unit in units:
        unit_requests = sorted(by_unit.get(unit.unit_id, []), key=lambda r: (r.focus_index or 0))
        parsed: List[ParsedResponse] = []
        records: List[ResponseRecord] = []
        for request in unit_requests:
            response = responses[request.request_id]
            p = parse_mqm_response(response.text, expects_da=request.bundle.expects_da)
            if p.parse_status != ParseStatus.CLEAN:
                logger.warning("%s: response parse %s", request.request_id, p.parse_status.value)
            parsed.append(p)
            records.append(_record(request, response, p))

        # Fold focus responses back onto the unit
        focus_counts = None
        if opts.family == PromptFamily.FSP:
            errors, _ = aggregate_fsp(unit, parsed)
            quality = mean_quality_score(parsed)
            focus_counts = [len(p.errors) for p in parsed]
        else:
            errors = list(parsed[0].errors) if parsed else []
            quality = float(parsed[0].quality_score) if parsed and parsed[0].quality_score is not None else None

        results.append(
            UnitResult(
                run_id=run_id,
                unit_id=unit.unit_id,
                system_id=unit.system_id,
                lp=unit.lp,
                granularity=unit.granularity,
                method=opts.method_label,
                doc_ids=unit.doc_ids,
                n_source_docs=unit.n_source_docs,
                errors=errors,
                focus_error_counts=focus_counts,
                quality_score=quality,
                parse_status=combine_status([p.parse_status for p in parsed]),
                n_dropped=sum(p.n_dropped for p in parsed),
                n_clamped=sum(p.score_clamped for p in parsed),
                responses=records,
            )
        )
    return results
