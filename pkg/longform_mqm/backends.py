"""Completion backends and the bounded-concurrency request executor."""

from __future__ import annotations

import asyncio
import logging
import random
import time
from abc import ABC, abstractmethod
from collections import defaultdict
from typing import Dict, List, Mapping, Optional, Sequence

import openai
from tenacity import AsyncRetrying, retry_if_exception, stop_after_attempt, wait_exponential
from tqdm.auto import tqdm

from longform_mqm.cache import ResponseCache, cache_key
from longform_mqm.config import BackendConfig
from longform_mqm.corpus import gold_by_part, gold_part_indices
from longform_mqm.errors import BackendError
from longform_mqm.models import (
    BackendResponse,
    BiasParams,
    ErrorAnnotation,
    ErrorCategory,
    EvalRequest,
    EvalUnit,
    Severity,
    SeverityWeights,
)
from longform_mqm.parsing import serialize_response
from longform_mqm.tokens import TokenCounter, WhitespaceCounter

logger = logging.getLogger(__name__)

TRANSIENT_STATUS = {408, 409, 429}


class Backend(ABC):
    """Something that turns a rendered prompt into model text."""

    @property
    @abstractmethod
    def model_id(self) -> str:
        """Identifier that participates in the cache key."""

    @abstractmethod
    async def generate(self, request: EvalRequest) -> BackendResponse:
        """Produce a response for one request, bypassing the cache."""


##################################################
# live
##################################################


def is_transient(exc: BaseException) -> bool:
    """Timeouts, connection failures, 408/409/429 and 5xx are worth retrying."""
    if isinstance(exc, openai.APIConnectionError):
        return True
    if isinstance(exc, openai.APIStatusError):
        return exc.status_code in TRANSIENT_STATUS or exc.status_code >= 500
    return False


class LiveBackend(Backend):
    """Chat-completion endpoint through the openai SDK with exponential-backoff retries."""

    def __init__(self, config: BackendConfig, client: Optional[openai.AsyncOpenAI] = None):
        self.config = config
        self._client = client

    @property
    def model_id(self) -> str:
        return self.config.model

    @property
    def client(self) -> openai.AsyncOpenAI:
        if self._client is None:
            self._client = openai.AsyncOpenAI(
                api_key=self.config.api_key(),
                base_url=self.config.base_url,
                timeout=self.config.timeout_s,
                max_retries=0,
            )
        return self._client

    async def generate(self, request: EvalRequest) -> BackendResponse:
        bundle = request.bundle
        started = time.perf_counter()
        retrying = AsyncRetrying(
            stop=stop_after_attempt(self.config.max_attempts),
            wait=wait_exponential(multiplier=self.config.backoff_initial_s, max=self.config.backoff_max_s),
            retry=retry_if_exception(is_transient),
            reraise=True,
        )
        try:
            async for attempt in retrying:
                with attempt:
                    if attempt.retry_state.attempt_number > 1:
                        logger.info(
                            "Retrying %s (attempt %d)", request.request_id, attempt.retry_state.attempt_number
                        )
                    completion = await self.client.chat.completions.create(
                        model=self.config.model,
                        messages=[{"role": "user", "content": bundle.prompt}],
                        temperature=bundle.decoding.temperature,
                        max_tokens=bundle.decoding.max_output_tokens,
                    )
        except openai.APIStatusError as e:
            raise BackendError(str(e), status=e.status_code, unit_id=request.unit_id) from e
        except openai.APIConnectionError as e:
            raise BackendError(str(e), unit_id=request.unit_id) from e

        usage = completion.usage
        return BackendResponse(
            text=completion.choices[0].message.content or "",
            input_tokens=(usage.prompt_tokens or 0) if usage else 0,
            output_tokens=(usage.completion_tokens or 0) if usage else 0,
            latency_ms=int((time.perf_counter() - started) * 1000),
            model_id=completion.model or self.config.model,
        )


##################################################
# deterministic doubles
##################################################


_DA_WEIGHTS = SeverityWeights(per_unit_cap=None)


def _da_from(annotations: Sequence[ErrorAnnotation]) -> int:
    penalty = sum(_DA_WEIGHTS.weight(a.severity) for a in annotations)
    return int(max(0, round(100 - penalty)))


class _UnitBackend(Backend):
    def __init__(self, units: Mapping[str, EvalUnit], counter: Optional[TokenCounter] = None):
        self.units = units
        self.counter = counter or WhitespaceCounter()

    def _unit(self, request: EvalRequest) -> EvalUnit:
        try:
            return self.units[request.unit_id]
        except KeyError:
            raise BackendError("unknown unit", unit_id=request.unit_id) from None

    def _respond(self, request: EvalRequest, annotations: List[ErrorAnnotation]) -> BackendResponse:
        score = _da_from(annotations) if request.bundle.expects_da else None
        text = serialize_response(annotations, with_explanations=True, quality_score=score)
        return BackendResponse(
            text=text,
            input_tokens=self.counter(request.bundle.prompt),
            output_tokens=self.counter(text),
            latency_ms=0,
            model_id=self.model_id,
        )


class OracleBackend(_UnitBackend):
    """Answers with the unit's gold spans (restricted to the focus segment when given)."""

    @property
    def model_id(self) -> str:
        return "oracle"

    async def generate(self, request: EvalRequest) -> BackendResponse:
        unit = self._unit(request)
        return self._respond(request, oracle_annotations(unit, request.focus_index))


def oracle_annotations(unit: EvalUnit, focus: Optional[int] = None) -> List[ErrorAnnotation]:
    spans = list(unit.gold) if focus is None else gold_by_part(unit)[focus]
    return [
        ErrorAnnotation(
            span_text=unit.tgt[g.start : g.end],
            explanation="gold",
            category=ErrorCategory.ACCURACY,
            error_type=g.category,
            severity=g.severity,
        )
        for g in spans
    ]


class BiasedBackend(_UnitBackend):
    """
    Length-bias simulator: every gold span is emitted with probability
    ``base_recall * 2 ** (-L / halflife_tokens)``.

    L counts the unit's source and translation tokens, or only the focus
    segment's when a focus is given. One RNG per (seed, unit_id, span index).
    """

    def __init__(
        self, units: Mapping[str, EvalUnit], params: BiasParams, counter: Optional[TokenCounter] = None
    ):
        super().__init__(units, counter)
        self.params = params

    @property
    def model_id(self) -> str:
        p = self.params
        return f"sim-r{p.base_recall}-h{p.halflife_tokens}-n{p.severity_noise}-s{p.seed}"

    def length(self, unit: EvalUnit, focus: Optional[int]) -> int:
        if focus is None:
            return self.counter(unit.src) + self.counter(unit.tgt)
        return self.counter(unit.part_src(focus)) + self.counter(unit.part_tgt(focus))

    def emit(self, unit: EvalUnit, focus: Optional[int]) -> List[ErrorAnnotation]:
        p = self.params.emission_probability(self.length(unit, focus))
        owners = gold_part_indices(unit)
        out = []
        for index, span in enumerate(unit.gold):
            if focus is not None and owners[index] != focus:
                continue
            rng = random.Random(f"{self.params.seed}:{unit.unit_id}:{index}")
            if rng.random() >= p:
                continue
            severity = span.severity
            if rng.random() < self.params.severity_noise:
                severity = rng.choice([s for s in Severity if s != span.severity])
            out.append(
                ErrorAnnotation(
                    span_text=unit.tgt[span.start : span.end],
                    explanation="simulated",
                    category=ErrorCategory.ACCURACY,
                    error_type=span.category,
                    severity=severity,
                )
            )
        return out

    async def generate(self, request: EvalRequest) -> BackendResponse:
        unit = self._unit(request)
        return self._respond(request, self.emit(unit, request.focus_index))


##################################################
# executor
##################################################


class TokenBucket:
    """Async token bucket refilled continuously at ``rate_per_minute``."""

    def __init__(self, rate_per_minute: float, capacity: Optional[float] = None):
        self.rate = rate_per_minute / 60.0
        self.capacity = capacity or max(1.0, self.rate)
        self._tokens = self.capacity
        self._updated = time.monotonic()
        self._lock = asyncio.Lock()

    async def acquire(self) -> None:
        async with self._lock:
            while True:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._updated) * self.rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                await asyncio.sleep((1.0 - self._tokens) / self.rate)


async def complete(
    request: EvalRequest,
    backend: Backend,
    cache: Optional[ResponseCache] = None,
    bucket: Optional[TokenBucket] = None,
) -> BackendResponse:
    """
    Answer one request, from the cache when possible.

    Raises:
        BackendError: On a non-transient failure or when retries run out
        CacheCorruptionError: If a cached entry cannot be trusted
    """
    key = cache_key(backend.model_id, request.bundle.prompt, request.bundle.decoding)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    if bucket is not None:
        await bucket.acquire()
    response = await backend.generate(request)
    if cache is not None:
        cache.put(key, response)
    return response


async def run_requests(
    requests: Sequence[EvalRequest],
    backend: Backend,
    cache: Optional[ResponseCache] = None,
    concurrency: int = 8,
    rate_limit_rpm: Optional[float] = None,
    progress: bool = True,
) -> Dict[str, BackendResponse]:
    """
    Execute requests with at most ``concurrency`` in flight.

    Requests sharing a cache key are serialized so a duplicate is answered
    from the cache. Results are keyed by request_id, independent of
    completion order.
    """
    semaphore = asyncio.Semaphore(concurrency)
    bucket = TokenBucket(rate_limit_rpm) if rate_limit_rpm else None
    locks: Dict[str, asyncio.Lock] = defaultdict(asyncio.Lock)
    results: Dict[str, BackendResponse] = {}
    bar = tqdm(total=len(requests), desc=backend.model_id, unit="req", disable=not progress)

    async def one(request: EvalRequest) -> None:
        key = cache_key(backend.model_id, request.bundle.prompt, request.bundle.decoding)
        async with semaphore, locks[key]:
            results[request.request_id] = await complete(request, backend, cache, bucket)
        bar.update(1)

    try:
        await asyncio.gather(*(one(r) for r in requests))
    finally:
        bar.close()
    return results
