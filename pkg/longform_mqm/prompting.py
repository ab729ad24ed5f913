"""Rendering of GEMBA-style, focus-segment and granularity-matched prompts."""

from __future__ import annotations

import hashlib
import json
import logging
import random
from collections import Counter
from functools import lru_cache
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple, Union

from pydantic import ValidationError

from longform_mqm import templates
from longform_mqm.artifacts import iter_jsonl, write_jsonl
from longform_mqm.config import DEFAULT_MAX_OUTPUT_TOKENS
from longform_mqm.corpus import build_granularity
from longform_mqm.errors import CorpusError, PromptError, RecordError
from longform_mqm.models import (
    DecodingParams,
    Demonstration,
    EvalUnit,
    Granularity,
    ParseStatus,
    PromptBundle,
    PromptFamily,
    PromptOptions,
    Segment,
)
from longform_mqm.parsing import annotations_from_gold, parse_mqm_response, serialize_response
from longform_mqm.resources import PackageResourceProvider, ResourceProvider
from longform_mqm.tokens import TokenCounter, WhitespaceCounter

logger = logging.getLogger(__name__)

GMICL_SHOTS = 5

LANGUAGE_NAMES = {
    "ar": "Arabic",
    "cs": "Czech",
    "de": "German",
    "en": "English",
    "es": "Spanish",
    "fr": "French",
    "he": "Hebrew",
    "hi": "Hindi",
    "is": "Icelandic",
    "it": "Italian",
    "ja": "Japanese",
    "ko": "Korean",
    "nl": "Dutch",
    "pl": "Polish",
    "pt": "Portuguese",
    "ru": "Russian",
    "uk": "Ukrainian",
    "zh": "Chinese",
}


def language_names(lp: str, opts: PromptOptions) -> Tuple[str, str]:
    """Source and target language names: explicit options first, then the lp code."""
    src_code, _, tgt_code = lp.partition("-")
    src = opts.src_lang or LANGUAGE_NAMES.get(src_code.lower(), src_code)
    tgt = opts.tgt_lang or LANGUAGE_NAMES.get(tgt_code.lower(), tgt_code)
    return src, tgt


def _bundle(prefix: str, suffix: str, decoding: DecodingParams, expects_da: bool) -> PromptBundle:
    return PromptBundle(
        shared_prefix=prefix,
        suffix=suffix,
        decoding=decoding,
        cache_key=hashlib.sha256(prefix.encode("utf-8")).hexdigest(),
        expects_da=expects_da,
    )


def _decoding(unit: EvalUnit, decoding: Optional[DecodingParams]) -> DecodingParams:
    if decoding is not None:
        return decoding
    return DecodingParams(max_output_tokens=DEFAULT_MAX_OUTPUT_TOKENS[unit.granularity])


##################################################
# demonstrations
##################################################


@lru_cache(maxsize=4)
def _fixed_demos(provider: ResourceProvider) -> Tuple[Demonstration, ...]:
    records = json.loads(provider.get_resource_content("gemba_demos.json"))
    demos = []
    for r in records:
        demos.append(
            Demonstration(
                demo_id=r["demo_id"],
                src=r["src"],
                tgt=r["tgt"],
                gold_response=json.dumps({"errors": r["errors"]}, indent=2, ensure_ascii=False),
                granularity=Granularity.SEG,
                src_lang=r["src_lang"],
                tgt_lang=r["tgt_lang"],
            )
        )
    return tuple(demos)


_default_provider = PackageResourceProvider()


def load_gemba_demos(provider: Optional[ResourceProvider] = None) -> List[Demonstration]:
    """The three fixed GEMBA demonstrations (EN-DE, EN-CS, ZH-EN)."""
    return list(_fixed_demos(provider or _default_provider))


def _demo_answer(demo: Demonstration, with_explanations: bool) -> str:
    parsed = parse_mqm_response(demo.gold_response, expects_da=False)
    if parsed.parse_status != ParseStatus.CLEAN:
        raise PromptError(f"demonstration '{demo.demo_id}' has a gold_response that does not parse cleanly")
    return serialize_response(parsed.errors, with_explanations=with_explanations)


def _demo_block(demo: Demonstration, with_explanations: bool, src_lang: str, tgt_lang: str, fsp: bool = False) -> str:
    values = {
        "src_lang": demo.src_lang or src_lang,
        "src": demo.src,
        "tgt_lang": demo.tgt_lang or tgt_lang,
        "output_seq": demo.tgt,
        "target_segment": demo.tgt,
        "answer": _demo_answer(demo, with_explanations),
    }
    return templates.fill(templates.FSP_DEMO_BLOCK if fsp else templates.DEMO_BLOCK, values)


##################################################
# families
##################################################


def render_gemba(
    unit: EvalUnit,
    opts: PromptOptions,
    decoding: Optional[DecodingParams] = None,
    provider: Optional[ResourceProvider] = None,
) -> PromptBundle:
    """
    Single-pass GEMBA-style prompt over the whole unit.

    Raises:
        PromptError: If the family is not gemba or the translation is empty
    """
    if opts.family != PromptFamily.GEMBA:
        raise PromptError(f"render_gemba called with family {opts.family.value}")
    if not unit.tgt:
        raise PromptError(f"{unit.unit_id}: empty translation")
    src_lang, tgt_lang = language_names(unit.lp, opts)
    demos = load_gemba_demos(provider)[: opts.n_shots]
    prefix = (
        templates.INSTRUCTION
        + "\n\n"
        + templates.SCHEMA_HEADER
        + templates.schema_block(opts.with_explanations, opts.with_da)
        + "\n\n"
        + "".join(_demo_block(d, opts.with_explanations, src_lang, tgt_lang) + "\n\n" for d in demos)
    )
    suffix = (
        templates.fill(
            templates.SCORED_INPUT,
            {"src_lang": src_lang, "src": unit.src, "tgt_lang": tgt_lang, "output_seq": unit.tgt},
        )
        + templates.GEMBA_CLOSING
    )
    return _bundle(prefix, suffix, _decoding(unit, decoding), opts.with_da)


def render_fsp(
    doc_unit: EvalUnit,
    focus_index: int,
    opts: PromptOptions,
    decoding: Optional[DecodingParams] = None,
    provider: Optional[ResourceProvider] = None,
) -> PromptBundle:
    """
    Focus-segment prompt: full documents in the prefix, one segment in the suffix.

    Every focus of the same unit shares the prefix and therefore the cache_key.

    Raises:
        PromptError: If focus_index is out of range or the family is not fsp
        CorpusError: If the recorded part lies outside the translation
    """
    if opts.family != PromptFamily.FSP:
        raise PromptError(f"render_fsp called with family {opts.family.value}")
    if not 0 <= focus_index < len(doc_unit.parts):
        raise PromptError(f"{doc_unit.unit_id}: focus_index {focus_index} out of range 0..{len(doc_unit.parts) - 1}")
    part = doc_unit.parts[focus_index]
    if part.tgt_end > len(doc_unit.tgt):
        raise CorpusError(f"{doc_unit.unit_id}: focus segment {part.doc_id}#{part.seg_index} not found at its offset")
    if not doc_unit.tgt:
        raise PromptError(f"{doc_unit.unit_id}: empty translation")
    src_lang, tgt_lang = language_names(doc_unit.lp, opts)
    demos = load_gemba_demos(provider)[: opts.n_shots]
    prefix = (
        templates.INSTRUCTION
        + templates.FSP_INSTRUCTION_TAIL
        + "\n\n"
        + templates.SCHEMA_HEADER
        + templates.schema_block(opts.with_explanations, opts.with_da)
        + "\n\n"
        + "".join(_demo_block(d, opts.with_explanations, src_lang, tgt_lang, fsp=True) + "\n\n" for d in demos)
        + templates.fill(
            templates.FSP_SCORED_DOCUMENT,
            {"src_lang": src_lang, "src": doc_unit.src, "tgt_lang": tgt_lang, "output_seq": doc_unit.tgt},
        )
    )
    suffix = (
        templates.fill(templates.FSP_SCORED_SEGMENT, {"target_segment": doc_unit.part_tgt(focus_index)})
        + templates.FSP_CLOSING
    )
    return _bundle(prefix, suffix, _decoding(doc_unit, decoding), opts.with_da)


def select_gm_demos(
    pool: Sequence[Demonstration],
    unit: EvalUnit,
    k: int = GMICL_SHOTS,
    seed: int = 0,
    match: Literal["granularity", "length"] = "granularity",
    counter: Optional[TokenCounter] = None,
) -> List[Demonstration]:
    """
    Pick ``k`` demonstrations of the unit's granularity.

    ``granularity``: uniform draw without replacement. ``length``: the ``k``
    closest in token length, ties broken by the seeded order. The draw is
    seeded by ``seed`` and the unit id.

    Raises:
        PromptError: If fewer than ``k`` demonstrations of that granularity exist
    """
    candidates = sorted((d for d in pool if d.granularity == unit.granularity), key=lambda d: d.demo_id)
    if len(candidates) < k:
        available = Counter(d.granularity.value for d in pool)
        counts = ", ".join(f"{g.value}: {available.get(g.value, 0)}" for g in Granularity)
        raise PromptError(
            f"insufficient demonstrations for {unit.granularity.value}: need {k}, available {{{counts}}}"
        )
    rng = random.Random(f"{seed}:{unit.unit_id}")
    if match == "granularity":
        return rng.sample(candidates, k)
    counter = counter or WhitespaceCounter()
    target = counter(unit.src) + counter(unit.tgt)
    order = list(range(len(candidates)))
    rng.shuffle(order)
    rank = {i: r for r, i in enumerate(order)}
    best = sorted(range(len(candidates)), key=lambda i: (abs(candidates[i].token_len - target), rank[i]))
    return [candidates[i] for i in best[:k]]


def render_gmicl(
    unit: EvalUnit,
    demos: Sequence[Demonstration],
    opts: PromptOptions,
    decoding: Optional[DecodingParams] = None,
) -> PromptBundle:
    """
    Granularity-matched five-shot prompt.

    Demo answers carry neither explanations nor quality_score; the closing
    line asks for whatever the options request for the scored input.

    Raises:
        PromptError: If there are not exactly five demos or a demo answer does not parse
    """
    if opts.family != PromptFamily.GMICL:
        raise PromptError(f"render_gmicl called with family {opts.family.value}")
    if len(demos) != GMICL_SHOTS:
        raise PromptError(f"gmicl needs exactly {GMICL_SHOTS} demonstrations, got {len(demos)}")
    if not unit.tgt:
        raise PromptError(f"{unit.unit_id}: empty translation")
    src_lang, tgt_lang = language_names(unit.lp, opts)
    prefix = (
        templates.INSTRUCTION
        + " \n\n"
        + templates.SCHEMA_HEADER
        + templates.schema_block(opts.with_explanations, opts.with_da)
        + "\n\n"
        + templates.EXAMPLES_HEADER
        + "".join(_demo_block(d, False, src_lang, tgt_lang) + "\n\n" for d in demos)
    )
    suffix = templates.fill(
        templates.SCORED_INPUT,
        {"src_lang": src_lang, "src": unit.src, "tgt_lang": tgt_lang, "output_seq": unit.tgt},
    ) + templates.gmicl_closing(opts.with_explanations, opts.with_da)
    return _bundle(prefix, suffix, _decoding(unit, decoding), opts.with_da)


##################################################
# demo pools
##################################################


def load_demo_pool(path: Union[str, Path]) -> List[Demonstration]:
    """Read a JSONL pool of Demonstration records."""
    pool = []
    try:
        for lineno, record in iter_jsonl(path):
            try:
                pool.append(Demonstration.model_validate(record))
            except ValidationError as e:
                raise PromptError(f"{path}: line {lineno}: invalid demonstration: {e}") from e
    except RecordError as e:
        raise PromptError(str(e)) from e
    logger.info("Loaded %d demonstrations from %s", len(pool), path)
    return pool


def build_demo_pool(
    segments: Sequence[Segment],
    group_size: int = 5,
    seed: int = 7,
    joiner: str = "\n",
    counter: Optional[TokenCounter] = None,
) -> List[Demonstration]:
    """Demonstrations at every granularity from a gold-annotated training corpus."""
    counter = counter or WhitespaceCounter()
    pool = []
    for level in Granularity:
        for unit in build_granularity(segments, level, group_size=group_size, seed=seed, joiner=joiner):
            if not unit.has_gold:
                continue
            pool.append(
                Demonstration(
                    demo_id=unit.unit_id,
                    src=unit.src,
                    tgt=unit.tgt,
                    gold_response=serialize_response(
                        annotations_from_gold(unit.tgt, unit.gold), with_explanations=False
                    ),
                    granularity=unit.granularity,
                    token_len=counter(unit.src) + counter(unit.tgt),
                )
            )
    return pool


def write_demo_pool(path: Union[str, Path], pool: Sequence[Demonstration]) -> int:
    return write_jsonl(path, pool)
