"""Chat fine-tuning data at mixed granularities from a gold-annotated corpus."""

from __future__ import annotations

import logging
from collections import Counter
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from longform_mqm.artifacts import write_json, write_jsonl
from longform_mqm.corpus import DEFAULT_GROUP_SIZE, DEFAULT_JOINER, build_granularity
from longform_mqm.errors import PromptError
from longform_mqm.models import (
    ChatMessage,
    FtExample,
    Granularity,
    ParseStatus,
    PromptFamily,
    PromptOptions,
    Segment,
)
from longform_mqm.parsing import annotations_from_gold, parse_mqm_response, serialize_response
from longform_mqm.prompting import render_gemba

logger = logging.getLogger(__name__)

DEFAULT_EPOCHS_NOTE = "2 epochs"

# zero-shot GEMBA input; gold carries neither explanations nor a DA score
FT_PROMPT = PromptOptions(family=PromptFamily.GEMBA, n_shots=0, with_explanations=False, with_da=False)


def build_ft_examples(
    train_segments: Sequence[Segment],
    group_size: int = DEFAULT_GROUP_SIZE,
    seed: int = 7,
    joiner: str = DEFAULT_JOINER,
) -> Tuple[List[FtExample], Dict[str, int]]:
    """
    One example per gold-annotated unit at every granularity.

    Returns the examples and the number skipped per granularity.
    """
    examples: List[FtExample] = []
    skipped: Counter = Counter()
    for level in Granularity:
        for unit in build_granularity(train_segments, level, group_size=group_size, seed=seed, joiner=joiner):
            if not unit.has_gold:
                continue
            answer = serialize_response(annotations_from_gold(unit.tgt, unit.gold), with_explanations=False)
            if parse_mqm_response(answer).parse_status != ParseStatus.CLEAN:
                logger.warning("%s: gold answer does not re-parse cleanly, skipped", unit.unit_id)
                skipped[level.value] += 1
                continue
            try:
                bundle = render_gemba(unit, FT_PROMPT)
            except PromptError as e:
                logger.warning("%s: %s, skipped", unit.unit_id, e)
                skipped[level.value] += 1
                continue
            examples.append(
                FtExample(
                    granularity=level,
                    messages=[
                        ChatMessage(role="system", content=bundle.shared_prefix),
                        ChatMessage(role="user", content=bundle.suffix),
                        ChatMessage(role="assistant", content=answer),
                    ],
                )
            )
    return examples, {g.value: skipped.get(g.value, 0) for g in Granularity}


def export_ft(
    train_segments: Sequence[Segment],
    out_dir: Union[str, Path],
    group_size: int = DEFAULT_GROUP_SIZE,
    seed: int = 7,
    epochs_note: Optional[str] = DEFAULT_EPOCHS_NOTE,
    joiner: str = DEFAULT_JOINER,
) -> Dict:
    """
    Write ``ft.jsonl`` (one ``{"messages": [...]}`` per line) and ``ft_stats.json``.

    Returns the stats written.
    """
    out_dir = Path(out_dir)
    examples, skipped = build_ft_examples(train_segments, group_size=group_size, seed=seed, joiner=joiner)
    write_jsonl(out_dir / "ft.jsonl", (e.model_dump(mode="json", include={"messages"}) for e in examples))
    counts = Counter(e.granularity.value for e in examples)
    stats = {
        "counts": {g.value: counts.get(g.value, 0) for g in Granularity},
        "skipped": skipped,
        "total": len(examples),
        "group_size": group_size,
        "seed": seed,
        "epochs_note": epochs_note,
    }
    write_json(out_dir / "ft_stats.json", stats)
    logger.info("Exported %d fine-tuning examples to %s", len(examples), out_dir)
    return stats
