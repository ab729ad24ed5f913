"""Prompt text fragments.

Slots use ``{{ name }}`` and are filled with :func:`fill`; ``str.format`` is
not usable because the schema blocks contain literal braces.
"""

from __future__ import annotations

import re
from typing import Mapping

INSTRUCTION = (
    "You are an annotator for the quality of machine translation. Your task is to identify "
    "errors and assess the quality of the translation using MQM. Based on the source text "
    "(in <source></source> tags) and machine translation surrounded (in <translation>"
    "</translation> tags), identify error types in the translation and classify them. The "
    "categories of errors are: accuracy (addition, mistranslation, omission, untranslated "
    "text, wrong language), fluency (character encoding, grammar, inconsistency, punctuation, "
    "register, spelling), style (awkward), terminology (inappropriate for context, "
    "inconsistent use), other. Each error, including omissions or untranslated content, is "
    "classified as one of three categories: critical, major, and minor. Critical errors "
    "inhibit comprehension of the text. Major errors disrupt the flow, but what the text is "
    "trying to say is still understandable. Minor errors are technically errors, but do not "
    "disrupt the flow or hinder comprehension. The source text muss be fully covered and any "
    "omissions should also be annotated as errors. Please only include errors and no spans "
    "that do not contain errors."
)

FSP_INSTRUCTION_TAIL = (
    " You will be given a full document and its translations, but only score one sentence "
    "at a time which is given in <target_segment></target_segment> tags."
)

SCHEMA_HEADER = "Please respond in JSON following this schema:\n"

_SCHEMA_OPEN = """{
  "type": "object",
  "properties": {
    "errors": {
      "type": "array",
      "items": {
        "type": "object",
        "properties": {
          "error_span": {
            "type": "string",
            "description": "The relevant input span where the error occurred."
          },
"""

_EXPLANATION_PROPERTY = """          "explanation": {
            "type": "string",
            "description": "A brief explanation of the error and its impact"
          },
"""

_SCHEMA_ITEM_TAIL = """          "error_category": {
            "type": "string",
            "enum": ["accuracy", "fluency", "style", "terminology", "other"],
            "description": "The main category of the error"
          },
          "error_type": {
            "type": "string",
            "description": "The specific type of error within the category"
          },
          "severity": {
            "type": "string",
            "enum": ["critical", "major", "minor"],
            "description": "The severity level of the error"
          },
        },
        "required": [{{ item_required }}]
      }
    }"""

_QUALITY_SCORE_PROPERTY = """,
    "quality_score": {
      "type": "integer",
      "description": "Overall quality score of the translation. After highlighting all errors, please choose the overall quality score. The quality levels associated with numerical scores: 0: No meaning preserved: Nearly all information is lost in the translation. 33: Some meaning preserved: Some of the meaning is preserved but significant parts are missing. The narrative is hard to follow due to errors. The text may be phrased in an unnatural/awkward way. Grammar may be poor. 66: Most meaning preserved and few grammar mistakes: The translation retains most of the meaning. It may have some grammar mistakes or minor inconsistencies. 100: Perfect meaning and grammar: The meaning and grammar of the translation is completely consistent with the source. The text sounds like native text in the the target language without any awkward phrases. Use any number in the range between 0 and 100 for a fine-grained quality score."
    }"""

_SCHEMA_CLOSE = """
  },
  "required": [{{ top_required }}]
}"""

EXAMPLES_HEADER = "Here are some examples:\n"

DEMO_BLOCK = """<input>
<source_language>{{ src_lang }}</source_language>
<source>{{ src }}</source>
<target_language>{{ tgt_lang }}</target_language>
<translation>{{ output_seq }}</translation>
</input>

MQM:
{{ answer }}"""

FSP_DEMO_BLOCK = """<input>
<source_language>{{ src_lang }}</source_language>
<source>{{ src }}</source>
<target_language>{{ tgt_lang }}</target_language>
<translation>{{ output_seq }}</translation>
<target_segment>{{ target_segment }}</target_segment>
</input>

MQM:
{{ answer }}"""

SCORED_INPUT = """Please score the following input
<input>
<source_language>{{ src_lang }}</source_language>
<source>{{ src }}</source>
<target_language>{{ tgt_lang }}</target_language>
<translation>{{ output_seq }}</translation>
</input>

"""

FSP_SCORED_DOCUMENT = """Please score the following input
<input>
<source_language>{{ src_lang }}</source_language>
<source>{{ src }}</source>
<target_language>{{ tgt_lang }}</target_language>
<translation>{{ output_seq }}</translation>
"""

FSP_SCORED_SEGMENT = """<target_segment>{{ target_segment }}</target_segment>
</input>

"""

GEMBA_CLOSING = (
    "Please respond in JSON without any introduction or explanation. "
    "Only the JSON response is required.\n\nMQM:"
)

FSP_CLOSING = (
    "Please respond in JSON without any introduction or explanation. "
    "Only the JSON response is required. Use the full document as context while only "
    "scoring the translation segment given in <target_segment></target_segment> tags."
    "\n\nMQM:"
)

_GMICL_CLOSING_LEAD = (
    "Please respond only in JSON without any introduction. Only the JSON response is required."
)

_SLOT = re.compile(r"\{\{ (\w+) \}\}")


def fill(template: str, values: Mapping[str, str]) -> str:
    """Substitute every ``{{ name }}`` slot in one pass; unknown slots raise KeyError."""
    return _SLOT.sub(lambda m: values[m.group(1)], template)


def schema_block(with_explanations: bool, with_da: bool) -> str:
    """JSON response schema shown to the evaluator."""
    item_required = ["error_category", "error_type", "severity"]
    if with_explanations:
        item_required.insert(0, "explanation")
    top_required = ["errors", "quality_score"] if with_da else ["errors"]
    text = _SCHEMA_OPEN
    if with_explanations:
        text += _EXPLANATION_PROPERTY
    text += fill(_SCHEMA_ITEM_TAIL, {"item_required": _quoted(item_required)})
    if with_da:
        text += _QUALITY_SCORE_PROPERTY
    return text + fill(_SCHEMA_CLOSE, {"top_required": _quoted(top_required)})


def gmicl_closing(with_explanations: bool, with_da: bool) -> str:
    """Closing of the GMICL prompt; demos never carry what is requested here."""
    if with_explanations and with_da:
        return (
            _GMICL_CLOSING_LEAD
            + " Unlike the examples you will include error span explanations and a final"
            " quality_score.\n\nMQM (with explanation, with quality_score):"
        )
    if with_explanations:
        return (
            _GMICL_CLOSING_LEAD
            + " Unlike the examples you will include error span explanations."
            "\n\nMQM (with explanation):"
        )
    if with_da:
        return (
            _GMICL_CLOSING_LEAD
            + " Unlike the examples you will include a final quality_score."
            "\n\nMQM (with quality_score):"
        )
    return _GMICL_CLOSING_LEAD + "\n\nMQM:"


def _quoted(names: list) -> str:
    return ", ".join(f'"{n}"' for n in names)
