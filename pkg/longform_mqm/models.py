"""Domain model definitions for the long-form MQM evaluation harness."""

from __future__ import annotations

import math
from enum import Enum
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Granularity(str, Enum):
    """Evaluation granularity."""

    SEG = "seg"
    DOC = "doc"
    DOC5 = "doc5"


class Severity(str, Enum):
    """MQM error severity."""

    MINOR = "minor"
    MAJOR = "major"
    CRITICAL = "critical"


class ErrorCategory(str, Enum):
    """Top-level MQM error category."""

    ACCURACY = "accuracy"
    FLUENCY = "fluency"
    STYLE = "style"
    TERMINOLOGY = "terminology"
    OTHER = "other"


class ParseStatus(str, Enum):
    """Outcome of parsing a model response."""

    CLEAN = "clean"
    RECOVERED = "recovered"
    FAILED = "failed"


class PromptFamily(str, Enum):
    """Prompt family used to query the evaluator."""

    GEMBA = "gemba"
    FSP = "fsp"
    GMICL = "gmicl"


class ScoreMethod(str, Enum):
    """How a unit score was derived."""

    MQM_WEIGHTED = "mqm_weighted"
    DA = "da"


##################################################
# corpus
##################################################


class GoldSpan(BaseModel):
    """Human gold MQM error with character offsets into a translation."""

    model_config = ConfigDict(frozen=True)

    start: int = Field(ge=0, description="Inclusive character offset")
    end: int = Field(ge=0, description="Exclusive character offset")
    severity: Severity = Field(description="Error severity")
    category: str = Field(default="", description="Category label from the gold scheme")
    is_omission: bool = Field(default=False, description="Zero-width omission marker")

    @model_validator(mode="after")
    def _check_width(self) -> "GoldSpan":
        if self.end < self.start:
            raise ValueError(f"gold span end {self.end} precedes start {self.start}")
        if self.is_omission != (self.start == self.end):
            raise ValueError("is_omission must be set exactly for zero-width spans")
        return self

    def shifted(self, offset: int) -> "GoldSpan":
        """Return a copy moved right by ``offset`` characters."""
        return self.model_copy(update={"start": self.start + offset, "end": self.end + offset})


class Segment(BaseModel):
    """One source segment with its system translations and gold annotations."""

    doc_id: str = Field(description="Document identifier")
    seg_index: int = Field(ge=0, description="0-based order within the document")
    src: str = Field(description="Source text")
    lp: str = Field(default="", description="Translation direction, e.g. en-de")
    translations: Dict[str, str] = Field(default_factory=dict, description="system_id -> translation")
    gold: Dict[str, List[GoldSpan]] = Field(
        default_factory=dict, description="system_id -> gold spans"
    )

    @model_validator(mode="after")
    def _check_gold(self) -> "Segment":
        for system_id, spans in self.gold.items():
            if system_id not in self.translations:
                raise ValueError(
                    f"gold annotations for unknown system '{system_id}' in {self.doc_id}#{self.seg_index}"
                )
            tgt = self.translations[system_id]
            for span in spans:
                if span.end > len(tgt):
                    raise ValueError(
                        f"gold span out of range in {self.doc_id}#{self.seg_index}/{system_id}: "
                        f"[{span.start},{span.end}) exceeds length {len(tgt)}"
                    )
        return self


class SegmentPart(BaseModel):
    """Position of one corpus segment inside a concatenated unit."""

    model_config = ConfigDict(frozen=True)

    doc_id: str
    seg_index: int = Field(ge=0)
    tgt_offset: int = Field(ge=0, description="Start of the segment translation in unit.tgt")
    tgt_len: int = Field(ge=0)
    src_offset: int = Field(ge=0, description="Start of the segment source in unit.src")
    src_len: int = Field(ge=0)

    @property
    def tgt_end(self) -> int:
        return self.tgt_offset + self.tgt_len


class EvalUnit(BaseModel):
    """One scoreable item at a given granularity for one system."""

    model_config = ConfigDict(frozen=True)

    run_id: str = Field(default="", description="Set when the unit is copied into a run directory")
    unit_id: str
    granularity: Granularity
    system_id: str
    lp: str = ""
    src: str
    tgt: str
    parts: List[SegmentPart] = Field(default_factory=list)
    gold: List[GoldSpan] = Field(default_factory=list, description="Offsets into tgt")
    n_source_docs: int = Field(default=1, ge=1)
    has_gold: bool = Field(
        default=False, description="Every constituent segment carries a gold set for this system"
    )

    @model_validator(mode="after")
    def _check_offsets(self) -> "EvalUnit":
        previous = -1
        for part in self.parts:
            if part.tgt_offset <= previous:
                raise ValueError(f"{self.unit_id}: part offsets must be strictly increasing")
            if part.tgt_end > len(self.tgt) or part.src_offset + part.src_len > len(self.src):
                raise ValueError(f"{self.unit_id}: part of {part.doc_id}#{part.seg_index} out of range")
            previous = part.tgt_offset
        for span in self.gold:
            if span.end > len(self.tgt):
                raise ValueError(f"{self.unit_id}: gold span out of range")
        return self

    @property
    def doc_ids(self) -> List[str]:
        """Source documents in order of appearance."""
        return list(dict.fromkeys(part.doc_id for part in self.parts))

    def part_tgt(self, index: int) -> str:
        part = self.parts[index]
        return self.tgt[part.tgt_offset : part.tgt_end]

    def part_src(self, index: int) -> str:
        part = self.parts[index]
        return self.src[part.src_offset : part.src_offset + part.src_len]


class StatsRow(BaseModel):
    """Corpus statistics for one granularity."""

    granularity: Granularity
    n_items: int
    mean_tokens: Optional[float] = Field(default=None, description="Absent for empty granularities")


##################################################
# prompting
##################################################


class PromptOptions(BaseModel):
    """Options that select and shape a prompt family."""

    model_config = ConfigDict(frozen=True)

    family: PromptFamily = PromptFamily.GEMBA
    n_shots: int = Field(default=3, description="0, 3 or 5 demonstrations")
    with_explanations: bool = True
    with_da: bool = False
    src_lang: str = Field(default="", description="Source language name; derived from lp when empty")
    tgt_lang: str = Field(default="", description="Target language name; derived from lp when empty")

    @model_validator(mode="after")
    def _check_shots(self) -> "PromptOptions":
        if self.n_shots not in (0, 3, 5):
            raise ValueError(f"n_shots must be 0, 3 or 5, got {self.n_shots}")
        if self.family == PromptFamily.GMICL and self.n_shots != 5:
            raise ValueError("gmicl prompts always carry 5 demonstrations")
        if self.family != PromptFamily.GMICL and self.n_shots == 5:
            raise ValueError(f"{self.family.value} prompts take 0 or 3 demonstrations")
        return self

    @property
    def method_label(self) -> str:
        """Short method name used in reports, e.g. ``fsp-3shot``."""
        label = f"{self.family.value}-{self.n_shots}shot"
        if not self.with_explanations:
            label += "-noexpl"
        if self.with_da:
            label += "-da"
        return label


class DecodingParams(BaseModel):
    """Decoding contract sent with every request."""

    model_config = ConfigDict(frozen=True)

    temperature: float = Field(default=0.0, ge=0.0, le=0.0, description="Always 0")
    max_output_tokens: int = Field(default=4096, gt=0)


class PromptBundle(BaseModel):
    """Fully rendered request split into a cacheable prefix and a unit-specific suffix."""

    model_config = ConfigDict(frozen=True)

    shared_prefix: str
    suffix: str
    decoding: DecodingParams = Field(default_factory=DecodingParams)
    cache_key: str = Field(description="Stable hash of shared_prefix")
    expects_da: bool = False

    @property
    def prompt(self) -> str:
        return self.shared_prefix + self.suffix


class Demonstration(BaseModel):
    """Annotated example shown to the evaluator."""

    model_config = ConfigDict(frozen=True)

    demo_id: str = ""
    src: str
    tgt: str
    gold_response: str = Field(description="Serialized MQM JSON answer")
    granularity: Granularity
    token_len: int = Field(default=0, ge=0)
    src_lang: Optional[str] = None
    tgt_lang: Optional[str] = None


##################################################
# parsing
##################################################


class ErrorAnnotation(BaseModel):
    """One predicted (or gold-derived) MQM error."""

    model_config = ConfigDict(frozen=True)

    span_text: str = Field(default="", description="Verbatim span, empty for omissions")
    explanation: Optional[str] = None
    category: ErrorCategory = ErrorCategory.OTHER
    error_type: str = ""
    severity: Severity

    @property
    def is_omission(self) -> bool:
        return self.span_text == ""


class ParsedResponse(BaseModel):
    """Validated content of one model response."""

    model_config = ConfigDict(frozen=True)

    errors: List[ErrorAnnotation] = Field(default_factory=list)
    quality_score: Optional[int] = Field(default=None, ge=0, le=100)
    parse_status: ParseStatus
    raw_len_chars: int = Field(default=0, ge=0)
    n_dropped: int = Field(default=0, ge=0, description="Annotations dropped by normalization")
    score_clamped: bool = Field(default=False, description="quality_score was out of range")

    @model_validator(mode="after")
    def _check_failed(self) -> "ParsedResponse":
        if self.parse_status == ParseStatus.FAILED and (self.errors or self.quality_score is not None):
            raise ValueError("failed parses carry no errors and no quality_score")
        return self


##################################################
# backends
##################################################


class BackendResponse(BaseModel):
    """Raw model output with accounting."""

    model_config = ConfigDict(frozen=True)

    text: str
    input_tokens: int = Field(default=0, ge=0)
    output_tokens: int = Field(default=0, ge=0)
    latency_ms: int = Field(default=0, ge=0)
    from_cache: bool = False
    model_id: str


class BiasParams(BaseModel):
    """Parameters of the length-bias simulator."""

    model_config = ConfigDict(frozen=True)

    base_recall: float = Field(default=0.95, ge=0.0, le=1.0)
    halflife_tokens: float = Field(default=1500.0, gt=0.0)
    severity_noise: float = Field(default=0.1, ge=0.0, le=1.0)
    seed: int = 0

    def emission_probability(self, length_tokens: int) -> float:
        """p(L) = base_recall * 2^(-L / halflife_tokens)."""
        return self.base_recall * math.pow(2.0, -max(length_tokens, 0) / self.halflife_tokens)


class EvalRequest(BaseModel):
    """One completion to execute for a unit (or one focus segment of it)."""

    model_config = ConfigDict(frozen=True)

    request_id: str
    unit_id: str
    focus_index: Optional[int] = None
    bundle: PromptBundle


class ResponseRecord(BaseModel):
    """Per-request record kept in results.jsonl."""

    request_id: str
    focus_index: Optional[int] = None
    text: str
    input_tokens: int = 0
    output_tokens: int = 0
    latency_ms: int = 0
    from_cache: bool = False
    parse_status: ParseStatus
    n_dropped: int = 0


##################################################
# scoring
##################################################


class SeverityWeights(BaseModel):
    """Penalty per severity with an optional per-unit cap."""

    model_config = ConfigDict(frozen=True)

    minor: float = 1.0
    major: float = 5.0
    critical: float = 10.0
    per_unit_cap: Optional[float] = 25.0

    @model_validator(mode="after")
    def _check_order(self) -> "SeverityWeights":
        if not (0 < self.minor <= self.major <= self.critical):
            raise ValueError("weights must satisfy 0 < minor <= major <= critical")
        if self.per_unit_cap is not None and self.per_unit_cap <= 0:
            raise ValueError("per_unit_cap must be positive")
        return self

    def weight(self, severity: Severity) -> float:
        return {
            Severity.MINOR: self.minor,
            Severity.MAJOR: self.major,
            Severity.CRITICAL: self.critical,
        }[severity]

    def scaled(self, factor: float) -> "SeverityWeights":
        """Multiply every weight and the cap by a positive factor."""
        cap = None if self.per_unit_cap is None else self.per_unit_cap * factor
        return SeverityWeights(
            minor=self.minor * factor,
            major=self.major * factor,
            critical=self.critical * factor,
            per_unit_cap=cap,
        )

    @classmethod
    def parse_flag(cls, value: str) -> "SeverityWeights":
        """Parse ``minor,major,critical[,cap]`` as given on the command line."""
        parts = [float(p) for p in value.split(",") if p.strip()]
        if len(parts) not in (3, 4):
            raise ValueError("--weights expects minor,major,critical[,cap]")
        cap = parts[3] if len(parts) == 4 else None
        return cls(minor=parts[0], major=parts[1], critical=parts[2], per_unit_cap=cap)


class UnitScore(BaseModel):
    """Quality of one unit; higher is better."""

    run_id: str = ""
    unit_id: str
    system_id: str
    granularity: Granularity
    lp: str = ""
    method: ScoreMethod
    score: float
    n_errors: int = Field(ge=0)
    parse_status: ParseStatus = ParseStatus.CLEAN


class SystemScore(BaseModel):
    """Quality of one system aggregated over units."""

    system_id: str
    granularity: Granularity
    method: ScoreMethod
    score: float
    n_units: int = Field(ge=0)
    n_failed: int = 0
    n_excluded: int = 0
    n_clamped: int = 0


##################################################
# metaeval
##################################################


class LocatedSpan(BaseModel):
    """A predicted span assigned to a location in the translation."""

    model_config = ConfigDict(frozen=True)

    start: Optional[int] = None
    end: Optional[int] = None
    length: int = Field(ge=0, description="Length of the predicted span text")
    severity: Severity
    matched: bool


class PRF(BaseModel):
    """Character-level precision, recall and F1 with the underlying credits."""

    precision: float = Field(ge=0.0, le=1.0)
    recall: float = Field(ge=0.0, le=1.0)
    f1: float = Field(ge=0.0, le=1.0)
    credit_p: float = 0.0
    credit_r: float = 0.0
    pred_chars: int = 0
    gold_chars: int = 0


##################################################
# ftexport
##################################################


class ChatMessage(BaseModel):
    role: Literal["system", "user", "assistant"]
    content: str


class FtExample(BaseModel):
    """One chat fine-tuning example."""

    messages: List[ChatMessage]
    granularity: Granularity

    @model_validator(mode="after")
    def _check_turns(self) -> "FtExample":
        roles = [m.role for m in self.messages]
        if roles != ["system", "user", "assistant"]:
            raise ValueError(f"expected system/user/assistant turns, got {roles}")
        return self


##################################################
# cli
##################################################


class UnitResult(BaseModel):
    """Evaluation outcome of one unit (row of results.jsonl)."""

    run_id: str
    unit_id: str
    system_id: str
    lp: str = ""
    granularity: Granularity
    method: str
    doc_ids: List[str] = Field(default_factory=list)
    n_source_docs: int = 1
    errors: List[ErrorAnnotation] = Field(default_factory=list)
    focus_error_counts: Optional[List[int]] = None
    quality_score: Optional[float] = None
    parse_status: ParseStatus = ParseStatus.CLEAN
    n_dropped: int = 0
    n_clamped: int = 0
    responses: List[ResponseRecord] = Field(default_factory=list)

    @property
    def n_errors(self) -> int:
        return len(self.errors)


class ManifestTiming(BaseModel):
    """Volatile part of a manifest, excluded from determinism checks."""

    started_at: str = ""
    wall_clock_ms: int = 0
    spans_per_second: float = 0.0
    cache_hits: int = 0
    cache_misses: int = 0


class RunManifest(BaseModel):
    """Provenance of one run directory."""

    run_id: str
    command: str
    config: Dict[str, Any] = Field(default_factory=dict)
    inputs: Dict[str, str] = Field(default_factory=dict, description="file name -> sha256")
    counts: Dict[str, int] = Field(default_factory=dict)
    total_spans: int = 0
    timing: ManifestTiming = Field(default_factory=ManifestTiming)

    def stable_dump(self) -> Dict[str, Any]:
        """Manifest without the timing section."""
        return self.model_dump(mode="json", exclude={"timing"})
