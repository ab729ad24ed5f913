"""Run configuration: one JSON file, flag overrides, credentials from the environment."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, Field, ValidationError

from longform_mqm.errors import ConfigError
from longform_mqm.models import (
    BiasParams,
    DecodingParams,
    Granularity,
    PromptFamily,
    PromptOptions,
    SeverityWeights,
)

logger = logging.getLogger(__name__)

# Output budget per granularity when the config does not set one
DEFAULT_MAX_OUTPUT_TOKENS = {
    Granularity.SEG: 4096,
    Granularity.DOC: 4096,
    Granularity.DOC5: 8192,
}

_DEFAULT_SHOTS = {PromptFamily.GEMBA: 3, PromptFamily.FSP: 3, PromptFamily.GMICL: 5}
_DEFAULT_DA = {PromptFamily.GEMBA: False, PromptFamily.FSP: True, PromptFamily.GMICL: True}


class PromptConfig(BaseModel):
    """Prompt family and its options."""

    family: PromptFamily = PromptFamily.GEMBA
    n_shots: Optional[int] = Field(default=None, description="Family default when unset")
    with_explanations: bool = True
    with_da: Optional[bool] = Field(default=None, description="Family default when unset")
    src_lang: str = ""
    tgt_lang: str = ""
    max_output_tokens: Optional[int] = Field(
        default=None, description="Per-granularity default when unset"
    )
    demo_match: Literal["granularity", "length"] = "granularity"
    demos_path: Optional[str] = Field(default=None, description="Demo pool JSONL for gmicl")

    def to_options(self) -> PromptOptions:
        return PromptOptions(
            family=self.family,
            n_shots=self.n_shots if self.n_shots is not None else _DEFAULT_SHOTS[self.family],
            with_explanations=self.with_explanations,
            with_da=self.with_da if self.with_da is not None else _DEFAULT_DA[self.family],
            src_lang=self.src_lang,
            tgt_lang=self.tgt_lang,
        )

    def decoding_for(self, granularity: Granularity) -> DecodingParams:
        limit = self.max_output_tokens or DEFAULT_MAX_OUTPUT_TOKENS[granularity]
        return DecodingParams(temperature=0.0, max_output_tokens=limit)


class BackendConfig(BaseModel):
    """Backend selection and executor limits."""

    kind: Literal["live", "oracle", "sim"] = "oracle"
    model: str = "gpt-4o-2024-11-20"
    base_url: Optional[str] = None
    api_key_env: str = "OPENAI_API_KEY"
    concurrency: int = Field(default=8, gt=0)
    rate_limit_rpm: Optional[float] = Field(default=None, gt=0)
    max_attempts: int = Field(default=5, gt=0)
    backoff_initial_s: float = Field(default=1.0, ge=0)
    backoff_max_s: float = Field(default=30.0, ge=0)
    timeout_s: float = Field(default=120.0, gt=0)
    cache_dir: Optional[str] = Field(default=None, description="Defaults to <out>/responses")
    token_counter: str = "whitespace"

    def api_key(self) -> str:
        key = os.getenv(self.api_key_env, "").strip()
        if not key:
            raise ConfigError(f"Missing required env: {self.api_key_env}")
        return key


class SimulatorConfig(BaseModel):
    """Length-bias simulator parameters (seed comes from SeedsConfig)."""

    base_recall: float = Field(default=0.95, ge=0.0, le=1.0)
    halflife_tokens: float = Field(default=1500.0, gt=0.0)
    severity_noise: float = Field(default=0.1, ge=0.0, le=1.0)


class ScoringConfig(BaseModel):
    weights: SeverityWeights = Field(default_factory=SeverityWeights)
    gold_critical_as_major: bool = False


class SeedsConfig(BaseModel):
    """Every source of randomness is named here."""

    grouping: int = 7
    demos: int = 0
    simulator: int = 0


class CorpusConfig(BaseModel):
    group_size: int = Field(default=5, ge=2)
    joiner: str = "\n"


class RunConfig(BaseModel):
    """Effective configuration of a run."""

    prompt: PromptConfig = Field(default_factory=PromptConfig)
    backend: BackendConfig = Field(default_factory=BackendConfig)
    simulator: SimulatorConfig = Field(default_factory=SimulatorConfig)
    scoring: ScoringConfig = Field(default_factory=ScoringConfig)
    seeds: SeedsConfig = Field(default_factory=SeedsConfig)
    corpus: CorpusConfig = Field(default_factory=CorpusConfig)

    def bias_params(self) -> BiasParams:
        return BiasParams(
            base_recall=self.simulator.base_recall,
            halflife_tokens=self.simulator.halflife_tokens,
            severity_noise=self.simulator.severity_noise,
            seed=self.seeds.simulator,
        )

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, ensure_ascii=False)


def load_config(path: Optional[Union[str, Path]]) -> RunConfig:
    """
    Load a configuration file.

    Args:
        path: JSON file path, or None for all defaults

    Returns:
        RunConfig: validated configuration

    Raises:
        ConfigError: If the file cannot be read or does not validate
    """
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}: {e}") from e


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """
    Apply dotted-path overrides such as ``{"prompt.family": "fsp"}``.

    None values are ignored so argparse defaults do not clobber the file.
    """
    data = config.model_dump(mode="json")
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = data
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid override: {e}") from e


def compute_run_id(config: RunConfig, input_digest: str = "") -> str:
    """Deterministic run id from the effective config and the input digest."""
    h = hashlib.sha256()
    h.update(config.canonical_json().encode("utf-8"))
    h.update(input_digest.encode("utf-8"))
    return h.hexdigest()[:12]


def file_digest(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
