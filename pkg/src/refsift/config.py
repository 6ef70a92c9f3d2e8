"""Review configuration: YAML file plus REFSIFT_* environment overrides.

Validation gathers every violation before failing so a bad file is fixed
in one round trip, not one complaint at a time.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .metascreen import ScreenCriteria
from .snowball import DIRECTIONS

KNOWN_SOURCES = ("semantic-scholar", "dblp", "scholar-web", "mock")
DEFAULT_STAGES = {"title": True, "abstract": False, "fulltext": True}

ENV_PREFIX = "REFSIFT_"


def _as_bool(raw: str) -> bool:
    return raw.strip().lower() in ("1", "true", "yes", "on")


def _as_list(raw: str) -> list[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


# env var suffix -> (config attribute, caster)
ENV_FIELDS = {
    "STORE_PATH": ("store_path", str),
    "RATERS": ("raters", _as_list),
    "DIRECTION": ("direction", str),
    "MAX_ITERATIONS": ("max_iterations", int),
    "WORKERS": ("workers", int),
    "SOURCES": ("sources", _as_list),
    "ABSTRACT_STAGE": ("abstract_stage", _as_bool),
    "DUPLICATE_THRESHOLD": ("duplicate_threshold", float),
    "MERGE_THRESHOLD": ("merge_threshold", float),
    "VENUE_FEATURIZER": ("venue_featurizer", str),
    "SUGGEST_K": ("suggest_k", int),
    "MODEL": ("model", str),
    "MODEL_BASE_URL": ("model_base_url", str),
    "TOKEN_BUDGET": ("token_budget", int),
    "TEMPERATURE": ("temperature", float),
    "SEED": ("seed", int),
}


@dataclass
class ReviewConfig:
    store_path: str = "review.jsonl"
    raters: list[str] = field(default_factory=list)
    stages_enabled: dict[str, bool] = field(default_factory=lambda: dict(DEFAULT_STAGES))
    direction: str = "both"
    max_iterations: int = 20
    workers: int = 4
    sources: list[str] = field(default_factory=lambda: ["semantic-scholar"])
    source_settings: dict = field(default_factory=dict)
    screen: dict = field(default_factory=dict)
    rank_tables: dict[str, str] = field(default_factory=dict)
    duplicate_threshold: float = 0.9
    merge_threshold: float = 0.7
    venue_featurizer: str = "unigram"
    suggest_k: int = 5
    model: str = "gpt-5-nano"
    model_base_url: str = "https://api.openai.com/v1"
    token_budget: int = 6000
    temperature: float = 0.0
    seed: int = 0

    @property
    def abstract_stage(self) -> bool:
        return bool(self.stages_enabled.get("abstract", False))

    @abstract_stage.setter
    def abstract_stage(self, value: bool) -> None:
        self.stages_enabled["abstract"] = bool(value)

    def violations(self) -> list[str]:
        problems = []
        if any(self.stages_enabled.values()):
            if len(self.raters) < 2:
                problems.append("at least 2 raters are required while a manual stage is enabled")
        if len(set(self.raters)) != len(self.raters):
            problems.append("rater names must be distinct")
        if not self.stages_enabled.get("title", False) or not self.stages_enabled.get("fulltext", False):
            problems.append("the title and fulltext stages cannot be disabled")
        for stage in self.stages_enabled:
            if stage not in DEFAULT_STAGES:
                problems.append(f"unknown stage {stage!r}")
        if self.direction not in DIRECTIONS:
            problems.append(f"direction must be one of {', '.join(DIRECTIONS)}")
        if self.max_iterations < 1:
            problems.append("max_iterations must be at least 1")
        if self.workers < 1:
            problems.append("workers must be at least 1")
        for source in self.sources:
            if source not in KNOWN_SOURCES:
                problems.append(f"unknown source {source!r}")
        if not 0.0 < self.duplicate_threshold <= 1.0:
            problems.append("duplicate_threshold must be in (0, 1]")
        if not 0.0 < self.merge_threshold <= 1.0:
            problems.append("merge_threshold must be in (0, 1]")
        if self.venue_featurizer not in ("unigram", "char-trigram"):
            problems.append("venue_featurizer must be unigram or char-trigram")
        if self.suggest_k < 1:
            problems.append("suggest_k must be at least 1")
        if self.token_budget < 100:
            problems.append("token_budget must be at least 100")
        if not 0.0 <= self.temperature <= 2.0:
            problems.append("temperature must be in [0, 2]")
        try:
            self.screen_criteria()
        except ConfigError as exc:
            problems.extend(exc.violations)
        return problems

    def validate(self) -> "ReviewConfig":
        problems = self.violations()
        if problems:
            raise ConfigError(problems)
        return self

    def screen_criteria(self) -> ScreenCriteria:
        return ScreenCriteria.from_dict(self.screen)

    def to_dict(self) -> dict:
        return {
            "store_path": self.store_path,
            "raters": list(self.raters),
            "stages_enabled": dict(self.stages_enabled),
            "direction": self.direction,
            "max_iterations": self.max_iterations,
            "workers": self.workers,
            "sources": list(self.sources),
            "source_settings": dict(self.source_settings),
            "screen": dict(self.screen),
            "rank_tables": dict(self.rank_tables),
            "duplicate_threshold": self.duplicate_threshold,
            "merge_threshold": self.merge_threshold,
            "venue_featurizer": self.venue_featurizer,
            "suggest_k": self.suggest_k,
            "model": self.model,
            "model_base_url": self.model_base_url,
            "token_budget": self.token_budget,
            "temperature": self.temperature,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReviewConfig":
        known = set(cls().to_dict())
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"unknown config key {key!r}" for key in unknown])
        config = cls()
        for key, value in data.items():
            if key == "stages_enabled":
                config.stages_enabled.update(value or {})
            elif value is not None:
                setattr(config, key, value)
        return config


def load_config(path: str | None = None, env: dict | None = None) -> ReviewConfig:
    """Build the effective config: defaults, then the file, then
    REFSIFT_* variables on top."""
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError([f"{path} does not contain a mapping"])
        config = ReviewConfig.from_dict(raw)
    else:
        config = ReviewConfig()
    env = os.environ if env is None else env
    for suffix, (attribute, caster) in ENV_FIELDS.items():
        raw_value = env.get(ENV_PREFIX + suffix)
        if raw_value is None:
            continue
        try:
            setattr(config, attribute, caster(raw_value))
        except ValueError as exc:
            raise ConfigError([f"bad value for {ENV_PREFIX}{suffix}: {exc}"]) from exc
    return config.validate()
