from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

WEIGHT_TOL = 1e-9

StyleStatistic = Literal["sentence_length", "punctuation_balance", "repetition_ratio"]


class SampleScoreWeights(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    gamma_struct: float = Field(default=0.3, ge=0.0)
    gamma_fluent: float = Field(default=0.3, ge=0.0)
    gamma_rel: float = Field(default=0.4, ge=0.0)

    @model_validator(mode="after")
    def sums_to_one(self):
        total = self.gamma_struct + self.gamma_fluent + self.gamma_rel
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"sample score weights must sum to 1 (got {total})")
        return self


class StyleRule(BaseModel):
    """A style statistic and the closed range it should fall in."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    statistic: StyleStatistic
    low: float
    high: float
    weight: float = Field(default=1.0, gt=0.0)

    @model_validator(mode="after")
    def non_degenerate(self):
        if not self.low < self.high:
            raise ValueError(f"style rule '{self.statistic}': low must be below high")
        return self


def default_style_rules() -> list[StyleRule]:
    return [
        StyleRule(statistic="sentence_length", low=4.0, high=40.0),
        StyleRule(statistic="punctuation_balance", low=0.02, high=0.4),
        StyleRule(statistic="repetition_ratio", low=0.0, high=0.5),
    ]


class FluencyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha: float = Field(default=0.5, ge=0.0, le=1.0)
    lm_score_floor: float = -6.0
    lm_score_ceiling: float = -1.0
    style_rules: list[StyleRule] = Field(default_factory=default_style_rules)

    @model_validator(mode="after")
    def floor_below_ceiling(self):
        if not self.lm_score_floor < self.lm_score_ceiling:
            raise ValueError("lm_score_floor must be below lm_score_ceiling")
        return self


class RelevanceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    theta: float = Field(default=0.7, ge=0.0, le=1.0)
    classifier_ref: str | None = None
    keyword_sets: dict[str, list[str]]

    @model_validator(mode="after")
    def keyword_sets_non_empty(self):
        empty = [label for label, words in self.keyword_sets.items() if not [w for w in words if w]]
        if empty:
            raise ValueError(f"keyword sets must be non-empty (empty for {empty})")
        return self


class FormatRule(BaseModel):
    """One structural check.

    json_object:          text parses as a JSON object
    required_fields:      text is a JSON object holding every name in ``fields``
    max_length:           len(text) <= max_chars
    forbidden_substrings: none of ``substrings`` occurs (case-insensitive)
    non_empty:            text has a non-whitespace character
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["json_object", "required_fields", "max_length", "forbidden_substrings", "non_empty"]
    weight: float = Field(gt=0.0)
    fields: list[str] = Field(default_factory=list)
    max_chars: int | None = Field(default=None, ge=1)
    substrings: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def operands_present(self):
        if self.kind == "required_fields" and not self.fields:
            raise ValueError("required_fields rule needs fields")
        if self.kind == "max_length" and self.max_chars is None:
            raise ValueError("max_length rule needs max_chars")
        if self.kind == "forbidden_substrings" and not self.substrings:
            raise ValueError("forbidden_substrings rule needs substrings")
        return self


def default_format_rules() -> list[FormatRule]:
    return [FormatRule(kind="non_empty", weight=0.5), FormatRule(kind="max_length", weight=0.5, max_chars=2000)]


class FormatRules(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    rules: list[FormatRule] = Field(default_factory=default_format_rules, min_length=1)

    @model_validator(mode="after")
    def weights_sum_to_one(self):
        total = sum(rule.weight for rule in self.rules)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"format rule weights must sum to 1 (got {total})")
        return self


class DiversityConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    temperature: float = Field(default=0.5, gt=0.0)
    decay: float = Field(default=2.0, gt=0.0)
    min_batch: int = Field(default=2, ge=2)
    weighting: Literal["softmax", "proportional"] = "softmax"
    pool_neighbors: int = Field(default=12, ge=0)


class ScoringConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    weights: SampleScoreWeights = Field(default_factory=SampleScoreWeights)
    fluency: FluencyConfig = Field(default_factory=FluencyConfig)
    diversity: DiversityConfig = Field(default_factory=DiversityConfig)


class TaskScoring(BaseModel):
    """Everything needed to score one task's samples, resolved from the run config."""

    model_config = ConfigDict(frozen=True)

    weights: SampleScoreWeights
    format_rules: FormatRules
    fluency: FluencyConfig
    relevance: RelevanceConfig
    diversity: DiversityConfig
    lam: float = Field(ge=0.0, le=1.0)
    likelihood_backend: str
    classifier_backend: str
    embedder_backend: str
