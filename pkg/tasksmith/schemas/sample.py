import math

from pydantic import BaseModel, ConfigDict, Field, model_validator

from tasksmith.schemas.records import content_hash

CONSISTENCY_TOL = 1e-9
NORM_TOL = 1e-6


class RewardBreakdown(BaseModel):
    """Sample-level sub-scores, their weighted sum, and (once the set-level score is known) the total."""

    model_config = ConfigDict(frozen=True)

    s_struct: float = Field(ge=0.0, le=1.0)
    s_fluent: float = Field(ge=0.0, le=1.0)
    s_rel: float = Field(ge=0.0, le=1.0)
    gamma_struct: float = Field(ge=0.0)
    gamma_fluent: float = Field(ge=0.0)
    gamma_rel: float = Field(ge=0.0)
    rs: float = Field(ge=0.0, le=1.0)
    ds: float | None = Field(default=None, gt=0.0, le=1.0)
    lam: float | None = Field(default=None, ge=0.0, le=1.0)
    r_total: float | None = Field(default=None, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def internally_consistent(self):
        expected_rs = self.gamma_struct * self.s_struct + self.gamma_fluent * self.s_fluent + self.gamma_rel * self.s_rel
        if abs(expected_rs - self.rs) > CONSISTENCY_TOL:
            raise ValueError(f"rs={self.rs} is not the weighted sum of its sub-scores ({expected_rs})")
        if self.r_total is not None:
            if self.ds is None or self.lam is None:
                raise ValueError("r_total requires ds and lam")
            expected_total = self.lam * self.rs + (1.0 - self.lam) * self.ds
            if abs(expected_total - self.r_total) > CONSISTENCY_TOL:
                raise ValueError(f"r_total={self.r_total} is not lam*rs + (1-lam)*ds ({expected_total})")
        return self

    def with_set_score(self, ds: float, lam: float) -> "RewardBreakdown":
        r_total = lam * self.rs + (1.0 - lam) * ds
        return RewardBreakdown(**{**self.model_dump(), "ds": ds, "lam": lam, "r_total": min(1.0, max(0.0, r_total))})


class SynthSample(BaseModel):
    model_config = ConfigDict(frozen=True)

    sample_id: str
    task_id: str
    prompt_id: str
    text: str
    label: str
    embedding: list[float] | None = None
    rewards: RewardBreakdown | None = None
    step_index: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def embedding_is_unit_norm(self):
        if self.embedding is not None:
            norm = math.sqrt(math.fsum(x * x for x in self.embedding))
            if abs(norm - 1.0) > NORM_TOL:
                raise ValueError(f"sample {self.sample_id[:12]}: embedding norm {norm} is not 1")
        return self

    @staticmethod
    def make_id(text: str, task_id: str, label: str) -> str:
        return content_hash(f"{task_id}\x1f{label}\x1f{text}", "sample")

    @classmethod
    def create(cls, text: str, task_id: str, prompt_id: str, label: str, step_index: int = 0, embedding: list[float] | None = None) -> "SynthSample":
        return cls(
            sample_id=cls.make_id(text, task_id, label),
            task_id=task_id,
            prompt_id=prompt_id,
            text=text,
            label=label,
            embedding=embedding,
            step_index=step_index,
        )
