from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from tasksmith.schemas.sample import SynthSample

MIX_TOL = 1e-9


class EftMix(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    synthetic: float = Field(default=1.0, ge=0.0, le=1.0)
    real: float = Field(default=0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def fractions_sum_to_one(self):
        if abs(self.synthetic + self.real - 1.0) > MIX_TOL:
            raise ValueError(f"EFT mix fractions must sum to 1 (got {self.synthetic + self.real})")
        return self


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    max_rl_steps: int = Field(default=500, ge=0)
    group_size: int = Field(default=4, ge=2)
    learning_rate: float = Field(default=0.1, gt=0.0)
    clip_epsilon: float = Field(default=2.0, gt=0.0)
    advantage_norm: Literal["mean_only", "mean_std"] = "mean_std"
    std_floor: float = Field(default=1e-4, gt=0.0)
    lam: float = Field(default=0.6, ge=0.0, le=1.0)
    eft_records: int = Field(default=16, ge=1)
    eft_mix: EftMix = Field(default_factory=EftMix)
    apply_updates: bool = True


class RealExample(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    prompt: str
    completion: str
    label: str


class EftRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    prompt: str
    target: str
    label: str
    source: Literal["synthetic", "real"]
    prompt_id: str | None = None
    action_key: str | None = None
    rs: float | None = None


class EftDataset(BaseModel):
    model_config = ConfigDict(frozen=True)

    task_id: str
    records: list[EftRecord] = Field(min_length=1)
    source_mix: EftMix


class GroupMember(BaseModel):
    model_config = ConfigDict(frozen=True)

    action_key: str
    sample: SynthSample
    r_total: float


class GroupRollout(BaseModel):
    model_config = ConfigDict(frozen=True)

    prompt_id: str
    members: list[GroupMember]
    step_index: int = Field(ge=0)

    @model_validator(mode="after")
    def members_scored(self):
        for member in self.members:
            if member.sample.rewards is None or member.sample.rewards.r_total is None:
                raise ValueError(f"group member {member.sample.sample_id[:12]} is not fully scored")
        return self


class StepTrace(BaseModel):
    model_config = ConfigDict(frozen=True)

    step: int
    mean_r_total: float
    mean_rs: float
    mean_ds: float


class TrainingTrace(BaseModel):
    model_config = ConfigDict(frozen=True)

    task_id: str
    steps: list[StepTrace] = Field(default_factory=list)

    def mean_of(self, field: str) -> float:
        if not self.steps:
            return 0.0
        return sum(getattr(s, field) for s in self.steps) / len(self.steps)
