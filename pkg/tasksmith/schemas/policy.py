from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator


class PolicyKind(str, Enum):
    TOY_DISCRETE = "toy_discrete"
    EXTERNAL_ENDPOINT = "external_endpoint"


class PolicyStage(str, Enum):
    RAW = "raw"
    EFT_INITIALIZED = "eft_initialized"
    HRO_TRAINED = "hro_trained"


class PolicyState(BaseModel):
    """The synthesis policy carried along the stream.

    toy_discrete policies hold logits keyed by slot-assignment key; keys that are
    absent have logit 0, so an empty map is the uniform policy over any action space.
    """

    model_config = ConfigDict(frozen=True)

    kind: PolicyKind
    stage: PolicyStage = PolicyStage.RAW
    action_logits: dict[str, float] | None = None
    endpoint_ref: str | None = None
    trained_through: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def one_payload_per_kind(self):
        if self.kind == PolicyKind.TOY_DISCRETE and (self.action_logits is None or self.endpoint_ref is not None):
            raise ValueError("toy_discrete policies carry action_logits and no endpoint_ref")
        if self.kind == PolicyKind.EXTERNAL_ENDPOINT and (self.endpoint_ref is None or self.action_logits is not None):
            raise ValueError("external_endpoint policies carry endpoint_ref and no action_logits")
        return self

    @classmethod
    def uniform_toy(cls) -> "PolicyState":
        return cls(kind=PolicyKind.TOY_DISCRETE, action_logits={})

    @classmethod
    def external(cls, endpoint_ref: str) -> "PolicyState":
        return cls(kind=PolicyKind.EXTERNAL_ENDPOINT, endpoint_ref=endpoint_ref)
