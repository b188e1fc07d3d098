import re
from enum import Enum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from tasksmith.schemas.records import content_hash

PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


class Lineage(str, Enum):
    BASE = "base"
    DEPTH_EVOLVED = "depth_evolved"
    BREADTH_EVOLVED = "breadth_evolved"


class BaseTemplate(BaseModel):
    model_config = ConfigDict(frozen=True)

    template_id: str
    body: str = Field(min_length=1)
    slot_names: list[str]

    @model_validator(mode="after")
    def placeholders_match_slots(self):
        placeholders = PLACEHOLDER_RE.findall(self.body)
        if set(placeholders) != set(self.slot_names) or len(set(self.slot_names)) != len(self.slot_names):
            raise ValueError(f"template '{self.template_id}': placeholders {sorted(set(placeholders))} do not match slot_names {self.slot_names}")
        return self


class SlotValue(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: str
    weight: float = Field(default=1.0, gt=0, allow_inf_nan=False)


class SlotDomain(BaseModel):
    model_config = ConfigDict(frozen=True)

    slot_name: str
    values: list[SlotValue] = Field(min_length=1)

    @field_validator("values", mode="before")
    @classmethod
    def accept_bare_strings(cls, values):
        if isinstance(values, list):
            return [{"value": v} if isinstance(v, str) else v for v in values]
        return values

    @property
    def value_names(self) -> list[str]:
        return [v.value for v in self.values]


class SlotAssignment(BaseModel):
    model_config = ConfigDict(frozen=True)

    entries: dict[str, str]

    def key(self) -> str:
        """Canonical action key: slot=value pairs sorted by slot name."""
        return "|".join(f"{slot}={self.entries[slot]}" for slot in sorted(self.entries))

    @classmethod
    def from_key(cls, key: str) -> "SlotAssignment":
        if not key:
            return cls(entries={})
        return cls(entries=dict(part.split("=", 1) for part in key.split("|")))


class ConstraintRule(BaseModel):
    """Declarative filter over slot combinations.

    forbid_pair:  slot=value and other_slot=other_value may not co-occur
    require_pair: slot=value implies other_slot=other_value
    forbid_value: slot may never take value
    """

    model_config = ConfigDict(frozen=True)

    rule_id: str
    kind: Literal["forbid_pair", "require_pair", "forbid_value"]
    slot: str
    value: str
    other_slot: str | None = None
    other_value: str | None = None

    @model_validator(mode="after")
    def pair_operands_present(self):
        if self.kind != "forbid_value" and (self.other_slot is None or self.other_value is None):
            raise ValueError(f"constraint '{self.rule_id}': {self.kind} needs other_slot and other_value")
        return self

    @property
    def slots(self) -> list[str]:
        return [self.slot] + ([self.other_slot] if self.other_slot else [])

    def allows(self, entries: dict[str, str]) -> bool:
        hit = entries.get(self.slot) == self.value
        if self.kind == "forbid_value":
            return not hit
        other_hit = entries.get(self.other_slot) == self.other_value
        if self.kind == "forbid_pair":
            return not (hit and other_hit)
        return (not hit) or other_hit


class PromptInstance(BaseModel):
    model_config = ConfigDict(frozen=True)

    prompt_id: str
    text: str
    task_id: str
    assignment: SlotAssignment
    lineage: Lineage = Lineage.BASE
    parent_id: str | None = None
    degenerate: bool = False

    @model_validator(mode="after")
    def parent_matches_lineage(self):
        if (self.lineage == Lineage.BASE) != (self.parent_id is None):
            raise ValueError(f"prompt {self.prompt_id[:12]}: parent_id must be set exactly when lineage is not base")
        return self

    @staticmethod
    def make_id(text: str, task_id: str) -> str:
        return content_hash(f"{task_id}\x1f{text}", "prompt")

    @classmethod
    def create(cls, text: str, task_id: str, assignment: SlotAssignment, lineage: Lineage = Lineage.BASE, parent_id: str | None = None, degenerate: bool = False) -> "PromptInstance":
        return cls(
            prompt_id=cls.make_id(text, task_id),
            text=text,
            task_id=task_id,
            assignment=assignment,
            lineage=lineage,
            parent_id=parent_id,
            degenerate=degenerate,
        )


class GenerationLogEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    operation: Literal["base", "depth", "breadth"]
    parent_id: str | None
    child_id: str
    degenerate: bool = False


class PromptPool(BaseModel):
    model_config = ConfigDict(frozen=True)

    task_id: str
    prompts: list[PromptInstance]
    generation_log: list[GenerationLogEntry] = Field(default_factory=list)

    @model_validator(mode="after")
    def lineage_is_a_forest(self):
        ids = [p.prompt_id for p in self.prompts]
        if len(ids) != len(set(ids)):
            raise ValueError(f"prompt pool for '{self.task_id}' contains duplicate prompt ids")
        # parents must precede children, which also rules out cycles
        seen: set[str] = set()
        for prompt in self.prompts:
            if prompt.parent_id is not None and prompt.parent_id not in seen:
                raise ValueError(f"prompt {prompt.prompt_id[:12]} has parent {prompt.parent_id[:12]} outside the pool")
            seen.add(prompt.prompt_id)
        return self

    def by_assignment(self, key: str) -> list[PromptInstance]:
        return [p for p in self.prompts if p.assignment.key() == key]

    def get(self, prompt_id: str) -> PromptInstance:
        for prompt in self.prompts:
            if prompt.prompt_id == prompt_id:
                return prompt
        raise KeyError(prompt_id)


DEFAULT_DEPTH_DIRECTIVE = "Rewrite the instruction so it is more demanding: add one concrete constraint or required detail, keep the topic, and return only the rewritten instruction."
DEFAULT_BREADTH_DIRECTIVE = "Write a new instruction for the same task set in a different domain or scenario, keep the requested label, and return only the new instruction."


class EvolutionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    base_count: int = Field(default=8, ge=1)
    depth_rounds: int = Field(default=1, ge=0)
    breadth_fanout: int = Field(default=2, ge=0)
    depth_directive: str = DEFAULT_DEPTH_DIRECTIVE
    breadth_directive: str = DEFAULT_BREADTH_DIRECTIVE
    max_attempts: int = Field(default=100, ge=1)
    parallelism: int = Field(default=4, ge=1)


class PromptSetup(BaseModel):
    """Template, slot domains, constraints and evolution settings for one prompt_template_ref."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    template: BaseTemplate
    domains: list[SlotDomain]
    constraints: list[ConstraintRule] = Field(default_factory=list)
    evolution: EvolutionConfig = Field(default_factory=EvolutionConfig)

    @model_validator(mode="after")
    def domains_cover_template(self):
        names = [d.slot_name for d in self.domains]
        if sorted(names) != sorted(self.template.slot_names):
            raise ValueError(f"template '{self.template.template_id}': slot domains {names} do not match slot_names {self.template.slot_names}")
        for rule in self.constraints:
            unknown = [slot for slot in rule.slots if slot not in names]
            if unknown:
                raise ValueError(f"constraint '{rule.rule_id}' references unknown slot(s) {unknown}")
        return self

    def action_space(self) -> list[str]:
        """Every constraint-satisfying assignment key, in lexicographic order."""
        entries: list[dict[str, str]] = [{}]
        for domain in self.domains:
            entries = [{**e, domain.slot_name: v} for e in entries for v in domain.value_names]
        return sorted(SlotAssignment(entries=e).key() for e in entries if all(rule.allows(e) for rule in self.constraints))
