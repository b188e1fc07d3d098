import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from tasksmith.schemas.prompt import BaseTemplate, EvolutionConfig, PromptSetup, SlotAssignment, SlotDomain
from tasksmith.schemas.scoring import FormatRules, RelevanceConfig
from tasksmith.schemas.task import TaskSpec

TOY_LABELS = ["on_target", "off_target"]
TOY_FORMAT_REF = "toy-format"

TOY_VOCABULARY = (
    "amber birch cobalt delta ember falcon garnet harbor indigo juniper kestrel lantern "
    "meadow nickel orchid pepper quartz raven saffron timber umber violet willow yarrow "
    "zephyr acorn basil cedar dune fjord glacier hazel iris jasper kelp lilac maple nectar "
    "onyx pine"
).split()


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def toy_evolution_default() -> EvolutionConfig:
    return EvolutionConfig(base_count=4, depth_rounds=0, breadth_fanout=0)


class ToyFamilySpec(BaseModel):
    """A synthetic stream of slot-configuration tasks with controllable overlap between consecutive optima."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    family_id: str = "toy"
    num_tasks: int = Field(default=3, ge=1)
    num_slots: int = Field(default=3, ge=1)
    values_per_slot: int = Field(default=4, ge=2)
    overlap: float = Field(default=0.5, ge=0.0, le=1.0)
    reward_noise: float = Field(default=0.0, ge=0.0)
    seed: int = Field(default=0, ge=0)
    evolution: EvolutionConfig = Field(default_factory=toy_evolution_default)

    @model_validator(mode="after")
    def vocabulary_large_enough(self):
        if self.num_slots * self.values_per_slot > len(TOY_VOCABULARY):
            raise ValueError(f"toy family needs {self.num_slots * self.values_per_slot} distinct values; the vocabulary has {len(TOY_VOCABULARY)}")
        return self


class ToyTaskFamily(BaseModel):
    model_config = ConfigDict(frozen=True)

    spec: ToyFamilySpec
    slot_space: list[SlotDomain]
    optimal_assignment_per_task: list[SlotAssignment]

    @property
    def num_tasks(self) -> int:
        return self.spec.num_tasks

    def task_id(self, index: int) -> str:
        return f"{self.spec.family_id}-t{index}"

    @property
    def task_ids(self) -> list[str]:
        return [self.task_id(i) for i in range(self.num_tasks)]

    @property
    def action_space(self) -> list[str]:
        entries: list[dict[str, str]] = [{}]
        for domain in self.slot_space:
            entries = [{**e, domain.slot_name: v} for e in entries for v in domain.value_names]
        return sorted(SlotAssignment(entries=e).key() for e in entries)

    def agreement(self, action_key: str, index: int) -> float:
        """Fraction of slots on which the action matches task ``index``'s optimum."""
        chosen = SlotAssignment.from_key(action_key).entries
        optimum = self.optimal_assignment_per_task[index].entries
        return sum(1 for slot, value in optimum.items() if chosen.get(slot) == value) / len(optimum)

    def shared_fraction(self, index: int) -> float:
        """Fraction of optimal slot values task ``index`` shares with task ``index - 1``."""
        prev = self.optimal_assignment_per_task[index - 1].entries
        cur = self.optimal_assignment_per_task[index].entries
        return sum(1 for slot in cur if cur[slot] == prev[slot]) / len(cur)


def materialize_family(spec: ToyFamilySpec) -> ToyTaskFamily:
    """Deterministic slot space and per-task optima.

    round(overlap * num_slots) optimal values are copied from the previous
    task (which slots is random); the remaining slots are redrawn uniformly
    and independently.
    """
    k, v = spec.num_slots, spec.values_per_slot
    domains = [SlotDomain(slot_name=f"s{i}", values=TOY_VOCABULARY[i * v : (i + 1) * v]) for i in range(k)]
    rng = np.random.default_rng(np.random.PCG64(spec.seed))

    picks = [int(rng.integers(v)) for _ in range(k)]
    optima = [picks]
    shared = round_half_up(spec.overlap * k)
    for _ in range(1, spec.num_tasks):
        keep = set(int(i) for i in rng.permutation(k)[:shared])
        picks = [optima[-1][i] if i in keep else int(rng.integers(v)) for i in range(k)]
        optima.append(picks)

    assignments = [SlotAssignment(entries={d.slot_name: d.values[p].value for d, p in zip(domains, picks, strict=True)}) for picks in optima]
    return ToyTaskFamily(spec=spec, slot_space=domains, optimal_assignment_per_task=assignments)


def expand_family(family: ToyTaskFamily) -> tuple[list[TaskSpec], dict[str, PromptSetup], dict[str, RelevanceConfig], dict[str, FormatRules]]:
    """Tasks, prompt setups, relevance and format entries that a run config needs to train on the family."""
    spec = family.spec
    slot_names = [d.slot_name for d in family.slot_space]
    body = "Write a short note about " + " ".join(f"{{{name}}}" for name in slot_names) + "."
    tasks, prompts, relevance = [], {}, {}
    for index in range(spec.num_tasks):
        task_id = family.task_id(index)
        optimum = family.optimal_assignment_per_task[index].entries
        on_target = [optimum[name] for name in slot_names]
        off_target = [value for d in family.slot_space for value in d.value_names if value != optimum[d.slot_name]]
        tasks.append(
            TaskSpec(
                task_id=task_id,
                name=f"{spec.family_id} task {index}",
                label_set=list(TOY_LABELS),
                prompt_template_ref=task_id,
                format_rules_ref=TOY_FORMAT_REF,
                relevance_config_ref=task_id,
                description=f"Toy slot-configuration task {index} of family '{spec.family_id}'.",
            )
        )
        prompts[task_id] = PromptSetup(
            template=BaseTemplate(template_id=task_id, body=body, slot_names=slot_names),
            domains=family.slot_space,
            evolution=spec.evolution,
        )
        relevance[task_id] = RelevanceConfig(keyword_sets={"on_target": on_target, "off_target": off_target})
    return tasks, prompts, relevance, {TOY_FORMAT_REF: FormatRules()}
