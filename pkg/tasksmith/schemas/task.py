from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class TaskSpec(BaseModel):
    """One synthesis task: where its prompts come from, how its outputs are checked, and its labels."""

    model_config = ConfigDict(frozen=True)

    task_id: str
    name: str = ""
    label_set: list[str]
    prompt_template_ref: str
    format_rules_ref: str
    relevance_config_ref: str
    description: str = ""
    label_slot: str | None = None
    metadata: dict[str, int | float | str] = Field(default_factory=dict)

    def label_for(self, assignment: dict[str, str]) -> str:
        if self.label_slot and self.label_slot in assignment:
            return assignment[self.label_slot]
        return self.label_set[0]


class TaskStream(BaseModel):
    model_config = ConfigDict(frozen=True)

    stream_id: str
    tasks: list[TaskSpec]
    seed: int = Field(default=0, ge=0)

    @property
    def task_ids(self) -> list[str]:
        return [task.task_id for task in self.tasks]

    def index_of(self, task_id: str) -> int:
        return self.task_ids.index(task_id)


class ValidationIssue(BaseModel):
    """One broken invariant, located by a dotted path to the offending field."""

    model_config = ConfigDict(frozen=True)

    path: str
    message: str
    kind: Literal["invalid", "unresolved"] = "invalid"
    ref_kind: str | None = None
    ref: str | None = None
    line: int | None = None
    column: int | None = None

    def __str__(self) -> str:
        where = f"{self.path} (line {self.line}, column {self.column})" if self.line is not None else self.path
        return f"{where}: {self.message}"
