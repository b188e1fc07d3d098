import logging
import math
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from tasksmith.backends.utils import stable_seed
from tasksmith.exceptions import AlignmentError
from tasksmith.schemas.policy import PolicyState
from tasksmith.schemas.records import write_csv, write_json
from tasksmith.services.evaluation.toy_family import ToyTaskFamily
from tasksmith.services.evaluation.utility import toy_utility

logger = logging.getLogger(__name__)

UNTRAINED_ROW = "untrained"

Checkpoints = list[tuple[str, PolicyState]]


class TransferRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    from_task: str
    to_task: str
    checkpoint_id: str
    utility: float
    baseline: float
    delta: float


class ForwardTransferReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    family_id: str
    seed: int
    draws: int
    transitions: list[TransferRow] = Field(default_factory=list)

    @property
    def mean_delta(self) -> float:
        if not self.transitions:
            return 0.0
        return sum(t.delta for t in self.transitions) / len(self.transitions)


class TransferMatrix(BaseModel):
    model_config = ConfigDict(frozen=True)

    row_checkpoints: list[str]
    col_tasks: list[str]
    values: list[list[float]]
    seed: int = 0
    draws: int = 0

    @model_validator(mode="after")
    def rectangular_and_finite(self):
        if len(self.values) != len(self.row_checkpoints):
            raise ValueError(f"{len(self.values)} value rows for {len(self.row_checkpoints)} checkpoints")
        for row in self.values:
            if len(row) != len(self.col_tasks):
                raise ValueError(f"matrix row of {len(row)} cells for {len(self.col_tasks)} tasks")
            if not all(math.isfinite(v) for v in row):
                raise ValueError("transfer matrix values must be finite")
        return self

    def cell(self, checkpoint_id: str, task_id: str) -> float:
        return self.values[self.row_checkpoints.index(checkpoint_id)][self.col_tasks.index(task_id)]


def check_alignment(checkpoints: Checkpoints, family: ToyTaskFamily):
    """Checkpoint ``i`` must be the policy after training through the family's first ``i + 1`` tasks."""
    if len(checkpoints) > family.num_tasks:
        raise AlignmentError(f"{len(checkpoints)} checkpoints for a family of {family.num_tasks} task(s)")
    for i, (checkpoint_id, policy) in enumerate(checkpoints):
        expected = family.task_ids[: i + 1]
        if policy.trained_through != expected:
            raise AlignmentError(f"checkpoint '{checkpoint_id}' was trained through {policy.trained_through}, expected {expected}")


def cell_rng(checkpoint_id: str, task_id: str, seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.PCG64(stable_seed(checkpoint_id, task_id, seed)))


def eval_forward_transfer(checkpoints: Checkpoints, family: ToyTaskFamily, draws: int, seed: int) -> ForwardTransferReport:
    """Checkpoint t evaluated on task t+1 with no update, against the untrained (uniform) policy on the same task."""
    check_alignment(checkpoints, family)
    uniform = PolicyState.uniform_toy()
    transitions = []
    for t in range(len(checkpoints) - 1):
        checkpoint_id, policy = checkpoints[t]
        from_task, to_task = family.task_id(t), family.task_id(t + 1)
        utility = toy_utility(policy, t + 1, family, draws, cell_rng(checkpoint_id, to_task, seed))
        baseline = toy_utility(uniform, t + 1, family, draws, cell_rng(UNTRAINED_ROW, to_task, seed))
        transitions.append(TransferRow(from_task=from_task, to_task=to_task, checkpoint_id=checkpoint_id, utility=utility, baseline=baseline, delta=utility - baseline))
    report = ForwardTransferReport(family_id=family.spec.family_id, seed=seed, draws=draws, transitions=transitions)
    logger.debug(f"Forward transfer over {len(transitions)} transition(s): mean delta {report.mean_delta:+.4f}")
    return report


def build_transfer_matrix(checkpoints: Checkpoints, family: ToyTaskFamily, draws: int, seed: int, include_untrained: bool = False) -> TransferMatrix:
    """Every checkpoint evaluated on every task of the family; optionally led by the untrained policy's row."""
    check_alignment(checkpoints, family)
    rows = ([(UNTRAINED_ROW, PolicyState.uniform_toy())] if include_untrained else []) + list(checkpoints)
    tasks = family.task_ids
    values = [[toy_utility(policy, j, family, draws, cell_rng(checkpoint_id, task_id, seed)) for j, task_id in enumerate(tasks)] for checkpoint_id, policy in rows]
    return TransferMatrix(row_checkpoints=[r[0] for r in rows], col_tasks=tasks, values=values, seed=seed, draws=draws)


def write_forward_transfer(report: ForwardTransferReport, out_dir: str | Path, stem: str) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    columns = ["from_task", "to_task", "checkpoint_id", "utility", "baseline", "delta"]
    csv_path, json_path = out_dir / f"{stem}.csv", out_dir / f"{stem}.json"
    write_csv(csv_path, columns, ([getattr(t, c) for c in columns] for t in report.transitions))
    write_json(json_path, report.model_dump(mode="json"))
    return csv_path, json_path


def write_transfer_matrix(matrix: TransferMatrix, out_dir: str | Path, stem: str) -> tuple[Path, Path]:
    """One CSV row per cell plus the full matrix as JSON."""
    out_dir = Path(out_dir)
    csv_path, json_path = out_dir / f"{stem}.csv", out_dir / f"{stem}.json"
    cells = ([checkpoint_id, task_id, matrix.values[i][j]] for i, checkpoint_id in enumerate(matrix.row_checkpoints) for j, task_id in enumerate(matrix.col_tasks))
    write_csv(csv_path, ["checkpoint_id", "task_id", "utility"], cells)
    write_json(json_path, matrix.model_dump(mode="json"))
    return csv_path, json_path
