from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict

from tasksmith.exceptions import InvalidPermutation
from tasksmith.schemas.records import write_csv, write_json
from tasksmith.schemas.report import StreamReport
from tasksmith.schemas.task import TaskStream

Stage = Literal["early", "intermediate", "late"]

ORDER_SEPARATOR = "~"


def _check_permutation(order: list[int], size: int):
    if sorted(order) != list(range(size)):
        raise InvalidPermutation(f"{order} is not a permutation of 0..{size - 1}")


def permute_stream(stream: TaskStream, order: list[int], name: str | None = None) -> TaskStream:
    """Reordered copy of ``stream``; the stream_id gains a suffix naming the order."""
    _check_permutation(order, len(stream.tasks))
    suffix = name or "p" + "-".join(str(i) for i in order)
    return stream.model_copy(update={"stream_id": f"{stream.stream_id}{ORDER_SEPARATOR}{suffix}", "tasks": [stream.tasks[i] for i in order]})


def order_indices(stream: TaskStream, task_ids: list[str]) -> list[int]:
    """Positions of ``task_ids`` in the stream, e.g. a named order from the run config."""
    try:
        order = [stream.index_of(task_id) for task_id in task_ids]
    except ValueError as e:
        raise InvalidPermutation(f"order {task_ids} names a task outside the stream {stream.task_ids}") from e
    _check_permutation(order, len(stream.tasks))
    return order


def inverse_permutation(order: list[int]) -> list[int]:
    _check_permutation(order, len(order))
    inverse = [0] * len(order)
    for position, index in enumerate(order):
        inverse[index] = position
    return inverse


def base_stream_id(stream_id: str) -> str:
    return stream_id.split(ORDER_SEPARATOR, 1)[0]


def stage_of(position: int, length: int) -> Stage:
    """First task is early, last is late, everything between is intermediate."""
    if position == 0:
        return "early"
    if position == length - 1:
        return "late"
    return "intermediate"


class OrderRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    order: str
    position: int
    stage: Stage
    task_id: str
    mean_rs: float
    mean_ds: float
    mean_r_total: float
    utility: float | None = None


def order_rows(order_name: str, report: StreamReport, utilities: dict[str, float] | None = None) -> list[OrderRow]:
    """One row per task of a permuted run, tagged with its stream position stage."""
    n = len(report.rows)
    return [
        OrderRow(
            order=order_name,
            position=i,
            stage=stage_of(i, n),
            task_id=row.task_id,
            mean_rs=row.mean_rs,
            mean_ds=row.mean_ds,
            mean_r_total=row.mean_r_total,
            utility=(utilities or {}).get(row.task_id),
        )
        for i, row in enumerate(report.rows)
    ]


def stage_means(rows: list[OrderRow]) -> dict[str, dict[str, float]]:
    """Mean r_total per (order, stage)."""
    buckets: dict[str, dict[str, list[float]]] = {}
    for row in rows:
        buckets.setdefault(row.order, {}).setdefault(row.stage, []).append(row.mean_r_total)
    return {order: {stage: sum(v) / len(v) for stage, v in stages.items()} for order, stages in buckets.items()}


def write_orders_report(rows: list[OrderRow], out_dir: str | Path, stem: str) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    columns = list(OrderRow.model_fields)
    csv_path, json_path = out_dir / f"{stem}.csv", out_dir / f"{stem}.json"
    write_csv(csv_path, columns, ([getattr(row, c) if getattr(row, c) is not None else "" for c in columns] for row in rows))
    write_json(json_path, {"rows": [row.model_dump(mode="json") for row in rows], "stage_means": stage_means(rows)})
    return csv_path, json_path
