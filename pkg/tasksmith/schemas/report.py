from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field

from tasksmith.schemas.records import write_csv, write_json

REPORT_COLUMNS = ["task_id", "mean_rs", "mean_ds", "mean_r_total", "steps"]


class TaskReportRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    task_id: str
    mean_rs: float
    mean_ds: float
    mean_r_total: float
    steps: int
    wall_time: float | None = None


class StreamReport(BaseModel):
    """Per-task aggregates of one stream run."""

    model_config = ConfigDict(frozen=True)

    stream_id: str
    seed: int
    config_digest: str
    rows: list[TaskReportRow] = Field(default_factory=list)

    def row(self, task_id: str) -> TaskReportRow:
        for row in self.rows:
            if row.task_id == task_id:
                return row
        raise KeyError(task_id)

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        """Writes ``report.json`` and ``report.csv``; wall_time is a column only when it was recorded."""
        out_dir = Path(out_dir)
        timed = any(row.wall_time is not None for row in self.rows)
        columns = REPORT_COLUMNS + (["wall_time"] if timed else [])

        json_path, csv_path = out_dir / "report.json", out_dir / "report.csv"
        write_json(json_path, self.model_dump(mode="json", exclude_none=not timed))
        write_csv(csv_path, columns, ([getattr(row, c) for c in columns] for row in self.rows))
        return json_path, csv_path
