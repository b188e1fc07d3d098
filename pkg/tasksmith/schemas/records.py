import csv
import hashlib
import json
import logging
import types
import typing
from collections.abc import Iterable
from pathlib import Path
from typing import TypeVar

from pydantic import BaseModel, ValidationError

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)

_NAMESPACE_SEPARATOR = "\x1f"


def content_hash(text: str, namespace: str) -> str:
    """sha256 over namespace + unit separator + UTF-8 text, hex encoded."""
    payload = f"{namespace}{_NAMESPACE_SEPARATOR}{text}".encode()
    return hashlib.sha256(payload).hexdigest()


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def dump_record(model: BaseModel) -> str:
    return canonical_json(model.model_dump(mode="json"))


def write_jsonl(path: str | Path, models: Iterable[BaseModel]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for model in models:
            f.write(dump_record(model))
            f.write("\n")
            count += 1
    return count


def write_dict_jsonl(path: str | Path, rows: Iterable[dict]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(canonical_json(row))
            f.write("\n")
            count += 1
    return count


class RecordError(BaseModel):
    line: int
    message: str


def _unknown_in(annotation, value, path: str) -> list[str]:
    """Walk ``value`` along its annotation; Optional/list/dict/tuple are unwrapped, dict values checked per key."""
    if isinstance(annotation, type) and issubclass(annotation, BaseModel):
        return unknown_keys(annotation, value, f"{path}.")
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    problems: list[str] = []
    if origin is dict and len(args) == 2 and isinstance(value, dict):
        for key, item in value.items():
            problems.extend(_unknown_in(args[1], item, f"{path}.{key}"))
    elif origin in (list, tuple) and args and isinstance(value, list):
        for i, item in enumerate(value):
            problems.extend(_unknown_in(args[0], item, f"{path}[{i}]"))
    elif origin is typing.Union or isinstance(annotation, types.UnionType):
        for arg in args:
            problems.extend(_unknown_in(arg, value, path))
    return problems


def unknown_keys(model_cls: type[BaseModel], data, path: str = "") -> list[str]:
    """Dotted paths of keys in ``data`` that ``model_cls`` does not declare."""
    if not isinstance(data, dict):
        return []
    problems = []
    fields = model_cls.model_fields
    for key, value in data.items():
        if key not in fields:
            problems.append(f"{path}{key}")
            continue
        problems.extend(_unknown_in(fields[key].annotation, value, f"{path}{key}"))
    return problems


def parse_record(model_cls: type[M], data: dict, strict: bool) -> M:
    if strict:
        extra = unknown_keys(model_cls, data)
        if extra:
            raise ValueError(f"unknown keys: {', '.join(extra)}")
    return model_cls.model_validate(data)


def read_jsonl(path: str | Path, model_cls: type[M], strict: bool = False) -> tuple[list[tuple[int, M]], list[RecordError]]:
    """Read line-delimited JSON records.

    Returns (records, errors) where records carry their 1-based line number.
    Unknown keys are an error in strict mode and silently dropped otherwise.
    Blank lines are skipped.
    """
    records: list[tuple[int, M]] = []
    errors: list[RecordError] = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                if not isinstance(data, dict):
                    raise ValueError("record is not a JSON object")
                records.append((lineno, parse_record(model_cls, data, strict)))
            except (json.JSONDecodeError, ValidationError, ValueError) as e:
                errors.append(RecordError(line=lineno, message=str(e).splitlines()[0]))
    if errors:
        logger.warning(f"{len(errors)} malformed record(s) in {path}")
    return records, errors


def write_csv(path: str | Path, header: list[str], rows: Iterable[list]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
            count += 1
    return count


def write_json(path: str | Path, data) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
