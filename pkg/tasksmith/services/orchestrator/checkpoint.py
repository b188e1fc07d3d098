import hashlib
import json
import logging
import os
import re
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from tasksmith.exceptions import ConfigDigestMismatch, CorruptCheckpoint, VersionMismatch
from tasksmith.schemas.policy import PolicyState
from tasksmith.schemas.records import canonical_json
from tasksmith.schemas.training import TrainingTrace
from tasksmith.services.orchestrator.candidate_pool import CandidatePool

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "tasksmith-checkpoint"
CHECKPOINT_VERSION = "1"
CHECKPOINT_SUFFIX = ".ckpt"
PARTIAL_SUFFIX = ".partial.ckpt"


class StreamState(BaseModel):
    """Everything needed to continue a stream run at a task boundary."""

    model_config = ConfigDict(frozen=True)

    stream_id: str
    task_cursor: int = Field(ge=0)
    policy: PolicyState
    pool: CandidatePool
    rng_state: dict[str, Any]
    traces: list[TrainingTrace] = Field(default_factory=list)
    partial_step: int | None = None


class Checkpoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    version: str
    config_digest: str
    state: StreamState

    @property
    def partial(self) -> bool:
        return self.state.partial_step is not None


def new_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def rng_from_state(state: dict) -> np.random.Generator:
    bit_generator = np.random.PCG64()
    bit_generator.state = state
    return np.random.Generator(bit_generator)


def encode_checkpoint(state: StreamState, config_digest: str) -> str:
    """Header line (JSON) followed by one JSON line per pool entry and per training trace."""
    body_lines = [canonical_json({"section": "pool", "entry": entry.model_dump(mode="json")}) for entry in state.pool.entries]
    body_lines += [canonical_json({"section": "trace", "trace": trace.model_dump(mode="json")}) for trace in state.traces]
    body = "".join(line + "\n" for line in body_lines)

    header_state = state.model_dump(mode="json", exclude={"traces": True, "pool": {"entries"}})
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config_digest": config_digest,
        "body_sha256": hashlib.sha256(body.encode("utf-8")).hexdigest(),
        "partial_step": state.partial_step,
        "state": header_state,
    }
    return canonical_json(header) + "\n" + body


def save_checkpoint(state: StreamState, path: str | Path, config_digest: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(encode_checkpoint(state, config_digest))
    os.replace(tmp, path)
    logger.debug(f"Checkpoint written: {path}")
    return path


def decode_checkpoint(content: str, source: str = "<memory>") -> Checkpoint:
    header_line, sep, body = content.partition("\n")
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as e:
        raise CorruptCheckpoint(f"{source}: unreadable header ({e.msg})") from e
    if not isinstance(header, dict) or header.get("format") != CHECKPOINT_FORMAT:
        raise CorruptCheckpoint(f"{source}: not a {CHECKPOINT_FORMAT} file")
    if header.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatch(str(header.get("version")), CHECKPOINT_VERSION)
    if not sep or hashlib.sha256(body.encode("utf-8")).hexdigest() != header.get("body_sha256"):
        raise CorruptCheckpoint(f"{source}: body digest does not match the header (truncated or edited file)")

    entries, traces = [], []
    try:
        for line in body.splitlines():
            record = json.loads(line)
            if record["section"] == "pool":
                entries.append(record["entry"])
            elif record["section"] == "trace":
                traces.append(record["trace"])
            else:
                raise CorruptCheckpoint(f"{source}: unknown section '{record['section']}'")
        data = header["state"]
        data["pool"]["entries"] = entries
        data["traces"] = traces
        state = StreamState.model_validate(data)
    except (json.JSONDecodeError, KeyError, TypeError, ValidationError) as e:
        raise CorruptCheckpoint(f"{source}: {str(e).splitlines()[0]}") from e
    return Checkpoint(version=header["version"], config_digest=header["config_digest"], state=state)


def load_checkpoint(path: str | Path, expected_digest: str | None = None, allow_drift: bool = False) -> Checkpoint:
    """Read and verify a checkpoint.

    A config digest other than ``expected_digest`` raises ConfigDigestMismatch
    unless ``allow_drift`` is set, in which case it is only logged.
    """
    try:
        with open(path, encoding="utf-8") as f:
            content = f.read()
    except UnicodeDecodeError as e:
        raise CorruptCheckpoint(f"{path}: not UTF-8 text") from e
    checkpoint = decode_checkpoint(content, str(path))
    if expected_digest is not None and checkpoint.config_digest != expected_digest:
        if not allow_drift:
            raise ConfigDigestMismatch(checkpoint.config_digest, expected_digest)
        logger.warning(f"⚠️ Resuming {path} under a different config (digest {checkpoint.config_digest[:12]} → {expected_digest[:12]})")
    return checkpoint


def checkpoint_path(directory: str | Path, stream_id: str, cursor: int) -> Path:
    return Path(directory) / f"{stream_id}-task{cursor:02d}{CHECKPOINT_SUFFIX}"


def partial_checkpoint_path(directory: str | Path, stream_id: str, cursor: int, step: int) -> Path:
    return Path(directory) / f"{stream_id}-task{cursor:02d}-step{step:05d}{PARTIAL_SUFFIX}"


def list_checkpoints(directory: str | Path, stream_id: str) -> list[tuple[int, Path]]:
    """Task-boundary checkpoints of ``stream_id`` as (cursor, path), in cursor order. Partial snapshots are skipped."""
    directory = Path(directory)
    if not directory.is_dir():
        return []
    pattern = re.compile(rf"^{re.escape(stream_id)}-task(\d+){re.escape(CHECKPOINT_SUFFIX)}$")
    found = []
    for path in directory.iterdir():
        match = pattern.match(path.name)
        if match:
            found.append((int(match.group(1)), path))
    return sorted(found)


def find_latest_checkpoint(directory: str | Path, stream_id: str) -> Path | None:
    found = list_checkpoints(directory, stream_id)
    return found[-1][1] if found else None