import logging
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from tasksmith.exceptions import MissingEmbedding
from tasksmith.schemas.sample import SynthSample

logger = logging.getLogger(__name__)


class PoolEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    sample: SynthSample
    inserted_at: int = Field(ge=0)


class CandidatePool(BaseModel):
    """Embedded, scored samples kept across training steps (and tasks) as diversity neighbors."""

    model_config = ConfigDict(frozen=True)

    entries: list[PoolEntry] = Field(default_factory=list)
    capacity: int = Field(default=2048, ge=1)
    eviction: Literal["fifo", "lowest_r_total"] = "fifo"
    insertions: int = Field(default=0, ge=0)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def samples(self) -> list[SynthSample]:
        return [e.sample for e in self.entries]

    def emptied(self) -> "CandidatePool":
        return self.model_copy(update={"entries": []})


def _r_total(entry: PoolEntry) -> float:
    rewards = entry.sample.rewards
    return rewards.r_total if rewards is not None and rewards.r_total is not None else 0.0


def update_candidate_pool(pool: CandidatePool, batch: list[SynthSample]) -> CandidatePool:
    """Append ``batch`` (skipping sample_ids already present) and evict down to capacity."""
    for sample in batch:
        if sample.embedding is None:
            raise MissingEmbedding(sample.sample_id)
    if not batch:
        return pool

    entries = list(pool.entries)
    present = {e.sample.sample_id for e in entries}
    counter = pool.insertions
    for sample in batch:
        if sample.sample_id in present:
            continue
        present.add(sample.sample_id)
        entries.append(PoolEntry(sample=sample, inserted_at=counter))
        counter += 1

    overflow = len(entries) - pool.capacity
    if overflow > 0:
        if pool.eviction == "fifo":
            victims = sorted(entries, key=lambda e: e.inserted_at)[:overflow]
        else:
            victims = sorted(entries, key=lambda e: (_r_total(e), e.inserted_at))[:overflow]
        evicted = {id(e) for e in victims}
        entries = [e for e in entries if id(e) not in evicted]
        logger.debug(f"candidate pool evicted {overflow} entr{'y' if overflow == 1 else 'ies'} ({pool.eviction})")

    return pool.model_copy(update={"entries": entries, "insertions": counter})


def nearest_neighbors(pool: CandidatePool, query, count: int) -> list[SynthSample]:
    """Top ``count`` pool samples by cosine similarity to ``query``; ties go to the smaller sample_id."""
    if not pool.entries or count <= 0:
        return []
    matrix = np.asarray([e.sample.embedding for e in pool.entries], dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    sims = (matrix @ q) / (np.linalg.norm(matrix, axis=1) * np.linalg.norm(q))
    order = sorted(range(len(pool.entries)), key=lambda i: (-float(sims[i]), pool.entries[i].sample.sample_id))
    return [pool.entries[i].sample for i in order[:count]]
