from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from tasksmith.schemas.policy import PolicyState
from tasksmith.schemas.prompt import PromptPool, PromptSetup
from tasksmith.schemas.sample import SynthSample
from tasksmith.schemas.task import TaskSpec
from tasksmith.schemas.training import TrainingTrace
from tasksmith.services.orchestrator.candidate_pool import CandidatePool


@dataclass
class TaskContext:
    task: TaskSpec
    prompt_pool: PromptPool
    action_space: list[str]
    setup: PromptSetup | None = None
    pool_neighbors: int = 12


@dataclass
class HroResult:
    policy: PolicyState
    trace: TrainingTrace
    candidate_pool: CandidatePool
    exported_rollouts: list[dict] = field(default_factory=list)


class RolloutEnvironment(ABC):
    """Turns sampled actions into scored samples for one task."""

    @abstractmethod
    async def rollout(self, actions: list[str], step: int, rng: np.random.Generator) -> list[SynthSample]: ...

    @abstractmethod
    async def embed(self, samples: list[SynthSample]) -> list[SynthSample]: ...

    @abstractmethod
    async def score(self, samples: list[SynthSample], neighbor_sets: list[list[SynthSample]]) -> list[SynthSample]: ...
