import asyncio
import itertools
import logging

import numpy as np

from tasksmith.backends.gateway import BackendGateway
from tasksmith.backends.schemas.request import DecodingParams
from tasksmith.exceptions import ExhaustedAttempts, PreconditionError, SlotMismatch
from tasksmith.schemas.prompt import PLACEHOLDER_RE, BaseTemplate, ConstraintRule, GenerationLogEntry, Lineage, PromptInstance, PromptPool, PromptSetup, SlotAssignment, SlotDomain
from tasksmith.schemas.task import TaskSpec
from tasksmith.services.scoring.kernel import cosine_similarity

SEED_RANGE = 2**31 - 1


def sample_assignment(domains: list[SlotDomain], constraints: list[ConstraintRule], rng: np.random.Generator, max_attempts: int = 100) -> SlotAssignment:
    """Weighted draw per slot, rejected and redrawn until every constraint holds."""
    if max_attempts < 1:
        raise PreconditionError("max_attempts must be at least 1")
    probabilities = []
    for domain in domains:
        weights = np.array([v.weight for v in domain.values], dtype=np.float64)
        probabilities.append(weights / weights.sum())

    for _ in range(max_attempts):
        entries = {domain.slot_name: domain.values[int(rng.choice(len(domain.values), p=p))].value for domain, p in zip(domains, probabilities, strict=True)}
        if all(rule.allows(entries) for rule in constraints):
            return SlotAssignment(entries=entries)
    raise ExhaustedAttempts(max_attempts)


def instantiate_prompt(template: BaseTemplate, assignment: SlotAssignment, task_id: str) -> PromptInstance:
    if set(assignment.entries) != set(template.slot_names):
        raise SlotMismatch(template.slot_names, list(assignment.entries))
    text = PLACEHOLDER_RE.sub(lambda m: assignment.entries[m.group(1)], template.body)
    return PromptInstance.create(text=text, task_id=task_id, assignment=assignment)


class PromptEngineService:
    """Builds a task's prompt pool: slot-filled base prompts, then depth and breadth evolution through a generator backend."""

    def __init__(self, gateway: BackendGateway, generator_backend: str, decoding: DecodingParams | None = None, parallelism: int = 4):
        self.gateway = gateway
        self.generator_backend = generator_backend
        self.decoding = decoding or DecodingParams()
        self.parallelism = parallelism
        self.logger = logging.getLogger(__name__)

    async def _rewrite(self, prompt: PromptInstance, directive: str, seed: int) -> str:
        decoding = self.decoding.model_copy(update={"seed": seed})
        text = await self.gateway.generate(self.generator_backend, prompt.text, decoding, instruction=directive)
        return text.strip()

    async def evolve_depth(self, prompt: PromptInstance, directive: str, seed: int = 0) -> PromptInstance:
        """A harder rewrite of ``prompt``. An echo is retried once with the next seed, then returned flagged degenerate."""
        text = await self._rewrite(prompt, directive, seed)
        if text == prompt.text:
            text = await self._rewrite(prompt, directive, seed + 1)
        degenerate = text == prompt.text
        if degenerate:
            self.logger.warning(f"Depth evolution echoed prompt {prompt.prompt_id[:12]} twice; flagged degenerate")
        return PromptInstance.create(
            text=text,
            task_id=prompt.task_id,
            assignment=prompt.assignment,
            lineage=Lineage.DEPTH_EVOLVED,
            parent_id=prompt.prompt_id,
            degenerate=degenerate,
        )

    async def evolve_breadth(self, prompt: PromptInstance, fanout: int, directive: str, seed: int = 0) -> list[PromptInstance]:
        """Up to ``fanout`` sibling variants of ``prompt``; duplicates and parent echoes are dropped."""
        if fanout < 1:
            raise PreconditionError(f"breadth fanout must be at least 1 (got {fanout})")
        semaphore = asyncio.Semaphore(self.parallelism)

        async def one(i: int) -> str:
            async with semaphore:
                return await self._rewrite(prompt, directive, seed + i)

        texts = await asyncio.gather(*(one(i) for i in range(fanout)))
        children: list[PromptInstance] = []
        seen = {prompt.prompt_id}
        for text in texts:
            child = PromptInstance.create(
                text=text,
                task_id=prompt.task_id,
                assignment=prompt.assignment,
                lineage=Lineage.BREADTH_EVOLVED,
                parent_id=prompt.prompt_id,
            )
            if child.prompt_id in seen:
                continue
            seen.add(child.prompt_id)
            children.append(child)
        return children

    def _base_prompts(self, task: TaskSpec, setup: PromptSetup, rng: np.random.Generator) -> list[PromptInstance]:
        wanted = setup.evolution.base_count
        prompts: dict[str, PromptInstance] = {}
        for _ in range(wanted * setup.evolution.max_attempts):
            if len(prompts) == wanted:
                break
            assignment = sample_assignment(setup.domains, setup.constraints, rng, setup.evolution.max_attempts)
            prompt = instantiate_prompt(setup.template, assignment, task.task_id)
            prompts.setdefault(prompt.prompt_id, prompt)
        if len(prompts) < wanted:
            self.logger.warning(f"Task {task.task_id}: only {len(prompts)} distinct base prompts exist (wanted {wanted})")
        return list(prompts.values())

    async def build_prompt_pool(self, task: TaskSpec, setup: PromptSetup, rng: np.random.Generator) -> PromptPool:
        evolution = setup.evolution
        if evolution.base_count < 1:
            raise PreconditionError("base_count must be at least 1")

        pool: dict[str, PromptInstance] = {}
        log: list[GenerationLogEntry] = []
        for prompt in self._base_prompts(task, setup, rng):
            pool[prompt.prompt_id] = prompt
            log.append(GenerationLogEntry(operation="base", parent_id=None, child_id=prompt.prompt_id))

        semaphore = asyncio.Semaphore(self.parallelism)

        async def bounded(coro):
            async with semaphore:
                return await coro

        frontier = list(pool.values())
        for round_index in range(evolution.depth_rounds):
            if not frontier:
                break
            seeds = rng.integers(0, SEED_RANGE, size=len(frontier))
            children = await asyncio.gather(*(bounded(self.evolve_depth(p, evolution.depth_directive, int(s))) for p, s in zip(frontier, seeds, strict=True)))
            next_frontier = []
            for child in children:
                log.append(GenerationLogEntry(operation="depth", parent_id=child.parent_id, child_id=child.prompt_id, degenerate=child.degenerate))
                if child.degenerate or child.prompt_id in pool:
                    continue
                pool[child.prompt_id] = child
                next_frontier.append(child)
            self.logger.debug(f"Task {task.task_id}: depth round {round_index + 1} added {len(next_frontier)} prompt(s)")
            frontier = next_frontier

        if evolution.breadth_fanout > 0:
            parents = list(pool.values())
            seeds = rng.integers(0, SEED_RANGE, size=len(parents))
            # breadth calls are not wrapped in `bounded`; evolve_breadth bounds its own fan-out
            families = await asyncio.gather(*(self.evolve_breadth(p, evolution.breadth_fanout, evolution.breadth_directive, int(s)) for p, s in zip(parents, seeds, strict=True)))
            for parent, children in zip(parents, families, strict=True):
                if not children:
                    log.append(GenerationLogEntry(operation="breadth", parent_id=parent.prompt_id, child_id=parent.prompt_id, degenerate=True))
                for child in children:
                    log.append(GenerationLogEntry(operation="breadth", parent_id=child.parent_id, child_id=child.prompt_id))
                    pool.setdefault(child.prompt_id, child)

        result = PromptPool(task_id=task.task_id, prompts=list(pool.values()), generation_log=log)
        counts = {lineage: sum(1 for p in result.prompts if p.lineage == lineage) for lineage in Lineage}
        self.logger.info(f"🧩 Task {task.task_id}: prompt pool of {len(result.prompts)} ({counts[Lineage.BASE]} base, {counts[Lineage.DEPTH_EVOLVED]} depth, {counts[Lineage.BREADTH_EVOLVED]} breadth)")
        return result

    async def pool_dispersion(self, pool: PromptPool, embedder_backend: str) -> float:
        """Mean pairwise (1 - cosine) over the pool's prompt embeddings."""
        if not pool.prompts:
            raise PreconditionError("pool_dispersion needs a non-empty pool")
        if len(pool.prompts) == 1:
            return 0.0
        vectors = await self.gateway.embed(embedder_backend, [p.text for p in pool.prompts])
        distances = [1.0 - cosine_similarity(a, b) for a, b in itertools.combinations(vectors, 2)]
        return max(0.0, sum(distances) / len(distances))
