import asyncio
import logging
from collections.abc import Callable

import numpy as np

from tasksmith.backends.gateway import BackendGateway
from tasksmith.backends.schemas.request import DecodingParams
from tasksmith.exceptions import PreconditionError, TrainingAborted
from tasksmith.schemas.policy import PolicyKind, PolicyStage, PolicyState
from tasksmith.schemas.prompt import Lineage, PromptInstance, PromptPool, PromptSetup, SlotAssignment
from tasksmith.schemas.sample import SynthSample
from tasksmith.schemas.task import TaskSpec
from tasksmith.schemas.training import GroupMember, GroupRollout, OptimizerConfig, StepTrace, TrainingTrace
from tasksmith.services.optimizer.grpo import compute_group_advantages, grpo_step
from tasksmith.services.optimizer.toy_policy import sample_actions
from tasksmith.services.optimizer.types import HroResult, RolloutEnvironment, TaskContext
from tasksmith.services.orchestrator.candidate_pool import CandidatePool, nearest_neighbors, update_candidate_pool
from tasksmith.services.prompt_engine_service import instantiate_prompt
from tasksmith.services.scoring.scoring_service import ScoringService

logger = logging.getLogger(__name__)

SEED_RANGE = 2**31 - 1

StepCallback = Callable[[int, PolicyState, TrainingTrace, CandidatePool], None]


class SynthesisEnvironment(RolloutEnvironment):
    """Actions are slot-assignment keys (toy policies) or prompt ids (external policies); each becomes one generated sample."""

    def __init__(self, task: TaskSpec, prompt_pool: PromptPool, gateway: BackendGateway, generator_backend: str, scoring: ScoringService, setup: PromptSetup | None = None, decoding: DecodingParams | None = None):
        self.task = task
        self.prompt_pool = prompt_pool
        self.gateway = gateway
        self.generator_backend = generator_backend
        self.scoring = scoring
        self.setup = setup
        self.decoding = decoding or DecodingParams()
        self._by_id = {p.prompt_id: p for p in prompt_pool.prompts}

    def prompt_for(self, action: str, rng: np.random.Generator) -> PromptInstance:
        if action in self._by_id:
            return self._by_id[action]
        candidates = self.prompt_pool.by_assignment(action)
        evolved = [p for p in candidates if p.lineage != Lineage.BASE]
        choices = evolved or candidates
        if choices:
            return choices[int(rng.integers(len(choices)))]
        if self.setup is None:
            raise PreconditionError(f"action '{action}' matches no pooled prompt and no template is available")
        return instantiate_prompt(self.setup.template, SlotAssignment.from_key(action), self.task.task_id)

    async def rollout(self, actions: list[str], step: int, rng: np.random.Generator) -> list[SynthSample]:
        prompts = [self.prompt_for(a, rng) for a in actions]
        seeds = rng.integers(0, SEED_RANGE, size=len(prompts))
        texts = await asyncio.gather(*(self.gateway.generate(self.generator_backend, p.text, self.decoding.model_copy(update={"seed": int(s)})) for p, s in zip(prompts, seeds, strict=True)))
        return [
            SynthSample.create(text=text, task_id=self.task.task_id, prompt_id=p.prompt_id, label=self.task.label_for(p.assignment.entries), step_index=step)
            for p, text in zip(prompts, texts, strict=True)
        ]

    async def embed(self, samples: list[SynthSample]) -> list[SynthSample]:
        return await self.scoring.embed(samples)

    async def score(self, samples: list[SynthSample], neighbor_sets: list[list[SynthSample]]) -> list[SynthSample]:
        return await self.scoring.score_batch(samples, neighbor_sets)


def _rollout_rows(step: int, actions: list[str], scored: list[SynthSample], advantages: list[float], prompt_text: Callable[[SynthSample], str]) -> list[dict]:
    rows = []
    for action, sample, advantage in zip(actions, scored, advantages, strict=True):
        rewards = sample.rewards
        rows.append({"step": step, "action_key": action, "prompt": prompt_text(sample), "text": sample.text, "rs": rewards.rs, "ds": rewards.ds, "r_total": rewards.r_total, "advantage": advantage})
    return rows


async def hro_train_task(
    policy: PolicyState,
    context: TaskContext,
    environment: RolloutEnvironment,
    candidate_pool: CandidatePool,
    cfg: OptimizerConfig,
    rng: np.random.Generator,
    on_step: StepCallback | None = None,
) -> HroResult:
    """Hierarchical reward optimization for one task.

    Each step samples ``group_size`` actions, rolls them out, scores every
    member against the group plus its nearest candidate-pool neighbors,
    turns r_total into group-relative advantages and (for toy policies)
    applies one clipped update. Scored members join the candidate pool.
    Any failure is re-raised as TrainingAborted carrying the last
    consistent policy, trace and pool.
    """
    task_id = context.task.task_id
    if policy.stage != PolicyStage.EFT_INITIALIZED:
        raise PreconditionError(f"HRO on task '{task_id}' needs an EFT-initialized policy (stage is {policy.stage.value})")

    trace = TrainingTrace(task_id=task_id)
    pool = candidate_pool
    exported: list[dict] = []
    prompt_texts = {p.prompt_id: p.text for p in context.prompt_pool.prompts}
    report_every = max(1, cfg.max_rl_steps // 5)

    for step in range(cfg.max_rl_steps):
        try:
            actions = sample_actions(policy, context.action_space, cfg.group_size, rng)
            samples = await environment.rollout(actions, step, rng)
            embedded = await environment.embed(samples)
            neighbor_sets = [nearest_neighbors(pool, s.embedding, context.pool_neighbors) for s in embedded]
            scored = await environment.score(embedded, neighbor_sets)

            rewards = [s.rewards.r_total for s in scored]
            advantages = compute_group_advantages(rewards, cfg)
            rollout = GroupRollout(
                prompt_id=context.task.prompt_template_ref,
                members=[GroupMember(action_key=a, sample=s, r_total=r) for a, s, r in zip(actions, scored, rewards, strict=True)],
                step_index=step,
            )
            if policy.kind == PolicyKind.TOY_DISCRETE:
                if cfg.apply_updates:
                    policy = grpo_step(policy, rollout, advantages, cfg)
            else:
                exported.extend(_rollout_rows(step, actions, scored, advantages, lambda s: prompt_texts.get(s.prompt_id, "")))

            pool = update_candidate_pool(pool, scored)
            n = len(scored)
            trace = trace.model_copy(
                update={
                    "steps": [
                        *trace.steps,
                        StepTrace(
                            step=step,
                            mean_r_total=sum(rewards) / n,
                            mean_rs=sum(s.rewards.rs for s in scored) / n,
                            mean_ds=sum(s.rewards.ds for s in scored) / n,
                        ),
                    ]
                }
            )
        except TrainingAborted:
            raise
        except Exception as e:
            raise TrainingAborted(task_id, step, policy, trace, pool) from e

        if (step + 1) % report_every == 0:
            logger.info(f"📈 {task_id} step {step + 1}/{cfg.max_rl_steps}: mean r_total {trace.steps[-1].mean_r_total:.3f}")
        if on_step is not None:
            on_step(step, policy, trace, pool)

    policy = policy.model_copy(update={"stage": PolicyStage.HRO_TRAINED, "trained_through": [*policy.trained_through, task_id]})
    return HroResult(policy=policy, trace=trace, candidate_pool=pool, exported_rollouts=exported)
