import logging
import time
from pathlib import Path

import numpy as np

from tasksmith.backends.gateway import BackendGateway
from tasksmith.exceptions import PreconditionError, TaskFailedError, TrainingAborted
from tasksmith.schemas.policy import PolicyKind
from tasksmith.schemas.records import write_dict_jsonl
from tasksmith.schemas.report import StreamReport, TaskReportRow
from tasksmith.schemas.task import TaskSpec, TaskStream
from tasksmith.schemas.training import TrainingTrace
from tasksmith.services.config_service import RunConfig
from tasksmith.services.optimizer.eft import build_sft_dataset, eft_update
from tasksmith.services.optimizer.hro_trainer import SynthesisEnvironment, hro_train_task
from tasksmith.services.optimizer.types import TaskContext
from tasksmith.services.orchestrator.candidate_pool import CandidatePool
from tasksmith.services.orchestrator.checkpoint import Checkpoint, StreamState, checkpoint_path, new_rng, partial_checkpoint_path, rng_from_state, save_checkpoint
from tasksmith.services.prompt_engine_service import PromptEngineService
from tasksmith.services.scoring.scoring_service import ScoringService


def report_row(trace: TrainingTrace, wall_time: float | None = None) -> TaskReportRow:
    return TaskReportRow(
        task_id=trace.task_id,
        mean_rs=trace.mean_of("mean_rs"),
        mean_ds=trace.mean_of("mean_ds"),
        mean_r_total=trace.mean_of("mean_r_total"),
        steps=len(trace.steps),
        wall_time=wall_time,
    )


class StreamRunner:
    """
    Runs a task stream end to end: for every task, build the prompt pool,
    warm-start the policy, run HRO, and checkpoint at the task boundary.

    The policy and candidate pool carry over from task to task. One seeded
    generator drives every random choice, and its state is part of each
    checkpoint, so a resumed run continues exactly where the interrupted one stopped.
    """

    def __init__(self, config: RunConfig, gateway: BackendGateway, output_dir: str | Path | None = None):
        self.config = config
        self.gateway = gateway
        self.output_dir = Path(output_dir or config.orchestrator.output_dir)
        self.digest = config.digest()
        self.prompt_engine = PromptEngineService(gateway, config.roles.evolution_backend, config.decoding)
        self.logger = logging.getLogger(__name__)

    @property
    def checkpoint_dir(self) -> Path:
        return self.output_dir / "checkpoints"

    @property
    def export_dir(self) -> Path:
        return self.output_dir / "exports"

    def initial_state(self, stream: TaskStream) -> StreamState:
        orchestrator = self.config.orchestrator
        return StreamState(
            stream_id=stream.stream_id,
            task_cursor=0,
            policy=self.config.policy.initial_state(),
            pool=CandidatePool(capacity=orchestrator.pool_capacity, eviction=orchestrator.eviction),
            rng_state=new_rng(stream.seed).bit_generator.state,
        )

    def save(self, state: StreamState) -> Path:
        return save_checkpoint(state, checkpoint_path(self.checkpoint_dir, state.stream_id, state.task_cursor), self.digest)

    def _resume_state(self, stream: TaskStream, resume: Checkpoint) -> StreamState:
        state = resume.state
        if resume.partial:
            raise PreconditionError(f"checkpoint at step {state.partial_step} of a task is a partial snapshot and cannot be resumed")
        if state.stream_id != stream.stream_id:
            raise PreconditionError(f"checkpoint belongs to stream '{state.stream_id}', not '{stream.stream_id}'")
        if state.task_cursor > len(stream.tasks):
            raise PreconditionError(f"checkpoint cursor {state.task_cursor} is past the end of a {len(stream.tasks)}-task stream")
        if state.policy.trained_through != stream.task_ids[: state.task_cursor]:
            raise PreconditionError(f"checkpoint policy was trained through {state.policy.trained_through}, stream expects {stream.task_ids[: state.task_cursor]}")
        return state

    async def run_task(self, state: StreamState, task: TaskSpec, rng: np.random.Generator) -> StreamState:
        config = self.config
        cfg = config.optimizer
        setup = config.prompts[task.prompt_template_ref]
        self.prompt_engine.parallelism = setup.evolution.parallelism
        external = state.policy.kind == PolicyKind.EXTERNAL_ENDPOINT

        prompt_pool = await self.prompt_engine.build_prompt_pool(task, setup, rng)
        scoring = ScoringService(self.gateway, config.task_scoring(task))
        action_space = [p.prompt_id for p in prompt_pool.prompts] if external else setup.action_space()

        dataset = await build_sft_dataset(task, prompt_pool, self.gateway, config.roles.generator, cfg.eft_records, cfg.eft_mix, config.real_examples.get(task.task_id), config.decoding)
        export_path = self.export_dir / f"eft-{task.task_id}.jsonl" if external else None
        policy = await eft_update(state.policy, dataset, cfg, scoring, export_path)

        candidate_pool = state.pool.emptied() if config.orchestrator.reset_pool_per_task else state.pool
        context = TaskContext(task=task, prompt_pool=prompt_pool, action_space=action_space, setup=setup, pool_neighbors=config.scoring.diversity.pool_neighbors)
        environment = SynthesisEnvironment(task, prompt_pool, self.gateway, config.roles.generator, scoring, setup, config.decoding)

        every = config.orchestrator.checkpoint_every_steps
        on_step = None
        if every > 0:

            def on_step(step, step_policy, trace, pool):
                if (step + 1) % every == 0:
                    self._save_partial(state, step_policy, pool, trace, step + 1, rng)

        result = await hro_train_task(policy, context, environment, candidate_pool, cfg, rng, on_step)
        if external and result.exported_rollouts:
            written = write_dict_jsonl(self.export_dir / f"rollouts-{task.task_id}.jsonl", result.exported_rollouts)
            self.logger.info(f"📦 Exported {written} rollout row(s) for task {task.task_id}")

        return state.model_copy(
            update={
                "task_cursor": state.task_cursor + 1,
                "policy": result.policy,
                "pool": result.candidate_pool,
                "traces": [*state.traces, result.trace],
                "rng_state": rng.bit_generator.state,
            }
        )

    def _save_partial(self, state: StreamState, policy, pool, trace, step: int, rng: np.random.Generator):
        snapshot = state.model_copy(update={"policy": policy, "pool": pool, "traces": [*state.traces, trace], "rng_state": rng.bit_generator.state, "partial_step": step})
        path = save_checkpoint(snapshot, partial_checkpoint_path(self.checkpoint_dir, state.stream_id, state.task_cursor, step), self.digest)
        self.logger.debug(f"Partial snapshot written: {path}")

    async def run_stream(self, stream: TaskStream, resume: Checkpoint | None = None) -> tuple[StreamState, StreamReport]:
        state = self._resume_state(stream, resume) if resume is not None else self.initial_state(stream)
        rows = [report_row(trace) for trace in state.traces]
        rng = rng_from_state(state.rng_state)

        if state.task_cursor:
            self.logger.info(f"⏩ Resuming {stream.stream_id} after task {stream.tasks[state.task_cursor - 1].task_id} ({state.task_cursor}/{len(stream.tasks)} done)")

        for task in stream.tasks[state.task_cursor :]:
            self.logger.info(f"🚀 Task {state.task_cursor + 1}/{len(stream.tasks)}: {task.task_id}")
            started = time.perf_counter()
            try:
                next_state = await self.run_task(state, task, rng)
            except Exception as e:
                path = self.save(state)
                if isinstance(e, TrainingAborted) and self.config.orchestrator.checkpoint_every_steps > 0:
                    self._save_partial(state, e.policy, e.candidate_pool, e.trace, e.step, rng)
                self.logger.error(f"❌ Task {task.task_id} failed; last good state saved to {path}")
                raise TaskFailedError(task.task_id, e.__cause__ or e) from e

            state = next_state
            path = self.save(state)
            elapsed = time.perf_counter() - started
            row = report_row(state.traces[-1], elapsed if self.config.orchestrator.record_wall_time else None)
            rows.append(row)
            self.logger.info(f"✅ {task.task_id}: mean r_total {row.mean_r_total:.3f} (rs {row.mean_rs:.3f}, ds {row.mean_ds:.3f}) · checkpoint {path.name}")

        report = StreamReport(stream_id=stream.stream_id, seed=stream.seed, config_digest=self.digest, rows=rows)
        return state, report
