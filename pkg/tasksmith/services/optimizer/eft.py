import asyncio
import logging
from pathlib import Path

import numpy as np

from tasksmith.backends.gateway import BackendGateway
from tasksmith.backends.schemas.request import DecodingParams
from tasksmith.exceptions import EmptyPool, PreconditionError
from tasksmith.schemas.policy import PolicyKind, PolicyStage, PolicyState
from tasksmith.schemas.prompt import PromptPool
from tasksmith.schemas.records import write_dict_jsonl
from tasksmith.schemas.sample import SynthSample
from tasksmith.schemas.task import TaskSpec
from tasksmith.schemas.training import EftDataset, EftMix, EftRecord, OptimizerConfig, RealExample
from tasksmith.services.optimizer.toy_policy import raise_logits
from tasksmith.services.scoring.scoring_service import ScoringService

logger = logging.getLogger(__name__)


def split_counts(count: int, mix: EftMix) -> tuple[int, int]:
    """(synthetic, real) record counts for ``count`` records."""
    real = int(round(count * mix.real))
    return count - real, real


async def build_sft_dataset(
    task: TaskSpec,
    pool: PromptPool,
    gateway: BackendGateway | None,
    generator_backend: str | None,
    count: int,
    mix: EftMix,
    real_examples: list[RealExample] | None = None,
    decoding: DecodingParams | None = None,
) -> EftDataset:
    """Supervised warm-start records: generator completions of pool prompts (cycled in pool order) plus real examples."""
    if count < 1:
        raise PreconditionError("an EFT dataset needs at least one record")
    n_synthetic, n_real = split_counts(count, mix)
    real_examples = real_examples or []

    records: list[EftRecord] = []
    if n_synthetic:
        if not pool.prompts:
            raise EmptyPool(f"task '{task.task_id}' has an empty prompt pool")
        decoding = decoding or DecodingParams()
        prompts = [pool.prompts[i % len(pool.prompts)] for i in range(n_synthetic)]
        completions = await asyncio.gather(*(gateway.generate(generator_backend, p.text, decoding.model_copy(update={"seed": i})) for i, p in enumerate(prompts)))
        for prompt, completion in zip(prompts, completions, strict=True):
            records.append(
                EftRecord(
                    prompt=prompt.text,
                    target=completion,
                    label=task.label_for(prompt.assignment.entries),
                    source="synthetic",
                    prompt_id=prompt.prompt_id,
                    action_key=prompt.assignment.key(),
                )
            )

    if n_real:
        if not real_examples:
            raise PreconditionError(f"EFT mix asks for {n_real} real record(s) but task '{task.task_id}' has no real examples")
        if len(real_examples) < n_real:
            logger.warning(f"Task {task.task_id}: {len(real_examples)} real example(s) cycled to fill {n_real} record(s)")
        for i in range(n_real):
            example = real_examples[i % len(real_examples)]
            records.append(EftRecord(prompt=example.prompt, target=example.completion, label=example.label, source="real"))

    return EftDataset(task_id=task.task_id, records=records, source_mix=mix)


async def score_eft_records(dataset: EftDataset, scoring: ScoringService) -> EftDataset:
    """Fill in the sample-level reward of every record that has none."""
    pending = [(i, r) for i, r in enumerate(dataset.records) if r.rs is None]
    if not pending:
        return dataset
    samples = [SynthSample.create(text=r.target, task_id=dataset.task_id, prompt_id=r.prompt_id or "real", label=r.label) for _, r in pending]
    breakdowns = await scoring.sample_rewards(samples)
    records = list(dataset.records)
    for (i, record), breakdown in zip(pending, breakdowns, strict=True):
        records[i] = record.model_copy(update={"rs": breakdown.rs})
    return dataset.model_copy(update={"records": records})


def export_eft_dataset(dataset: EftDataset, path: str | Path) -> int:
    return write_dict_jsonl(path, ({"prompt": r.prompt, "completion": r.target, "label": r.label} for r in dataset.records))


async def eft_update(
    policy: PolicyState,
    dataset: EftDataset,
    cfg: OptimizerConfig,
    scoring: ScoringService | None = None,
    export_path: str | Path | None = None,
) -> PolicyState:
    """Stage-1 warm start.

    toy_discrete: every slot assignment with a record scoring above the dataset
    median rs gets its logit raised by learning_rate.
    external_endpoint: the dataset is written to ``export_path`` for an offline trainer.
    """
    if policy.kind == PolicyKind.EXTERNAL_ENDPOINT:
        if export_path is not None:
            written = export_eft_dataset(dataset, export_path)
            logger.info(f"📦 Exported {written} EFT record(s) for task {dataset.task_id} to {export_path}")
        return policy.model_copy(update={"stage": PolicyStage.EFT_INITIALIZED})

    if scoring is not None:
        dataset = await score_eft_records(dataset, scoring)
    scored = [r for r in dataset.records if r.action_key is not None and r.rs is not None]
    if not scored:
        logger.debug(f"Task {dataset.task_id}: no scored synthetic records, EFT leaves the policy unchanged")
        return policy.model_copy(update={"stage": PolicyStage.EFT_INITIALIZED})

    median = float(np.median([r.rs for r in scored]))
    winners = sorted({r.action_key for r in scored if r.rs > median})
    updated = raise_logits(policy, {key: cfg.learning_rate for key in winners})
    logger.debug(f"Task {dataset.task_id}: EFT raised {len(winners)} assignment(s) above median rs {median:.3f}")
    return updated.model_copy(update={"stage": PolicyStage.EFT_INITIALIZED})
