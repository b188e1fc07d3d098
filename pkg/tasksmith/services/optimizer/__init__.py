from .eft import build_sft_dataset, eft_update, export_eft_dataset, score_eft_records
from .grpo import compute_group_advantages, grpo_step
from .hro_trainer import SynthesisEnvironment, hro_train_task
from .toy_policy import action_probabilities, sample_actions, total_variation
from .types import HroResult, RolloutEnvironment, TaskContext

__all__ = [
    "HroResult",
    "RolloutEnvironment",
    "SynthesisEnvironment",
    "TaskContext",
    "action_probabilities",
    "build_sft_dataset",
    "compute_group_advantages",
    "eft_update",
    "export_eft_dataset",
    "grpo_step",
    "hro_train_task",
    "sample_actions",
    "score_eft_records",
    "total_variation",
]
