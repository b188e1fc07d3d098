import numpy as np

from tasksmith.exceptions import GroupSizeMismatch, KindMismatch, PreconditionError
from tasksmith.schemas.policy import PolicyKind, PolicyState
from tasksmith.schemas.training import GroupRollout, OptimizerConfig
from tasksmith.services.optimizer.toy_policy import raise_logits


def compute_group_advantages(rewards: list[float], cfg: OptimizerConfig) -> list[float]:
    """Group-relative advantages: r - mean (mean_only) or (r - mean) / max(std, std_floor) with population std."""
    if len(rewards) != cfg.group_size:
        raise GroupSizeMismatch(len(rewards), cfg.group_size)
    values = np.asarray(rewards, dtype=np.float64)
    centered = values - values.mean()
    if cfg.advantage_norm == "mean_only":
        return centered.tolist()
    return (centered / max(float(values.std()), cfg.std_floor)).tolist()


def grpo_step(policy: PolicyState, rollout: GroupRollout, advantages: list[float], cfg: OptimizerConfig) -> PolicyState:
    """logit[action] += learning_rate * clip(advantage, -clip_epsilon, clip_epsilon) for every member.

    With centered advantages this is the exact policy gradient of a softmax
    policy over a single state, scaled by the learning rate.
    """
    if policy.kind != PolicyKind.TOY_DISCRETE:
        raise KindMismatch("grpo_step", policy.kind.value)
    if len(advantages) != len(rollout.members):
        raise PreconditionError(f"{len(advantages)} advantages for {len(rollout.members)} group members")

    deltas: dict[str, float] = {}
    for member, advantage in zip(rollout.members, advantages, strict=True):
        clipped = min(cfg.clip_epsilon, max(-cfg.clip_epsilon, advantage))
        deltas[member.action_key] = deltas.get(member.action_key, 0.0) + cfg.learning_rate * clipped
    return raise_logits(policy, deltas)
