import numpy as np

from tasksmith.exceptions import KindMismatch, PreconditionError
from tasksmith.schemas.policy import PolicyKind, PolicyState
from tasksmith.services.evaluation.toy_family import ToyTaskFamily
from tasksmith.services.optimizer.toy_policy import action_probabilities


def _check(policy: PolicyState, index: int, family: ToyTaskFamily):
    if policy.kind != PolicyKind.TOY_DISCRETE:
        raise KindMismatch("toy_utility", policy.kind.value)
    if not 0 <= index < family.num_tasks:
        raise PreconditionError(f"task index {index} outside family of {family.num_tasks} task(s)")


def toy_utility(policy: PolicyState, index: int, family: ToyTaskFamily, draws: int, rng: np.random.Generator) -> float:
    """Monte-Carlo expected reward of the policy on task ``index``.

    Each draw samples one assignment; its reward is the slot-agreement
    fraction with the task optimum plus N(0, reward_noise), clamped to [0, 1].
    """
    _check(policy, index, family)
    if draws < 1:
        raise PreconditionError("toy_utility needs at least one draw")
    actions = family.action_space
    agreement = np.asarray([family.agreement(a, index) for a in actions])
    picks = rng.choice(len(actions), size=draws, p=action_probabilities(policy, actions))
    rewards = agreement[picks]
    if family.spec.reward_noise > 0:
        rewards = rewards + rng.normal(0.0, family.spec.reward_noise, size=draws)
    return float(np.clip(rewards, 0.0, 1.0).mean())


def expected_toy_utility(policy: PolicyState, index: int, family: ToyTaskFamily) -> float:
    """Exact noise-free expectation of the slot-agreement reward."""
    _check(policy, index, family)
    actions = family.action_space
    agreement = np.asarray([family.agreement(a, index) for a in actions])
    return float(np.dot(action_probabilities(policy, actions), agreement))


def utility_stderr(draws: int, noise: float = 0.0) -> float:
    """Upper bound on the Monte-Carlo standard error: rewards live in [0, 1] so their variance is at most 1/4 (+ noise)."""
    return float(np.sqrt((0.25 + noise**2) / draws))
