import numpy as np

from tasksmith.backends.utils import softmax
from tasksmith.exceptions import KindMismatch, PreconditionError
from tasksmith.schemas.policy import PolicyKind, PolicyState


def action_probabilities(policy: PolicyState, actions: list[str]) -> np.ndarray:
    """Softmax over ``actions``; actions without a logit sit at 0. External policies are uniform."""
    if not actions:
        raise PreconditionError("action space is empty")
    if policy.kind != PolicyKind.TOY_DISCRETE:
        return np.full(len(actions), 1.0 / len(actions))
    logits = policy.action_logits or {}
    return softmax([logits.get(a, 0.0) for a in actions])


def sample_actions(policy: PolicyState, actions: list[str], count: int, rng: np.random.Generator) -> list[str]:
    probs = action_probabilities(policy, actions)
    picks = rng.choice(len(actions), size=count, p=probs)
    return [actions[int(i)] for i in picks]


def raise_logits(policy: PolicyState, deltas: dict[str, float]) -> PolicyState:
    if policy.kind != PolicyKind.TOY_DISCRETE:
        raise KindMismatch("logit update", policy.kind.value)
    logits = dict(policy.action_logits or {})
    for action, delta in deltas.items():
        if delta:
            logits[action] = logits.get(action, 0.0) + delta
    return policy.model_copy(update={"action_logits": logits})


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, dtype=np.float64) - np.asarray(q, dtype=np.float64)).sum())
