import json
import tempfile
import unittest
from pathlib import Path

import numpy as np

from tasksmith.backends.gateway import BackendGateway
from tasksmith.backends.providers.base import ProviderAdapter
from tasksmith.backends.schemas.request import BackendConfig
from tasksmith.backends.utils import softmax
from tasksmith.exceptions import GroupSizeMismatch, KindMismatch, PreconditionError, TrainingAborted
from tasksmith.schemas.policy import PolicyStage, PolicyState
from tasksmith.schemas.prompt import PromptInstance, PromptPool, SlotAssignment
from tasksmith.schemas.sample import RewardBreakdown, SynthSample
from tasksmith.schemas.task import TaskSpec
from tasksmith.schemas.training import EftDataset, EftMix, EftRecord, GroupMember, GroupRollout, OptimizerConfig, RealExample
from tasksmith.services.optimizer.eft import build_sft_dataset, eft_update, split_counts
from tasksmith.services.optimizer.grpo import compute_group_advantages, grpo_step
from tasksmith.services.optimizer.hro_trainer import hro_train_task
from tasksmith.services.optimizer.toy_policy import action_probabilities, sample_actions, total_variation
from tasksmith.services.optimizer.types import RolloutEnvironment, TaskContext
from tasksmith.services.orchestrator.candidate_pool import CandidatePool

ACTIONS = ["a", "b", "best", "c"]
TASK = TaskSpec(task_id="bandit", label_set=["x"], prompt_template_ref="tpl", format_rules_ref="fmt", relevance_config_ref="rel")


def eft_ready(policy: PolicyState | None = None) -> PolicyState:
    policy = policy or PolicyState.uniform_toy()
    return policy.model_copy(update={"stage": PolicyStage.EFT_INITIALIZED})


def scored_sample(text: str, reward: float) -> SynthSample:
    rewards = RewardBreakdown(s_struct=reward, s_fluent=0.0, s_rel=0.0, gamma_struct=1.0, gamma_fluent=0.0, gamma_rel=0.0, rs=reward)
    return SynthSample.create(text, "bandit", "p", "x").model_copy(update={"rewards": rewards.with_set_score(1.0, 1.0)})


def rollout_of(actions: list[str], rewards: list[float]) -> GroupRollout:
    members = [GroupMember(action_key=a, sample=scored_sample(a, r), r_total=r) for a, r in zip(actions, rewards, strict=True)]
    return GroupRollout(prompt_id="p", members=members, step_index=0)


def bandit_context() -> TaskContext:
    base = PromptInstance.create("write one", "bandit", SlotAssignment(entries={}))
    return TaskContext(task=TASK, prompt_pool=PromptPool(task_id="bandit", prompts=[base]), action_space=list(ACTIONS), pool_neighbors=4)


class BanditEnvironment(RolloutEnvironment):
    """One state, four arms; 'best' pays 1.0 and the rest 0.2 (every arm 0.5 when flat). Never touches the rng."""

    def __init__(self, fail_at: int | None = None, flat: bool = False):
        self.fail_at = fail_at
        self.flat = flat

    async def rollout(self, actions, step, rng):
        if step == self.fail_at:
            raise RuntimeError("generator went away")
        return [SynthSample.create(a, "bandit", "p", "x", step_index=step) for a in actions]

    async def embed(self, samples):
        out = []
        for s in samples:
            vector = [0.0] * len(ACTIONS)
            vector[ACTIONS.index(s.text)] = 1.0
            out.append(s.model_copy(update={"embedding": vector}))
        return out

    async def score(self, samples, neighbor_sets):
        rewards = [0.5 if self.flat else 1.0 if s.text == "best" else 0.2 for s in samples]
        return [s.model_copy(update={"rewards": scored_sample(s.text, r).rewards}) for s, r in zip(samples, rewards, strict=True)]


def reference_bandit(cfg: OptimizerConfig, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    logits: dict[str, float] = {}
    for _ in range(cfg.max_rl_steps):
        probs = softmax([logits.get(a, 0.0) for a in ACTIONS])
        picks = [ACTIONS[int(i)] for i in rng.choice(len(ACTIONS), size=cfg.group_size, p=probs)]
        rewards = np.asarray([1.0 if a == "best" else 0.2 for a in picks])
        centered = rewards - rewards.mean()
        advantages = centered / max(float(rewards.std()), cfg.std_floor)
        deltas: dict[str, float] = {}
        for action, advantage in zip(picks, advantages, strict=True):
            deltas[action] = deltas.get(action, 0.0) + cfg.learning_rate * min(cfg.clip_epsilon, max(-cfg.clip_epsilon, float(advantage)))
        for action, delta in deltas.items():
            if delta:
                logits[action] = logits.get(action, 0.0) + delta
    return softmax([logits.get(a, 0.0) for a in ACTIONS])


class AdvantageTests(unittest.TestCase):
    def test_advantages_are_centered(self):
        rng = np.random.default_rng(0)
        for norm in ("mean_only", "mean_std"):
            cfg = OptimizerConfig(group_size=5, advantage_norm=norm)
            for _ in range(500):
                advantages = compute_group_advantages(rng.uniform(0, 1, size=5).tolist(), cfg)
                self.assertAlmostEqual(sum(advantages), 0.0, delta=1e-9)

    def test_shifting_rewards_changes_nothing(self):
        cfg = OptimizerConfig(group_size=4)
        rewards = [0.1, 0.4, 0.4, 0.9]
        np.testing.assert_allclose(compute_group_advantages(rewards, cfg), compute_group_advantages([r + 0.05 for r in rewards], cfg), atol=1e-9)

    def test_mean_std_uses_population_std(self):
        advantages = compute_group_advantages([1.0, 0.0, 0.5], OptimizerConfig(group_size=3, advantage_norm="mean_std"))
        np.testing.assert_allclose(advantages, [1.2247, -1.2247, 0.0], atol=1e-3)
        self.assertEqual(compute_group_advantages([1.0, 0.0, 0.5], OptimizerConfig(group_size=3, advantage_norm="mean_only")), [0.5, -0.5, 0.0])

    def test_equal_rewards_give_zero_advantages(self):
        self.assertEqual(compute_group_advantages([0.3] * 4, OptimizerConfig()), [0.0] * 4)

    def test_group_size_mismatch(self):
        with self.assertRaises(GroupSizeMismatch):
            compute_group_advantages([0.1, 0.2, 0.3], OptimizerConfig(group_size=4))


class GrpoStepTests(unittest.TestCase):
    def test_large_advantages_are_clipped(self):
        cfg = OptimizerConfig(group_size=2, learning_rate=0.5, clip_epsilon=1.0)
        rollout = rollout_of(["a", "b"], [1.0, 0.0])
        clipped = grpo_step(PolicyState.uniform_toy(), rollout, [10.0, -10.0], cfg)
        exact = grpo_step(PolicyState.uniform_toy(), rollout, [1.0, -1.0], cfg)
        self.assertEqual(clipped.action_logits, exact.action_logits)
        self.assertEqual(clipped.action_logits, {"a": 0.5, "b": -0.5})

    def test_repeated_actions_accumulate(self):
        cfg = OptimizerConfig(group_size=3, learning_rate=0.1)
        updated = grpo_step(PolicyState.uniform_toy(), rollout_of(["a", "a", "b"], [1.0, 1.0, 0.0]), [0.5, 0.5, -1.0], cfg)
        self.assertAlmostEqual(updated.action_logits["a"], 0.1)
        self.assertAlmostEqual(updated.action_logits["b"], -0.1)

    def test_external_policies_are_rejected(self):
        with self.assertRaises(KindMismatch):
            grpo_step(PolicyState.external("chat"), rollout_of(["a", "b"], [1.0, 0.0]), [1.0, -1.0], OptimizerConfig(group_size=2))

    def test_group_rollout_needs_scored_members(self):
        with self.assertRaises(ValueError):
            GroupRollout(prompt_id="p", members=[GroupMember(action_key="a", sample=SynthSample.create("a", "t", "p", "x"), r_total=0.5)], step_index=0)


class ToyPolicyTests(unittest.TestCase):
    def test_missing_logits_are_zero(self):
        np.testing.assert_allclose(action_probabilities(PolicyState.uniform_toy(), ACTIONS), [0.25] * 4)
        probs = action_probabilities(PolicyState.uniform_toy().model_copy(update={"action_logits": {"best": np.log(3.0)}}), ACTIONS)
        self.assertAlmostEqual(float(probs[2]), 0.5)

    def test_external_policies_sample_uniformly(self):
        np.testing.assert_allclose(action_probabilities(PolicyState.external("chat"), ACTIONS), [0.25] * 4)

    def test_empty_action_space(self):
        with self.assertRaises(PreconditionError):
            sample_actions(PolicyState.uniform_toy(), [], 4, np.random.default_rng(0))

    def test_total_variation(self):
        self.assertEqual(total_variation([1.0, 0.0], [0.0, 1.0]), 1.0)
        self.assertEqual(total_variation([0.5, 0.5], [0.5, 0.5]), 0.0)


class HroBanditTests(unittest.IsolatedAsyncioTestCase):
    cfg = OptimizerConfig(max_rl_steps=200, group_size=4, learning_rate=0.3, lam=1.0)

    async def test_converges_to_the_best_arm(self):
        for seed in range(20):
            result = await hro_train_task(eft_ready(), bandit_context(), BanditEnvironment(), CandidatePool(capacity=16), self.cfg, np.random.default_rng(seed))
            probs = action_probabilities(result.policy, ACTIONS)
            self.assertGreater(float(probs[ACTIONS.index("best")]), 0.9, f"seed {seed}")

    async def test_matches_the_reference_recursion(self):
        for seed in range(20):
            result = await hro_train_task(eft_ready(), bandit_context(), BanditEnvironment(), CandidatePool(capacity=16), self.cfg, np.random.default_rng(seed))
            self.assertLessEqual(total_variation(action_probabilities(result.policy, ACTIONS), reference_bandit(self.cfg, seed)), 0.02)

    async def test_flat_rewards_leave_the_policy_in_place(self):
        cfg = self.cfg.model_copy(update={"advantage_norm": "mean_only"})
        start = action_probabilities(eft_ready(), ACTIONS)
        for seed in range(5):
            result = await hro_train_task(eft_ready(), bandit_context(), BanditEnvironment(flat=True), CandidatePool(capacity=16), cfg, np.random.default_rng(seed))
            self.assertEqual(len(result.trace.steps), 200)
            self.assertLessEqual(total_variation(action_probabilities(result.policy, ACTIONS), start), 0.05)

    async def test_result_records_stage_trace_and_pool(self):
        cfg = self.cfg.model_copy(update={"max_rl_steps": 10})
        steps = []
        result = await hro_train_task(eft_ready(), bandit_context(), BanditEnvironment(), CandidatePool(capacity=16), cfg, np.random.default_rng(1), on_step=lambda step, *_: steps.append(step))
        self.assertEqual(result.policy.stage, PolicyStage.HRO_TRAINED)
        self.assertEqual(result.policy.trained_through, ["bandit"])
        self.assertEqual([s.step for s in result.trace.steps], list(range(10)))
        self.assertEqual(steps, list(range(10)))
        self.assertLessEqual(len(result.candidate_pool), len(ACTIONS))

    async def test_frozen_updates_leave_logits_alone(self):
        cfg = self.cfg.model_copy(update={"max_rl_steps": 5, "apply_updates": False})
        result = await hro_train_task(eft_ready(), bandit_context(), BanditEnvironment(), CandidatePool(), cfg, np.random.default_rng(2))
        self.assertEqual(result.policy.action_logits, {})

    async def test_external_policy_exports_rollouts(self):
        cfg = self.cfg.model_copy(update={"max_rl_steps": 3})
        result = await hro_train_task(eft_ready(PolicyState.external("chat")), bandit_context(), BanditEnvironment(), CandidatePool(), cfg, np.random.default_rng(3))
        self.assertEqual(len(result.exported_rollouts), 3 * cfg.group_size)
        self.assertIsNone(result.policy.action_logits)
        self.assertEqual(set(result.exported_rollouts[0]), {"step", "action_key", "prompt", "text", "rs", "ds", "r_total", "advantage"})

    async def test_requires_eft_stage(self):
        with self.assertRaises(PreconditionError):
            await hro_train_task(PolicyState.uniform_toy(), bandit_context(), BanditEnvironment(), CandidatePool(), self.cfg, np.random.default_rng(0))

    async def test_failure_carries_last_consistent_state(self):
        cfg = self.cfg.model_copy(update={"max_rl_steps": 10})
        with self.assertRaises(TrainingAborted) as caught:
            await hro_train_task(eft_ready(), bandit_context(), BanditEnvironment(fail_at=4), CandidatePool(), cfg, np.random.default_rng(0))
        aborted = caught.exception
        self.assertEqual(aborted.step, 4)
        self.assertEqual(len(aborted.trace.steps), 4)
        self.assertEqual(aborted.policy.stage, PolicyStage.EFT_INITIALIZED)
        self.assertIsInstance(aborted.__cause__, RuntimeError)


class EchoGenerator(ProviderAdapter):
    def __init__(self):
        super().__init__(BackendConfig(backend_id="gen", kind="mock_generator"))
        self.seeds = []

    async def generate(self, prompt, decoding, instruction=None):
        self.seeds.append(decoding.seed)
        return f"reply to {prompt}"


def tone_pool() -> PromptPool:
    prompts = [PromptInstance.create(f"Write a {tone} review.", "reviews", SlotAssignment(entries={"tone": tone})) for tone in ("warm", "dry", "angry")]
    return PromptPool(task_id="reviews", prompts=prompts)


REVIEWS = TaskSpec(task_id="reviews", label_set=["warm", "dry", "angry"], prompt_template_ref="tpl", format_rules_ref="fmt", relevance_config_ref="rel", label_slot="tone")


class EftTests(unittest.IsolatedAsyncioTestCase):
    def test_split_counts(self):
        self.assertEqual(split_counts(10, EftMix()), (10, 0))
        self.assertEqual(split_counts(10, EftMix(synthetic=0.7, real=0.3)), (7, 3))

    async def test_synthetic_records_cycle_the_pool(self):
        generator = EchoGenerator()
        gateway = BackendGateway([], adapters={"gen": generator})
        dataset = await build_sft_dataset(REVIEWS, tone_pool(), gateway, "gen", 5, EftMix())
        self.assertEqual([r.label for r in dataset.records], ["warm", "dry", "angry", "warm", "dry"])
        self.assertEqual(dataset.records[0].target, "reply to Write a warm review.")
        self.assertEqual(dataset.records[1].action_key, "tone=dry")
        self.assertEqual(generator.seeds, [0, 1, 2, 3, 4])

    async def test_real_examples_fill_their_share(self):
        gateway = BackendGateway([], adapters={"gen": EchoGenerator()})
        real = [RealExample(prompt="q", completion="a", label="dry")]
        with self.assertLogs("tasksmith.services.optimizer.eft", level="WARNING"):
            dataset = await build_sft_dataset(REVIEWS, tone_pool(), gateway, "gen", 4, EftMix(synthetic=0.5, real=0.5), real)
        self.assertEqual([r.source for r in dataset.records], ["synthetic", "synthetic", "real", "real"])

    async def test_missing_real_examples(self):
        with self.assertRaises(PreconditionError):
            await build_sft_dataset(REVIEWS, tone_pool(), None, None, 2, EftMix(synthetic=0.0, real=1.0))

    async def test_records_above_median_raise_their_assignment(self):
        records = [EftRecord(prompt="p", target="t", label="x", source="synthetic", action_key=k, rs=rs) for k, rs in (("tone=warm", 0.9), ("tone=dry", 0.5), ("tone=angry", 0.1))]
        dataset = EftDataset(task_id="reviews", records=records, source_mix=EftMix())
        updated = await eft_update(PolicyState.uniform_toy(), dataset, OptimizerConfig(learning_rate=0.25))
        self.assertEqual(updated.action_logits, {"tone=warm": 0.25})
        self.assertEqual(updated.stage, PolicyStage.EFT_INITIALIZED)

    async def test_symmetric_dataset_keeps_a_uniform_policy(self):
        tones = ["tone=warm", "tone=dry", "tone=angry"]
        records = [EftRecord(prompt="p", target="t", label="x", source="synthetic", action_key=k, rs=rs) for k in tones for rs in (0.9, 0.1)]
        dataset = EftDataset(task_id="reviews", records=records, source_mix=EftMix())
        updated = await eft_update(PolicyState.uniform_toy(), dataset, OptimizerConfig(learning_rate=0.25))
        np.testing.assert_allclose(action_probabilities(updated, tones), [1 / 3] * 3, atol=1e-9)

    async def test_external_policy_exports_the_dataset(self):
        records = [EftRecord(prompt="p", target="t", label="x", source="real")]
        dataset = EftDataset(task_id="reviews", records=records, source_mix=EftMix(synthetic=0.0, real=1.0))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "eft.jsonl"
            updated = await eft_update(PolicyState.external("chat"), dataset, OptimizerConfig(), export_path=path)
            lines = path.read_text(encoding="utf-8").splitlines()
        self.assertEqual([json.loads(line) for line in lines], [{"prompt": "p", "completion": "t", "label": "x"}])
        self.assertEqual(updated.stage, PolicyStage.EFT_INITIALIZED)


if __name__ == "__main__":
    unittest.main()
