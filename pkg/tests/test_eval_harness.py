import csv
import tempfile
import unittest

import numpy as np

from tasksmith.exceptions import AlignmentError, InvalidPermutation, KindMismatch, PreconditionError
from tasksmith.schemas.policy import PolicyKind, PolicyStage, PolicyState
from tasksmith.schemas.prompt import PromptInstance, PromptPool, SlotAssignment
from tasksmith.schemas.report import StreamReport, TaskReportRow
from tasksmith.schemas.sample import RewardBreakdown, SynthSample
from tasksmith.schemas.task import TaskSpec, TaskStream
from tasksmith.schemas.training import OptimizerConfig
from tasksmith.services.evaluation.diversity import distinct_ngram_ratio, diversity_report, pairwise_similarities
from tasksmith.services.evaluation.orders import base_stream_id, inverse_permutation, order_indices, order_rows, permute_stream, stage_means, stage_of
from tasksmith.services.evaluation.toy_family import ToyFamilySpec, ToyTaskFamily, expand_family, materialize_family
from tasksmith.services.evaluation.transfer import UNTRAINED_ROW, build_transfer_matrix, check_alignment, eval_forward_transfer, write_transfer_matrix
from tasksmith.services.evaluation.utility import expected_toy_utility, toy_utility, utility_stderr
from tasksmith.services.optimizer.hro_trainer import hro_train_task
from tasksmith.services.optimizer.types import RolloutEnvironment, TaskContext
from tasksmith.services.orchestrator.candidate_pool import CandidatePool


class AgreementEnvironment(RolloutEnvironment):
    """Rewards an action by its slot agreement with the current task's optimum."""

    def __init__(self, family: ToyTaskFamily, index: int):
        self.family = family
        self.index = index
        self.actions = family.action_space

    async def rollout(self, actions, step, rng):
        return [SynthSample.create(a, self.family.task_id(self.index), "p", "on_target", step_index=step) for a in actions]

    async def embed(self, samples):
        out = []
        for s in samples:
            vector = [0.0] * len(self.actions)
            vector[self.actions.index(s.text)] = 1.0
            out.append(s.model_copy(update={"embedding": vector}))
        return out

    async def score(self, samples, neighbor_sets):
        scored = []
        for s in samples:
            r = self.family.agreement(s.text, self.index)
            rewards = RewardBreakdown(s_struct=0.0, s_fluent=0.0, s_rel=r, gamma_struct=0.0, gamma_fluent=0.0, gamma_rel=1.0, rs=r).with_set_score(1.0, 1.0)
            scored.append(s.model_copy(update={"rewards": rewards}))
        return scored


async def train_through_family(family: ToyTaskFamily, seed: int, cfg: OptimizerConfig) -> list[tuple[str, PolicyState]]:
    tasks = expand_family(family)[0]
    rng = np.random.default_rng(seed)
    policy = PolicyState.uniform_toy()
    pool = CandidatePool(capacity=64)
    checkpoints = []
    for index, task in enumerate(tasks):
        base = PromptInstance.create(f"prompt for {task.task_id}", task.task_id, SlotAssignment(entries={}))
        context = TaskContext(task=task, prompt_pool=PromptPool(task_id=task.task_id, prompts=[base]), action_space=family.action_space)
        ready = policy.model_copy(update={"stage": PolicyStage.EFT_INITIALIZED})
        result = await hro_train_task(ready, context, AgreementEnvironment(family, index), pool, cfg, rng)
        policy, pool = result.policy, result.candidate_pool
        checkpoints.append((f"ckpt-{index}", policy))
    return checkpoints


def peaked_checkpoints(family: ToyTaskFamily, count: int) -> list[tuple[str, PolicyState]]:
    """Checkpoint i strongly prefers task i's optimum."""
    return [
        (
            f"ckpt-{i}",
            PolicyState(
                kind=PolicyKind.TOY_DISCRETE,
                stage=PolicyStage.HRO_TRAINED,
                action_logits={family.optimal_assignment_per_task[i].key(): 6.0},
                trained_through=family.task_ids[: i + 1],
            ),
        )
        for i in range(count)
    ]


class ToyFamilyTests(unittest.TestCase):
    def test_materialization_is_deterministic(self):
        spec = ToyFamilySpec(num_tasks=4, num_slots=3, values_per_slot=4, overlap=0.5, seed=3)
        self.assertEqual(materialize_family(spec), materialize_family(spec))

    def test_overlap_controls_shared_optima(self):
        for seed in range(10):
            same = materialize_family(ToyFamilySpec(num_tasks=3, num_slots=4, overlap=1.0, seed=seed))
            self.assertEqual(len({a.key() for a in same.optimal_assignment_per_task}), 1)
            half = materialize_family(ToyFamilySpec(num_tasks=3, num_slots=4, overlap=0.5, seed=seed))
            self.assertTrue(all(half.shared_fraction(i) >= 0.5 for i in (1, 2)))

    def test_action_space_is_the_full_product(self):
        family = materialize_family(ToyFamilySpec(num_slots=2, values_per_slot=3))
        self.assertEqual(len(family.action_space), 9)
        self.assertEqual(family.agreement(family.optimal_assignment_per_task[0].key(), 0), 1.0)

    def test_expanded_tasks_reference_their_entries(self):
        family = materialize_family(ToyFamilySpec(num_tasks=2))
        tasks, prompts, relevance, format_rules = expand_family(family)
        self.assertEqual([t.task_id for t in tasks], ["toy-t0", "toy-t1"])
        for task in tasks:
            self.assertIn(task.prompt_template_ref, prompts)
            self.assertIn(task.relevance_config_ref, relevance)
            self.assertIn(task.format_rules_ref, format_rules)

    def test_vocabulary_limit(self):
        with self.assertRaises(ValueError):
            ToyFamilySpec(num_slots=10, values_per_slot=10)


class UtilityTests(unittest.TestCase):
    family = materialize_family(ToyFamilySpec(num_tasks=4, num_slots=3, values_per_slot=4, seed=5))

    def test_uniform_policy_matches_the_analytic_value(self):
        draws = 2000
        expected = expected_toy_utility(PolicyState.uniform_toy(), 0, self.family)
        self.assertAlmostEqual(expected, 0.25, delta=1e-12)
        got = toy_utility(PolicyState.uniform_toy(), 0, self.family, draws, np.random.default_rng(0))
        self.assertLessEqual(abs(got - expected), 3 * utility_stderr(draws))

    def test_external_policies_cannot_be_evaluated(self):
        with self.assertRaises(KindMismatch):
            toy_utility(PolicyState.external("chat"), 0, self.family, 10, np.random.default_rng(0))

    def test_bad_arguments(self):
        with self.assertRaises(PreconditionError):
            toy_utility(PolicyState.uniform_toy(), 0, self.family, 0, np.random.default_rng(0))
        with self.assertRaises(PreconditionError):
            expected_toy_utility(PolicyState.uniform_toy(), 4, self.family)


class TransferTests(unittest.IsolatedAsyncioTestCase):
    cfg = OptimizerConfig(max_rl_steps=40, group_size=4, learning_rate=0.5, lam=1.0)

    async def mean_delta(self, overlap: float, draws: int = 200) -> float:
        deltas = []
        for seed in range(20):
            family = materialize_family(ToyFamilySpec(num_tasks=3, num_slots=2, values_per_slot=3, overlap=overlap, seed=seed))
            checkpoints = await train_through_family(family, seed, self.cfg)
            deltas.extend(t.delta for t in eval_forward_transfer(checkpoints, family, draws, seed).transitions)
        return float(np.mean(deltas))

    async def test_forward_transfer_grows_with_overlap(self):
        high = await self.mean_delta(0.8)
        low = await self.mean_delta(0.2)
        none = await self.mean_delta(0.0)
        self.assertGreater(high, 0.2)
        self.assertGreater(high, low)
        self.assertGreater(high, none)

    async def test_unrelated_tasks_transfer_nothing(self):
        draws = 200
        band = 3 * np.sqrt(2) * utility_stderr(draws)
        self.assertLessEqual(abs(await self.mean_delta(0.0, draws)), band)

    async def test_diagonal_dominates_the_transfer_matrix(self):
        diagonal, off_diagonal = [], []
        sampled_diagonal, sampled_off_diagonal = [], []
        for seed in range(20):
            family = materialize_family(ToyFamilySpec(num_tasks=4, num_slots=3, values_per_slot=4, overlap=0.5, seed=seed))
            checkpoints = await train_through_family(family, seed, self.cfg)
            matrix = build_transfer_matrix(checkpoints, family, 2000, seed)
            for i, (checkpoint_id, policy) in enumerate(checkpoints):
                for j, task_id in enumerate(family.task_ids):
                    exact = expected_toy_utility(policy, j, family)
                    (diagonal if i == j else off_diagonal).append(exact)
                    (sampled_diagonal if i == j else sampled_off_diagonal).append(matrix.cell(checkpoint_id, task_id))
        self.assertEqual((len(diagonal), len(off_diagonal)), (80, 240))
        self.assertGreaterEqual(np.mean(diagonal), np.mean(off_diagonal))
        self.assertGreaterEqual(np.mean(sampled_diagonal) + 3 * utility_stderr(2000), np.mean(sampled_off_diagonal))

    async def test_forward_transfer_has_one_row_per_transition(self):
        family = materialize_family(ToyFamilySpec(num_tasks=3, num_slots=2, values_per_slot=3, seed=1))
        report = eval_forward_transfer(peaked_checkpoints(family, 3), family, 50, 0)
        self.assertEqual([(t.from_task, t.to_task) for t in report.transitions], [("toy-t0", "toy-t1"), ("toy-t1", "toy-t2")])
        for t in report.transitions:
            self.assertAlmostEqual(t.delta, t.utility - t.baseline, delta=1e-12)


class TransferMatrixTests(unittest.TestCase):
    family = materialize_family(ToyFamilySpec(num_tasks=4, num_slots=3, values_per_slot=4, overlap=0.3, seed=2))

    def test_every_checkpoint_meets_every_task(self):
        checkpoints = peaked_checkpoints(self.family, 4)
        before = [(cid, policy.model_dump()) for cid, policy in checkpoints]
        matrix = build_transfer_matrix(checkpoints, self.family, 100, 0)
        self.assertEqual(len(matrix.values), 4)
        self.assertEqual(sum(len(row) for row in matrix.values), 16)
        self.assertEqual([(cid, policy.model_dump()) for cid, policy in checkpoints], before)
        for i in range(4):
            self.assertGreater(matrix.cell(f"ckpt-{i}", f"toy-t{i}"), 0.5)

    def test_untrained_row_matches_the_analytic_value(self):
        draws = 800
        matrix = build_transfer_matrix(peaked_checkpoints(self.family, 2), self.family, draws, 4, include_untrained=True)
        self.assertEqual(matrix.row_checkpoints, [UNTRAINED_ROW, "ckpt-0", "ckpt-1"])
        for j, task_id in enumerate(matrix.col_tasks):
            expected = expected_toy_utility(PolicyState.uniform_toy(), j, self.family)
            self.assertLessEqual(abs(matrix.cell(UNTRAINED_ROW, task_id) - expected), 3 * utility_stderr(draws))

    def test_same_seed_same_matrix(self):
        checkpoints = peaked_checkpoints(self.family, 3)
        self.assertEqual(build_transfer_matrix(checkpoints, self.family, 60, 9), build_transfer_matrix(checkpoints, self.family, 60, 9))

    def test_matrix_csv_has_one_row_per_cell(self):
        matrix = build_transfer_matrix(peaked_checkpoints(self.family, 4), self.family, 20, 0)
        with tempfile.TemporaryDirectory() as tmp:
            csv_path, json_path = write_transfer_matrix(matrix, tmp, "matrix")
            with open(csv_path, encoding="utf-8") as f:
                rows = list(csv.reader(f))
            self.assertTrue(json_path.exists())
        self.assertEqual(rows[0], ["checkpoint_id", "task_id", "utility"])
        self.assertEqual(len(rows), 17)

    def test_misaligned_checkpoints(self):
        checkpoints = peaked_checkpoints(self.family, 3)
        with self.assertRaises(AlignmentError):
            check_alignment([checkpoints[1]], self.family)
        swapped = [checkpoints[0], (checkpoints[2][0], checkpoints[2][1].model_copy(update={"trained_through": ["toy-t0", "toy-t2"]}))]
        with self.assertRaises(AlignmentError):
            build_transfer_matrix(swapped, self.family, 10, 0)
        too_many = peaked_checkpoints(self.family, 4) + [("extra", PolicyState.uniform_toy())]
        with self.assertRaises(AlignmentError):
            eval_forward_transfer(too_many, self.family, 10, 0)


def stream_of(*task_ids: str) -> TaskStream:
    return TaskStream(stream_id="s", tasks=[TaskSpec(task_id=t, label_set=["x"], prompt_template_ref="p", format_rules_ref="f", relevance_config_ref="r") for t in task_ids])


class OrderTests(unittest.TestCase):
    def test_permute_stream(self):
        permuted = permute_stream(stream_of("a", "b", "c"), [2, 0, 1], "rot")
        self.assertEqual(permuted.task_ids, ["c", "a", "b"])
        self.assertEqual(permuted.stream_id, "s~rot")
        self.assertEqual(base_stream_id(permuted.stream_id), "s")
        self.assertEqual(permute_stream(stream_of("a", "b"), [1, 0]).stream_id, "s~p1-0")

    def test_invalid_permutations(self):
        stream = stream_of("a", "b", "c")
        for order in ([0, 1], [0, 0, 1], [0, 1, 3]):
            with self.assertRaises(InvalidPermutation):
                permute_stream(stream, order)
        with self.assertRaises(InvalidPermutation):
            order_indices(stream, ["a", "b", "z"])

    def test_order_indices_and_inverse(self):
        stream = stream_of("amazon", "mnli", "yahoo", "yelp")
        order = order_indices(stream, ["mnli", "yahoo", "amazon", "yelp"])
        self.assertEqual(order, [1, 2, 0, 3])
        self.assertEqual([order[i] for i in inverse_permutation(order)], [0, 1, 2, 3])

    def test_stage_of(self):
        self.assertEqual([stage_of(i, 4) for i in range(4)], ["early", "intermediate", "intermediate", "late"])
        self.assertEqual([stage_of(i, 2) for i in range(2)], ["early", "late"])
        self.assertEqual(stage_of(0, 1), "early")

    def test_stage_means(self):
        rows = [TaskReportRow(task_id=t, mean_rs=0.5, mean_ds=0.5, mean_r_total=r, steps=1) for t, r in (("a", 0.2), ("b", 0.4), ("c", 0.6), ("d", 0.8))]
        tagged = order_rows("o1", StreamReport(stream_id="s", seed=0, config_digest="d", rows=rows), {"a": 0.9})
        self.assertEqual([r.stage for r in tagged], ["early", "intermediate", "intermediate", "late"])
        self.assertEqual(tagged[0].utility, 0.9)
        self.assertIsNone(tagged[1].utility)
        means = stage_means(tagged)["o1"]
        self.assertAlmostEqual(means["intermediate"], 0.5)
        self.assertEqual((means["early"], means["late"]), (0.2, 0.8))


class DiversityTests(unittest.IsolatedAsyncioTestCase):
    def test_distinct_ngram_ratio(self):
        self.assertAlmostEqual(distinct_ngram_ratio(["a b a b"]), 2 / 3)
        self.assertEqual(distinct_ngram_ratio(["one", "one"]), 0.5)
        self.assertEqual(distinct_ngram_ratio([]), 0.0)

    def test_pairwise_similarities(self):
        np.testing.assert_allclose(pairwise_similarities([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]), [0.0, 1.0, 0.0])

    async def test_report_uses_existing_embeddings(self):
        samples = [SynthSample.create(t, "t", "p", "x", embedding=e) for t, e in (("one two", [1.0, 0.0]), ("three four", [0.0, 1.0]), ("five six", [0.6, 0.8]))]
        report = await diversity_report(samples, None, None)
        self.assertEqual(report.count, 3)
        self.assertAlmostEqual(report.mean_similarity, (0.0 + 0.6 + 0.8) / 3)
        self.assertEqual(report.distinct_ngram_ratio, 1.0)

    async def test_single_sample_has_no_similarity_stats(self):
        report = await diversity_report([SynthSample.create("alone", "t", "p", "x", embedding=[1.0])], None, None)
        self.assertIsNone(report.mean_similarity)
        with self.assertRaises(PreconditionError):
            await diversity_report([], None, None)


if __name__ == "__main__":
    unittest.main()
