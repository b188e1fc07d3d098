import unittest

import numpy as np

from tasksmith.backends.gateway import BackendGateway
from tasksmith.backends.providers.base import ProviderAdapter
from tasksmith.backends.schemas.request import BackendConfig, MockGeneratorSpec, MockTransform
from tasksmith.exceptions import ExhaustedAttempts, PreconditionError, SlotMismatch
from tasksmith.schemas.prompt import PLACEHOLDER_RE, BaseTemplate, ConstraintRule, EvolutionConfig, Lineage, PromptPool, PromptSetup, SlotAssignment, SlotDomain
from tasksmith.schemas.task import TaskSpec
from tasksmith.services.prompt_engine_service import PromptEngineService, instantiate_prompt, sample_assignment

UNRELATED_WORDS = (
    "zebra quantum harbor violin glacier pepper orbit lantern canyon velvet tundra magnet "
    "falcon prism walnut cobalt meadow saddle thunder pixel marble oyster ginger compass"
).split()

TASK = TaskSpec(task_id="notes", label_set=["ok"], prompt_template_ref="notes", format_rules_ref="f", relevance_config_ref="r")


def notes_setup(base_count=4, depth_rounds=0, breadth_fanout=0, constraints=None) -> PromptSetup:
    return PromptSetup(
        template=BaseTemplate(template_id="notes", body="Write a {tone} note about {topic} for {reader}.", slot_names=["tone", "topic", "reader"]),
        domains=[
            SlotDomain(slot_name="tone", values=["warm", "formal", "blunt", "playful"]),
            SlotDomain(slot_name="topic", values=["rent", "holidays", "parking", "recycling"]),
            SlotDomain(slot_name="reader", values=["neighbors", "tenants", "coworkers", "parents"]),
        ],
        constraints=constraints or [],
        evolution=EvolutionConfig(base_count=base_count, depth_rounds=depth_rounds, breadth_fanout=breadth_fanout),
    )


class VariantGenerator(ProviderAdapter):
    """Returns unrelated word salad chosen by the decoding seed, so every variant is far from its parent."""

    def __init__(self, backend_id="gen"):
        super().__init__(BackendConfig(backend_id=backend_id, kind="mock_generator"))

    async def generate(self, prompt, decoding, instruction=None):
        rng = np.random.default_rng(decoding.seed)
        return " ".join(rng.choice(UNRELATED_WORDS, size=6, replace=False))


class ConstantGenerator(ProviderAdapter):
    def __init__(self):
        super().__init__(BackendConfig(backend_id="gen", kind="mock_generator"))

    async def generate(self, prompt, decoding, instruction=None):
        return "Write the same thing every time."


class BasisEmbedder(ProviderAdapter):
    def __init__(self):
        super().__init__(BackendConfig(backend_id="emb", kind="mock_embedder"))

    async def embed(self, texts):
        return [[1.0 if i == j else 0.0 for j in range(len(texts))] for i in range(len(texts))]


def mock_embedder() -> BackendConfig:
    return BackendConfig(backend_id="emb", kind="mock_embedder")


def suffix_generator() -> BackendConfig:
    return BackendConfig(backend_id="gen", kind="mock_generator", mock=MockGeneratorSpec(transform=MockTransform(suffixes=[" Be brief.", " Add a deadline.", " Mention a fee.", " Sign it."])))


def random_constraints(rng: np.random.Generator, domains: list[SlotDomain]) -> list[ConstraintRule]:
    rules = []
    for i in range(int(rng.integers(1, 4))):
        first, second = rng.choice(len(domains), size=2, replace=False)
        a, b = domains[int(first)], domains[int(second)]
        kind = ["forbid_pair", "require_pair", "forbid_value"][int(rng.integers(3))]
        value = a.value_names[int(rng.integers(len(a.values)))]
        if kind == "forbid_value":
            rules.append(ConstraintRule(rule_id=f"r{i}", kind=kind, slot=a.slot_name, value=value))
        else:
            other = b.value_names[int(rng.integers(len(b.values)))]
            rules.append(ConstraintRule(rule_id=f"r{i}", kind=kind, slot=a.slot_name, value=value, other_slot=b.slot_name, other_value=other))
    return rules


class SamplingTests(unittest.TestCase):
    def test_sampled_assignments_never_violate_constraints(self):
        domains = notes_setup().domains
        rng = np.random.default_rng(11)
        for _ in range(10):
            constraints = random_constraints(rng, domains)
            for _ in range(1000):
                entries = sample_assignment(domains, constraints, rng, max_attempts=1000).entries
                self.assertTrue(all(rule.allows(entries) for rule in constraints), f"{entries} violates {constraints}")

    def test_weights_shift_the_draw(self):
        domains = [SlotDomain(slot_name="x", values=[{"value": "rare", "weight": 1.0}, {"value": "common", "weight": 9.0}])]
        rng = np.random.default_rng(0)
        draws = [sample_assignment(domains, [], rng).entries["x"] for _ in range(2000)]
        self.assertGreater(draws.count("common"), 1600)

    def test_over_constrained_domains_exhaust(self):
        domains = [SlotDomain(slot_name="x", values=["a", "b"])]
        rules = [ConstraintRule(rule_id="no-a", kind="forbid_value", slot="x", value="a"), ConstraintRule(rule_id="no-b", kind="forbid_value", slot="x", value="b")]
        with self.assertRaises(ExhaustedAttempts):
            sample_assignment(domains, rules, np.random.default_rng(0), max_attempts=25)

    def test_require_pair(self):
        rule = ConstraintRule(rule_id="r", kind="require_pair", slot="tone", value="formal", other_slot="reader", other_value="coworkers")
        self.assertTrue(rule.allows({"tone": "formal", "reader": "coworkers"}))
        self.assertFalse(rule.allows({"tone": "formal", "reader": "parents"}))
        self.assertTrue(rule.allows({"tone": "warm", "reader": "parents"}))

    def test_instantiate_fills_every_placeholder(self):
        setup = notes_setup()
        prompt = instantiate_prompt(setup.template, SlotAssignment(entries={"tone": "warm", "topic": "rent", "reader": "tenants"}), "notes")
        self.assertEqual(prompt.text, "Write a warm note about rent for tenants.")
        self.assertIsNone(PLACEHOLDER_RE.search(prompt.text))
        self.assertEqual(prompt.lineage, Lineage.BASE)

    def test_instantiate_rejects_mismatched_slots(self):
        with self.assertRaises(SlotMismatch):
            instantiate_prompt(notes_setup().template, SlotAssignment(entries={"tone": "warm"}), "notes")

    def test_action_space_respects_constraints(self):
        setup = notes_setup(constraints=[ConstraintRule(rule_id="r", kind="forbid_value", slot="tone", value="blunt")])
        space = setup.action_space()
        self.assertEqual(len(space), 3 * 4 * 4)
        self.assertEqual(space, sorted(space))
        self.assertFalse(any("tone=blunt" in key for key in space))


class PromptPoolTests(unittest.IsolatedAsyncioTestCase):
    async def test_base_only_pool(self):
        engine = PromptEngineService(BackendGateway([suffix_generator()]), "gen")
        pool = await engine.build_prompt_pool(TASK, notes_setup(base_count=4), np.random.default_rng(1))
        self.assertEqual(len(pool.prompts), 4)
        self.assertTrue(all(p.lineage == Lineage.BASE for p in pool.prompts))
        self.assertEqual([entry.operation for entry in pool.generation_log], ["base"] * 4)

    async def test_breadth_adds_children_with_lineage(self):
        engine = PromptEngineService(BackendGateway([suffix_generator()]), "gen")
        pool = await engine.build_prompt_pool(TASK, notes_setup(base_count=2, breadth_fanout=2), np.random.default_rng(2))
        self.assertEqual(len(pool.prompts), 6)
        children = [p for p in pool.prompts if p.lineage == Lineage.BREADTH_EVOLVED]
        self.assertEqual(len(children), 4)
        base_ids = {p.prompt_id for p in pool.prompts if p.lineage == Lineage.BASE}
        self.assertTrue(all(c.parent_id in base_ids for c in children))
        self.assertEqual(sum(1 for e in pool.generation_log if e.operation == "breadth"), 4)

    async def test_depth_then_breadth(self):
        engine = PromptEngineService(BackendGateway([], adapters={"gen": VariantGenerator()}), "gen")
        pool = await engine.build_prompt_pool(TASK, notes_setup(base_count=2, depth_rounds=1, breadth_fanout=1), np.random.default_rng(3))
        depth = [p for p in pool.prompts if p.lineage == Lineage.DEPTH_EVOLVED]
        self.assertEqual(len(depth), 2)
        self.assertTrue(all(not p.degenerate for p in depth))
        # breadth runs over base and depth prompts alike
        self.assertEqual(sum(1 for p in pool.prompts if p.lineage == Lineage.BREADTH_EVOLVED), 4)

    async def test_echoing_depth_is_flagged_degenerate(self):
        echo = BackendConfig(backend_id="gen", kind="mock_generator")
        engine = PromptEngineService(BackendGateway([echo]), "gen")
        (base,) = (await engine.build_prompt_pool(TASK, notes_setup(base_count=1), np.random.default_rng(4))).prompts
        with self.assertLogs("tasksmith.services.prompt_engine_service", level="WARNING"):
            child = await engine.evolve_depth(base, "harder please")
        self.assertTrue(child.degenerate)
        self.assertEqual(child.parent_id, base.prompt_id)

    async def test_identical_breadth_variants_collapse(self):
        engine = PromptEngineService(BackendGateway([], adapters={"gen": ConstantGenerator()}), "gen")
        (base,) = (await engine.build_prompt_pool(TASK, notes_setup(base_count=1), np.random.default_rng(5))).prompts
        children = await engine.evolve_breadth(base, 3, "elsewhere")
        self.assertEqual(len(children), 1)

    async def test_zero_fanout_is_rejected(self):
        engine = PromptEngineService(BackendGateway([suffix_generator()]), "gen")
        (base,) = (await engine.build_prompt_pool(TASK, notes_setup(base_count=1), np.random.default_rng(6))).prompts
        with self.assertRaises(PreconditionError):
            await engine.evolve_breadth(base, 0, "elsewhere")

    async def test_infeasible_constraints_exhaust(self):
        rules = [ConstraintRule(rule_id=f"no-{v}", kind="forbid_value", slot="tone", value=v) for v in ["warm", "formal", "blunt", "playful"]]
        engine = PromptEngineService(BackendGateway([suffix_generator()]), "gen")
        with self.assertRaises(ExhaustedAttempts):
            await engine.build_prompt_pool(TASK, notes_setup(constraints=rules), np.random.default_rng(7))

    async def test_pool_is_reproducible(self):
        setup = notes_setup(base_count=3, depth_rounds=1, breadth_fanout=2)
        pools = []
        for _ in range(2):
            engine = PromptEngineService(BackendGateway([suffix_generator()]), "gen")
            pools.append((await engine.build_prompt_pool(TASK, setup, np.random.default_rng(42))).model_dump_json())
        self.assertEqual(pools[0], pools[1])

    async def test_breadth_evolution_raises_dispersion(self):
        for seed in range(20):
            engine = PromptEngineService(BackendGateway([mock_embedder()], adapters={"gen": VariantGenerator()}), "gen")
            plain = await engine.build_prompt_pool(TASK, notes_setup(base_count=4), np.random.default_rng(seed))
            evolved = await engine.build_prompt_pool(TASK, notes_setup(base_count=4, breadth_fanout=2), np.random.default_rng(seed))
            self.assertEqual([p.prompt_id for p in evolved.prompts[:4]], [p.prompt_id for p in plain.prompts])
            self.assertGreater(await engine.pool_dispersion(evolved, "emb"), await engine.pool_dispersion(plain, "emb"), f"seed {seed}")


class DispersionTests(unittest.IsolatedAsyncioTestCase):
    async def test_single_prompt_has_zero_dispersion(self):
        engine = PromptEngineService(BackendGateway([suffix_generator(), mock_embedder()]), "gen")
        pool = await engine.build_prompt_pool(TASK, notes_setup(base_count=1), np.random.default_rng(0))
        self.assertEqual(await engine.pool_dispersion(pool, "emb"), 0.0)

    async def test_orthogonal_embeddings_give_full_dispersion(self):
        engine = PromptEngineService(BackendGateway([suffix_generator()], adapters={"emb": BasisEmbedder()}), "gen")
        pool = await engine.build_prompt_pool(TASK, notes_setup(base_count=3), np.random.default_rng(0))
        self.assertAlmostEqual(await engine.pool_dispersion(pool, "emb"), 1.0, delta=1e-12)

    async def test_dispersion_ignores_pool_order(self):
        engine = PromptEngineService(BackendGateway([suffix_generator(), mock_embedder()]), "gen")
        pool = await engine.build_prompt_pool(TASK, notes_setup(base_count=5), np.random.default_rng(8))
        reversed_pool = PromptPool(task_id=pool.task_id, prompts=list(reversed(pool.prompts)))
        self.assertAlmostEqual(await engine.pool_dispersion(pool, "emb"), await engine.pool_dispersion(reversed_pool, "emb"), delta=1e-12)


if __name__ == "__main__":
    unittest.main()
