import hashlib
import logging
import os
import re
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from tasksmith.backends.schemas.request import BackendConfig, DecodingParams, MockGeneratorSpec, MockTransform
from tasksmith.exceptions import ConfigValidationError, ParseError, UnresolvedReference
from tasksmith.schemas.policy import PolicyKind, PolicyState
from tasksmith.schemas.prompt import PromptSetup
from tasksmith.schemas.records import canonical_json, unknown_keys
from tasksmith.schemas.scoring import FormatRules, RelevanceConfig, SampleScoreWeights, ScoringConfig, TaskScoring
from tasksmith.schemas.task import TaskSpec, TaskStream, ValidationIssue
from tasksmith.schemas.training import OptimizerConfig, RealExample
from tasksmith.services.evaluation.toy_family import ToyFamilySpec, expand_family, materialize_family

logger = logging.getLogger(__name__)

Ablation = Literal["no_evolution", "no_struct", "no_fluency", "no_relevance", "no_set_reward", "no_grpo"]

_GAMMA_FOR_ABLATION = {"no_struct": "gamma_struct", "no_fluency": "gamma_fluent", "no_relevance": "gamma_rel"}

_PATH_PART_RE = re.compile(r"([^.\[\]]+)|\[(\d+)\]")


def default_mock_backends() -> list[BackendConfig]:
    return [
        BackendConfig(
            backend_id="mock-gen",
            kind="mock_generator",
            mock=MockGeneratorSpec(
                mode="echo_transform",
                transform=MockTransform(suffixes=[" Keep it short.", " Add one concrete example.", " Mention a single detail.", " Use a friendly tone."]),
            ),
        ),
        BackendConfig(backend_id="mock-embed", kind="mock_embedder"),
        BackendConfig(backend_id="mock-classify", kind="mock_classifier"),
        BackendConfig(backend_id="mock-likelihood", kind="mock_likelihood"),
    ]


class StreamSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    stream_id: str = "stream"
    tasks: list[TaskSpec] = Field(default_factory=list)
    toy_family: ToyFamilySpec | None = None
    orders: dict[str, list[str]] = Field(default_factory=dict)


class RolesConfig(BaseModel):
    """Which backend plays which part. ``evolver`` falls back to ``generator``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    generator: str = "mock-gen"
    evolver: str | None = None
    embedder: str = "mock-embed"
    classifier: str = "mock-classify"
    likelihood: str = "mock-likelihood"

    @property
    def evolution_backend(self) -> str:
        return self.evolver or self.generator


class OrchestratorSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    output_dir: str = "runs"
    pool_capacity: int = Field(default=2048, ge=1)
    eviction: Literal["fifo", "lowest_r_total"] = "fifo"
    checkpoint_every_steps: int = Field(default=0, ge=0)
    reset_pool_per_task: bool = False
    record_wall_time: bool = False


class EvalSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    draws: int = Field(default=500, ge=1)
    seeds: list[int] = Field(default_factory=lambda: [0])
    permutations: list[str] = Field(default_factory=list)
    include_untrained_row: bool = True


class PolicySection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: PolicyKind = PolicyKind.TOY_DISCRETE
    endpoint_ref: str | None = None

    @model_validator(mode="after")
    def external_needs_endpoint(self):
        if self.kind == PolicyKind.EXTERNAL_ENDPOINT and not self.endpoint_ref:
            raise ValueError("external_endpoint policies need endpoint_ref")
        return self

    def initial_state(self) -> PolicyState:
        if self.kind == PolicyKind.EXTERNAL_ENDPOINT:
            return PolicyState.external(self.endpoint_ref)
        return PolicyState.uniform_toy()


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    stream: StreamSection = Field(default_factory=StreamSection)
    prompts: dict[str, PromptSetup] = Field(default_factory=dict)
    format_rules: dict[str, FormatRules] = Field(default_factory=dict)
    relevance: dict[str, RelevanceConfig] = Field(default_factory=dict)
    backends: list[BackendConfig] = Field(default_factory=list)
    roles: RolesConfig = Field(default_factory=RolesConfig)
    decoding: DecodingParams = Field(default_factory=DecodingParams)
    scoring: ScoringConfig = Field(default_factory=ScoringConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    orchestrator: OrchestratorSection = Field(default_factory=OrchestratorSection)
    eval: EvalSection = Field(default_factory=EvalSection)
    policy: PolicySection = Field(default_factory=PolicySection)
    real_examples: dict[str, list[RealExample]] = Field(default_factory=dict)
    ablations: list[Ablation] = Field(default_factory=list)
    seed: int = Field(default=0, ge=0)
    strict_parsing: bool = False

    def task_stream(self) -> TaskStream:
        return TaskStream(stream_id=self.stream.stream_id, tasks=self.stream.tasks, seed=self.seed)

    def task_scoring(self, task: TaskSpec) -> TaskScoring:
        relevance = self.relevance[task.relevance_config_ref]
        return TaskScoring(
            weights=self.scoring.weights,
            format_rules=self.format_rules[task.format_rules_ref],
            fluency=self.scoring.fluency,
            relevance=relevance,
            diversity=self.scoring.diversity,
            lam=self.optimizer.lam,
            likelihood_backend=self.roles.likelihood,
            classifier_backend=relevance.classifier_ref or self.roles.classifier,
            embedder_backend=self.roles.embedder,
        )

    def digest(self) -> str:
        """sha256 of the canonical normalized config; output locations do not count."""
        data = self.model_dump(mode="json")
        data["orchestrator"].pop("output_dir", None)
        return hashlib.sha256(canonical_json(data).encode()).hexdigest()


def validate_stream(stream: TaskStream, registry: RunConfig) -> list[ValidationIssue]:
    """Every broken stream invariant, with a path to the offending field. Empty when the stream is sound."""
    issues: list[ValidationIssue] = []
    if not stream.tasks:
        issues.append(ValidationIssue(path="tasks", message="tasks non-empty: the stream has no tasks"))

    seen: set[str] = set()
    for i, task in enumerate(stream.tasks):
        if task.task_id in seen:
            issues.append(ValidationIssue(path=f"tasks[{i}].task_id", message=f"duplicate task_id '{task.task_id}'"))
        seen.add(task.task_id)
        if not task.label_set:
            issues.append(ValidationIssue(path=f"tasks[{i}].label_set", message="label_set is empty"))

        for field, kind, table in (
            ("prompt_template_ref", "prompt template", registry.prompts),
            ("format_rules_ref", "format rules", registry.format_rules),
            ("relevance_config_ref", "relevance config", registry.relevance),
        ):
            ref = getattr(task, field)
            if ref not in table:
                issues.append(ValidationIssue(path=f"tasks[{i}].{field}", message=f"unresolved {kind} '{ref}'", kind="unresolved", ref_kind=kind, ref=ref))

        setup = registry.prompts.get(task.prompt_template_ref)
        if task.label_slot and setup is not None and task.label_slot not in setup.template.slot_names:
            issues.append(ValidationIssue(path=f"tasks[{i}].label_slot", message=f"label_slot '{task.label_slot}' is not a slot of template '{setup.template.template_id}'"))
        relevance = registry.relevance.get(task.relevance_config_ref)
        if relevance is not None:
            stray = sorted(set(relevance.keyword_sets) - set(task.label_set))
            if stray:
                issues.append(ValidationIssue(path=f"relevance.{task.relevance_config_ref}.keyword_sets", message=f"keyword sets for labels {stray} outside the label_set of task '{task.task_id}'"))
    return issues


def validate_config(config: RunConfig) -> list[ValidationIssue]:
    """Stream issues (paths prefixed with ``stream.``) plus cross-references between config sections."""
    issues = [issue.model_copy(update={"path": f"stream.{issue.path}"}) for issue in validate_stream(config.task_stream(), config)]

    backend_ids = [b.backend_id for b in config.backends]
    for i, backend_id in enumerate(backend_ids):
        if backend_id in backend_ids[:i]:
            issues.append(ValidationIssue(path=f"backends[{i}].backend_id", message=f"duplicate backend_id '{backend_id}'"))
    roles = config.roles.model_dump()
    for role, backend_id in roles.items():
        if backend_id is not None and backend_id not in backend_ids:
            issues.append(ValidationIssue(path=f"roles.{role}", message=f"unresolved backend '{backend_id}'", kind="unresolved", ref_kind="backend", ref=backend_id))
    for ref, relevance in config.relevance.items():
        if relevance.classifier_ref and relevance.classifier_ref not in backend_ids:
            issues.append(ValidationIssue(path=f"relevance.{ref}.classifier_ref", message=f"unresolved backend '{relevance.classifier_ref}'", kind="unresolved", ref_kind="backend", ref=relevance.classifier_ref))

    task_ids = config.task_stream().task_ids
    for name, order in config.stream.orders.items():
        if sorted(order) != sorted(task_ids):
            issues.append(ValidationIssue(path=f"stream.orders.{name}", message=f"order {order} is not a permutation of the stream tasks {task_ids}"))
    for i, name in enumerate(config.eval.permutations):
        if name not in config.stream.orders:
            issues.append(ValidationIssue(path=f"eval.permutations[{i}]", message=f"unresolved order '{name}'", kind="unresolved", ref_kind="order", ref=name))
    for task_id in config.real_examples:
        if task_id not in task_ids:
            issues.append(ValidationIssue(path=f"real_examples.{task_id}", message=f"real examples for unknown task '{task_id}'", kind="unresolved", ref_kind="task", ref=task_id))
    if config.optimizer.eft_mix.real > 0:
        for task_id in task_ids:
            if not config.real_examples.get(task_id):
                issues.append(ValidationIssue(path="optimizer.eft_mix.real", message=f"the EFT mix asks for real records but task '{task_id}' has none"))
    return issues


def _expand_toy_family(config: RunConfig) -> RunConfig:
    if config.stream.toy_family is None or config.stream.tasks:
        return config
    family = materialize_family(config.stream.toy_family)
    tasks, prompts, relevance, format_rules = expand_family(family)
    logger.debug(f"Expanded toy family '{family.spec.family_id}' into {len(tasks)} task(s)")
    return config.model_copy(
        update={
            "stream": config.stream.model_copy(update={"tasks": tasks}),
            "prompts": {**prompts, **config.prompts},
            "relevance": {**relevance, **config.relevance},
            "format_rules": {**format_rules, **config.format_rules},
        }
    )


def _drop_gamma(weights: SampleScoreWeights, field: str) -> SampleScoreWeights:
    values = weights.model_dump()
    if values[field] == 0.0:
        return weights
    values[field] = 0.0
    remaining = sum(values.values())
    if remaining <= 0.0:
        raise ConfigValidationError([ValidationIssue(path="ablations", message="ablations remove every sample-level sub-score")])
    return SampleScoreWeights(**{k: v / remaining for k, v in values.items()})


def apply_ablations(config: RunConfig) -> RunConfig:
    """Materialize component ablations into the config. Applying them twice changes nothing."""
    if not config.ablations:
        return config
    update: dict = {}
    ablations = set(config.ablations)

    if "no_evolution" in ablations:
        update["prompts"] = {ref: setup.model_copy(update={"evolution": setup.evolution.model_copy(update={"depth_rounds": 0, "breadth_fanout": 0})}) for ref, setup in config.prompts.items()}

    weights = config.scoring.weights
    for ablation, field in _GAMMA_FOR_ABLATION.items():
        if ablation in ablations:
            weights = _drop_gamma(weights, field)
    if weights is not config.scoring.weights:
        update["scoring"] = config.scoring.model_copy(update={"weights": weights})

    optimizer_update = {}
    if "no_set_reward" in ablations:
        optimizer_update["lam"] = 1.0
    if "no_grpo" in ablations:
        optimizer_update["apply_updates"] = False
    if optimizer_update:
        update["optimizer"] = config.optimizer.model_copy(update=optimizer_update)

    update["ablations"] = sorted(ablations)
    return config.model_copy(update=update)


def normalize_config(config: RunConfig) -> RunConfig:
    """Expand toy families, fill in mock backends, apply ablations and check every cross-reference."""
    config = _expand_toy_family(config)
    if not config.backends:
        config = config.model_copy(update={"backends": default_mock_backends()})
    config = apply_ablations(config)

    issues = validate_config(config)
    unresolved = [issue for issue in issues if issue.kind == "unresolved"]
    if unresolved:
        first = unresolved[0]
        raise UnresolvedReference(first.ref_kind, first.ref, first.path)
    if issues:
        raise ConfigValidationError(issues)

    # revalidate so every nested default is an explicit, checked value
    return RunConfig.model_validate(config.model_dump(mode="json"))


def _split_path(path: str) -> list[str | int]:
    return [int(index) if index else key for key, index in _PATH_PART_RE.findall(path)]


def locate(document: str, path: list[str | int]) -> tuple[int, int] | None:
    """1-based (line, column) of the YAML node at ``path``, or of its closest existing ancestor."""
    try:
        node = yaml.compose(document)
    except yaml.YAMLError:
        return None
    if node is None:
        return None
    for depth, part in enumerate(path):
        child = None
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                if key_node.value == str(part):
                    child = key_node if depth == len(path) - 1 else value_node
                    break
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            child = node.value[part]
        if child is None:
            break
        node = child
    return node.start_mark.line + 1, node.start_mark.column + 1


def _located(document: str, path: list[str | int], message: str) -> ValidationIssue:
    where = locate(document, path)
    dotted = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in path).lstrip(".")
    return ValidationIssue(path=dotted, message=message, line=where[0] if where else None, column=where[1] if where else None)


def parse_config(path: str, seed: int | None = None, strict: bool | None = None) -> RunConfig:
    """Load, validate and normalize a run config file.

    ``seed`` and ``strict`` are the only command-line overrides; they are applied
    before normalization so the digest reflects them.
    """
    if not os.path.exists(path):
        raise ParseError(path, "config file not found")
    with open(path, encoding="utf-8") as f:
        document = f.read()

    try:
        data = yaml.safe_load(document)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        problem = getattr(e, "problem", None) or str(e)
        raise ParseError(path, problem, line=mark.line + 1 if mark else None, column=mark.column + 1 if mark else None) from e
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ParseError(path, "top level of a run config must be a mapping", line=1, column=1)

    extra = unknown_keys(RunConfig, data)
    if extra:
        raise ConfigValidationError([_located(document, _split_path(key), "unknown key") for key in extra])

    if seed is not None:
        data["seed"] = seed
    if strict is not None:
        data["strict_parsing"] = strict

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigValidationError([_located(document, list(err["loc"]), err["msg"]) for err in e.errors()]) from e

    config = normalize_config(config)
    logger.debug(f"Parsed {path}: {len(config.stream.tasks)} task(s), digest {config.digest()[:12]}")
    return config


class ConfigService:
    def __init__(self, config_path: str = "config/toy_run.yaml"):
        self.config_path = config_path
        self.config: RunConfig | None = None

    def load(self, seed: int | None = None, strict: bool | None = None) -> RunConfig:
        self.config = parse_config(self.config_path, seed=seed, strict=strict)
        logger.info(f"Config loaded: {self.config_path} (stream={self.config.stream.stream_id}, tasks={len(self.config.stream.tasks)})")
        return self.config

    @property
    def digest(self) -> str:
        return self.config.digest()

    @property
    def output_dir(self) -> str:
        return self.config.orchestrator.output_dir

    def with_output_dir(self, output_dir: str | None):
        if output_dir:
            self.config = self.config.model_copy(update={"orchestrator": self.config.orchestrator.model_copy(update={"output_dir": output_dir})})


_service: ConfigService | None = None


def get_config_service(config_path: str = "config/toy_run.yaml") -> ConfigService:
    """Get singleton."""
    global _service
    if _service is None or _service.config_path != config_path:
        _service = ConfigService(config_path)
    return _service
