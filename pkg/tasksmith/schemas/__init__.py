from .policy import PolicyKind, PolicyStage, PolicyState
from .prompt import BaseTemplate, ConstraintRule, EvolutionConfig, GenerationLogEntry, Lineage, PromptInstance, PromptPool, PromptSetup, SlotAssignment, SlotDomain, SlotValue
from .records import canonical_json, content_hash, read_jsonl, write_csv, write_dict_jsonl, write_json, write_jsonl
from .report import StreamReport, TaskReportRow
from .sample import RewardBreakdown, SynthSample
from .scoring import DiversityConfig, FluencyConfig, FormatRule, FormatRules, RelevanceConfig, SampleScoreWeights, ScoringConfig, StyleRule, TaskScoring
from .task import TaskSpec, TaskStream, ValidationIssue
from .training import EftDataset, EftMix, EftRecord, GroupMember, GroupRollout, OptimizerConfig, RealExample, StepTrace, TrainingTrace

__all__ = [
    "PolicyKind",
    "PolicyStage",
    "PolicyState",
    "BaseTemplate",
    "ConstraintRule",
    "EvolutionConfig",
    "GenerationLogEntry",
    "Lineage",
    "PromptInstance",
    "PromptPool",
    "PromptSetup",
    "SlotAssignment",
    "SlotDomain",
    "SlotValue",
    "RewardBreakdown",
    "SynthSample",
    "TaskSpec",
    "TaskStream",
    "ValidationIssue",
    "DiversityConfig",
    "FluencyConfig",
    "FormatRule",
    "FormatRules",
    "RelevanceConfig",
    "SampleScoreWeights",
    "ScoringConfig",
    "StyleRule",
    "TaskScoring",
    "EftDataset",
    "EftMix",
    "EftRecord",
    "GroupMember",
    "GroupRollout",
    "OptimizerConfig",
    "RealExample",
    "StepTrace",
    "TrainingTrace",
    "canonical_json",
    "content_hash",
    "read_jsonl",
    "write_jsonl",
    "write_dict_jsonl",
    "write_csv",
    "write_json",
    "StreamReport",
    "TaskReportRow",
]
