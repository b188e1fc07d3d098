class TasksmithError(Exception):
    pass


# Config


class ConfigError(TasksmithError):
    pass


class ParseError(ConfigError):
    def __init__(self, path: str, message: str, line: int | None = None, column: int | None = None):
        self.path = path
        self.line = line
        self.column = column
        where = f"{path}:{line}:{column}" if line is not None else path
        super().__init__(f"{where}: {message}")


class UnresolvedReference(ConfigError):
    def __init__(self, kind: str, ref: str, where: str = ""):
        self.kind = kind
        self.ref = ref
        suffix = f" (referenced from {where})" if where else ""
        super().__init__(f"Unresolved {kind} reference '{ref}'{suffix}.")


class ConfigValidationError(ConfigError):
    def __init__(self, issues: list):
        self.issues = issues
        lines = "; ".join(str(issue) for issue in issues)
        super().__init__(f"Invalid run config: {lines}")


# Prompt engine


class PromptEngineError(TasksmithError):
    pass


class ExhaustedAttempts(PromptEngineError):
    def __init__(self, attempts: int):
        self.attempts = attempts
        super().__init__(f"No slot assignment satisfied every constraint within {attempts} attempts; the slot domains are over-constrained.")


class SlotMismatch(PromptEngineError):
    def __init__(self, expected: list[str], got: list[str]):
        self.expected = expected
        self.got = got
        super().__init__(f"Assignment slots {sorted(got)} do not match template slots {sorted(expected)}.")


class PreconditionError(TasksmithError, ValueError):
    pass


# Scoring


class ScoringError(TasksmithError):
    pass


class ZeroVector(ScoringError):
    pass


class DimensionMismatch(ScoringError):
    def __init__(self, left: int, right: int):
        super().__init__(f"Dimension mismatch: {left} != {right}")


class BatchTooSmall(ScoringError):
    def __init__(self, size: int, minimum: int):
        self.size = size
        self.minimum = minimum
        super().__init__(f"Mini-batch of {size} is smaller than the configured minimum {minimum}.")


class UnknownLabel(ScoringError):
    def __init__(self, label: str, known: list[str]):
        self.label = label
        super().__init__(f"Label '{label}' is not one of {known}.")


# Optimizer


class OptimizerError(TasksmithError):
    pass


class GroupSizeMismatch(OptimizerError):
    def __init__(self, got: int, expected: int):
        super().__init__(f"Group has {got} rewards, expected {expected}.")


class KindMismatch(OptimizerError):
    def __init__(self, operation: str, kind: str):
        super().__init__(f"'{operation}' is not supported for policies of kind '{kind}'.")


class EmptyPool(OptimizerError):
    pass


class TrainingAborted(OptimizerError):
    """Raised mid-task; carries the last consistent state so the caller can checkpoint it."""

    def __init__(self, task_id: str, step: int, policy, trace, candidate_pool):
        self.task_id = task_id
        self.step = step
        self.policy = policy
        self.trace = trace
        self.candidate_pool = candidate_pool
        super().__init__(f"Training on task '{task_id}' aborted at step {step}.")


# Orchestrator


class OrchestratorError(TasksmithError):
    pass


class MissingEmbedding(OrchestratorError):
    def __init__(self, sample_id: str):
        super().__init__(f"Sample {sample_id} has no embedding and cannot enter the candidate pool.")


class VersionMismatch(OrchestratorError):
    def __init__(self, found: str, expected: str):
        super().__init__(f"Checkpoint format version '{found}' is not supported (expected '{expected}').")


class CorruptCheckpoint(OrchestratorError):
    pass


class ConfigDigestMismatch(OrchestratorError):
    def __init__(self, found: str, expected: str):
        super().__init__(f"Checkpoint was written under config digest {found[:12]}…, current config is {expected[:12]}…; pass the override flag to resume anyway.")


class TaskFailedError(OrchestratorError):
    def __init__(self, task_id: str, cause: BaseException):
        self.task_id = task_id
        self.cause = cause
        super().__init__(f"Task '{task_id}' failed: {cause}")


# Evaluation


class EvaluationError(TasksmithError):
    pass


class AlignmentError(EvaluationError):
    pass


class InvalidPermutation(EvaluationError):
    pass
