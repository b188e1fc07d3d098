"""Set-level reward arithmetic: cosine proximity, neighbor weighting, density, distinctiveness."""

import math
from typing import Literal

import numpy as np

from tasksmith.exceptions import DimensionMismatch, PreconditionError, ZeroVector

# smallest positive distinctiveness; exp(-k*D) may underflow for large k
DS_FLOOR = float(np.finfo(np.float64).tiny)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(a.size, b.size)
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


def proximity_weights(sims, temperature: float, weighting: Literal["softmax", "proportional"] = "softmax") -> list[float]:
    """Normalized neighbor weights.

    softmax:      exp(s_j / temperature) / sum_k exp(s_k / temperature), max-subtracted
    proportional: max(s_j, 0) / sum_k max(s_k, 0); uniform when no similarity is positive
    """
    values = np.asarray(sims, dtype=np.float64)
    if values.size == 0:
        raise PreconditionError("proximity_weights needs at least one similarity")
    if weighting == "proportional":
        clipped = np.clip(values, 0.0, None)
        total = float(clipped.sum())
        if total <= 0.0:
            return [1.0 / values.size] * values.size
        return (clipped / total).tolist()
    if temperature <= 0:
        raise PreconditionError("temperature must be positive")
    scaled = values / temperature
    exp = np.exp(scaled - scaled.max())
    return (exp / exp.sum()).tolist()


def local_density(sims, weights) -> float:
    sims = np.asarray(sims, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if sims.shape != weights.shape:
        raise DimensionMismatch(sims.size, weights.size)
    return float(np.dot(weights, sims))


def distinctiveness(density: float, decay: float) -> float:
    """min(1, exp(-decay * density)), kept strictly positive."""
    if decay <= 0:
        raise PreconditionError("decay must be positive")
    return max(DS_FLOOR, min(1.0, math.exp(-decay * density)))


def aggregate_reward(rs: float, ds: float, lam: float) -> float:
    return lam * rs + (1.0 - lam) * ds


def set_distinctiveness(target, neighbors: list, temperature: float, decay: float, weighting: Literal["softmax", "proportional"] = "softmax") -> float:
    sims = [cosine_similarity(target, other) for other in neighbors]
    weights = proximity_weights(sims, temperature, weighting)
    return distinctiveness(local_density(sims, weights), decay)
