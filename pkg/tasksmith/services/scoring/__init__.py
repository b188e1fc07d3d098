from .kernel import aggregate_reward, cosine_similarity, distinctiveness, local_density, proximity_weights, set_distinctiveness
from .sample_scores import score_fluency, score_relevance, score_sample, score_structural
from .scoring_service import ScoringService
from .set_scores import ensure_embeddings, score_set

__all__ = [
    "ScoringService",
    "aggregate_reward",
    "cosine_similarity",
    "distinctiveness",
    "ensure_embeddings",
    "local_density",
    "proximity_weights",
    "score_fluency",
    "score_relevance",
    "score_sample",
    "score_set",
    "score_structural",
    "set_distinctiveness",
]
