import logging

from tasksmith.backends.gateway import BackendGateway
from tasksmith.exceptions import BatchTooSmall
from tasksmith.schemas.sample import SynthSample
from tasksmith.schemas.scoring import DiversityConfig
from tasksmith.services.scoring.kernel import set_distinctiveness

logger = logging.getLogger(__name__)


async def ensure_embeddings(samples: list[SynthSample], gateway: BackendGateway, embedder_backend: str) -> list[SynthSample]:
    """Samples with embeddings filled in. Missing ones are embedded in one call, ordered by sample_id."""
    missing = sorted({s.sample_id: s.text for s in samples if s.embedding is None}.items())
    if not missing:
        return list(samples)
    vectors = await gateway.embed(embedder_backend, [text for _, text in missing])
    by_id = {sample_id: vector for (sample_id, _), vector in zip(missing, vectors, strict=True)}
    return [s if s.embedding is not None else s.model_copy(update={"embedding": by_id[s.sample_id]}) for s in samples]


async def score_set(target: SynthSample, batch: list[SynthSample], gateway: BackendGateway | None, embedder_backend: str | None, cfg: DiversityConfig) -> float:
    """Distinctiveness of ``target`` within ``batch``.

    The target itself (matched by identity) is left out of its neighbor set.
    Cached embeddings are reused; the rest go through the embedder.
    """
    if len(batch) < cfg.min_batch:
        raise BatchTooSmall(len(batch), cfg.min_batch)
    neighbors = [s for s in batch if s is not target]
    if not neighbors:
        raise BatchTooSmall(len(neighbors), 1)

    everyone = [target, *neighbors]
    if any(s.embedding is None for s in everyone):
        everyone = await ensure_embeddings(everyone, gateway, embedder_backend)
    target_vec, *neighbor_vecs = [s.embedding for s in everyone]
    return set_distinctiveness(target_vec, neighbor_vecs, cfg.temperature, cfg.decay, cfg.weighting)
