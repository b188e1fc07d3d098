import asyncio
import logging

from tasksmith.backends.gateway import BackendGateway
from tasksmith.exceptions import BatchTooSmall
from tasksmith.schemas.sample import RewardBreakdown, SynthSample
from tasksmith.schemas.scoring import TaskScoring
from tasksmith.services.scoring.sample_scores import score_sample
from tasksmith.services.scoring.set_scores import ensure_embeddings, score_set


class ScoringService:
    """Scores one task's samples against the dual-level reward."""

    def __init__(self, gateway: BackendGateway, scoring: TaskScoring):
        self.gateway = gateway
        self.scoring = scoring
        self.logger = logging.getLogger(__name__)

    async def embed(self, samples: list[SynthSample]) -> list[SynthSample]:
        return await ensure_embeddings(samples, self.gateway, self.scoring.embedder_backend)

    async def sample_rewards(self, samples: list[SynthSample]) -> list[RewardBreakdown]:
        return list(await asyncio.gather(*(score_sample(s, self.scoring, self.gateway) for s in samples)))

    async def set_reward(self, target: SynthSample, batch: list[SynthSample]) -> float:
        try:
            return await score_set(target, batch, self.gateway, self.scoring.embedder_backend, self.scoring.diversity)
        except BatchTooSmall as e:
            self.logger.warning(f"⚠️ {e} Using ds = 1.0 for sample {target.sample_id[:12]}.")
            return 1.0

    async def score_batch(self, samples: list[SynthSample], neighbor_sets: list[list[SynthSample]] | None = None) -> list[SynthSample]:
        """Embed, score, and attach full reward breakdowns.

        Sample i's set-level score is taken against the other batch members
        plus ``neighbor_sets[i]`` (already-embedded candidate-pool samples).
        """
        if not samples:
            return []
        if neighbor_sets is not None and len(neighbor_sets) != len(samples):
            raise ValueError(f"{len(neighbor_sets)} neighbor sets for {len(samples)} samples")
        embedded = await self.embed(samples)
        breakdowns = await self.sample_rewards(embedded)

        scored = []
        for i, (sample, breakdown) in enumerate(zip(embedded, breakdowns, strict=True)):
            mini_batch = embedded + (list(neighbor_sets[i]) if neighbor_sets else [])
            ds = await self.set_reward(sample, mini_batch)
            scored.append(sample.model_copy(update={"rewards": breakdown.with_set_score(ds, self.scoring.lam)}))
        self.logger.debug(f"scored {len(scored)} sample(s)")
        return scored
