import asyncio
import logging
from collections.abc import Awaitable, Callable

import httpx
import numpy as np

from tasksmith.backends.exceptions import BackendError, EmptyText
from tasksmith.backends.providers.base import ProviderAdapter
from tasksmith.backends.providers.registry import ProviderRegistry
from tasksmith.backends.schemas.request import BackendConfig, DecodingParams
from tasksmith.exceptions import PreconditionError, UnknownLabel
from tasksmith.schemas.prompt import PromptInstance

logger = logging.getLogger(__name__)


class BackendGateway:
    """
    Shared handle over every configured backend.

    Each backend gets a semaphore of ``max_concurrency`` in-flight calls and a
    retry loop: retryable failures (timeouts, unreachable hosts, 429 and 5xx)
    are retried ``max_retries`` times with delays of ``retry_backoff_ms * 2**attempt``.

        gateway = BackendGateway(run_config.backends)
        text = await gateway.generate("gen", prompt, DecodingParams(seed=3))
        vectors = await gateway.embed("emb", [text])
    """

    def __init__(
        self,
        configs: list[BackendConfig],
        adapters: dict[str, ProviderAdapter] | None = None,
        transport: httpx.AsyncBaseTransport | None = None,
        sleep: Callable[[float], Awaitable[None]] = asyncio.sleep,
    ):
        self.registry = ProviderRegistry(configs, overrides=adapters, transport=transport)
        self._semaphores = {backend_id: asyncio.Semaphore(cfg.max_concurrency) for backend_id, cfg in self.registry.configs.items()}
        self._sleep = sleep
        self.retry_counts: dict[str, int] = {}

    def config(self, backend_id: str) -> BackendConfig:
        self.registry.get(backend_id)
        return self.registry.configs[backend_id]

    async def _call(self, backend_id: str, operation: str, fn: Callable[[ProviderAdapter], Awaitable]):
        adapter = self.registry.get(backend_id)
        cfg = self.registry.configs[backend_id]
        semaphore = self._semaphores.setdefault(backend_id, asyncio.Semaphore(cfg.max_concurrency))

        attempt = 0
        while True:
            try:
                async with semaphore:
                    return await fn(adapter)
            except BackendError as e:
                if not e.retryable or attempt >= cfg.max_retries:
                    if attempt:
                        logger.error(f"❌ [{backend_id}] {operation} failed after {attempt + 1} attempts: {e}")
                    raise
                delay = cfg.retry_backoff_ms * (2**attempt) / 1000.0
                attempt += 1
                self.retry_counts[backend_id] = self.retry_counts.get(backend_id, 0) + 1
                logger.warning(f"🔁 [{backend_id}] {operation} {e.reason} ({e.status_code or '-'}); retry {attempt}/{cfg.max_retries} in {delay:.3f}s")
                await self._sleep(delay)

    async def generate(self, backend_id: str, prompt: PromptInstance | str, decoding: DecodingParams, instruction: str | None = None) -> str:
        text = prompt.text if isinstance(prompt, PromptInstance) else prompt
        result = await self._call(backend_id, "generate", lambda adapter: adapter.generate(text, decoding, instruction))
        if not result:
            raise BackendError(backend_id, "malformed_response", "empty completion")
        return result

    async def embed(self, backend_id: str, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise PreconditionError("embed needs at least one text")
        if any(not t.strip() for t in texts):
            raise EmptyText("cannot embed empty text")
        vectors = await self._call(backend_id, "embed", lambda adapter: adapter.embed(list(texts)))

        matrix = np.asarray(vectors, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(texts):
            raise BackendError(backend_id, "malformed_response", "embeddings are ragged or miscounted")
        norms = np.linalg.norm(matrix, axis=1)
        if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
            raise BackendError(backend_id, "malformed_response", "zero or non-finite embedding vector")
        return (matrix / norms[:, None]).tolist()

    async def embed_one(self, backend_id: str, text: str) -> list[float]:
        return (await self.embed(backend_id, [text]))[0]

    async def label_distribution(self, backend_id: str, text: str, label_set: list[str], keywords: dict[str, list[str]] | None = None) -> dict[str, float]:
        return await self._call(backend_id, "label_probability", lambda adapter: adapter.label_distribution(text, list(label_set), keywords))

    async def label_probability(self, backend_id: str, text: str, label: str, label_set: list[str], keywords: dict[str, list[str]] | None = None) -> float:
        if label not in label_set:
            raise UnknownLabel(label, list(label_set))
        distribution = await self.label_distribution(backend_id, text, label_set, keywords)
        return min(1.0, max(0.0, distribution.get(label, 0.0)))

    async def avg_token_loglik(self, backend_id: str, text: str) -> float:
        if not text or not text.strip():
            raise PreconditionError("avg_token_loglik needs non-empty text")
        value = await self._call(backend_id, "avg_token_loglik", lambda adapter: adapter.avg_token_loglik(text))
        return min(0.0, float(value))

    def list_backends(self) -> list[str]:
        return list(self.registry.keys())
