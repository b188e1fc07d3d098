import httpx

from ..exceptions import BackendNotFoundError
from ..schemas.request import BackendConfig
from .base import ProviderAdapter
from .http_provider import HttpChatAdapter, HttpEmbedAdapter
from .mock_provider import MockClassifierAdapter, MockEmbedderAdapter, MockGeneratorAdapter, MockLikelihoodAdapter

REGISTRY: dict[str, type[ProviderAdapter]] = {
    "http_chat": HttpChatAdapter,
    "http_embed": HttpEmbedAdapter,
    "mock_generator": MockGeneratorAdapter,
    "mock_embedder": MockEmbedderAdapter,
    "mock_classifier": MockClassifierAdapter,
    "mock_likelihood": MockLikelihoodAdapter,
}


class ProviderRegistry:
    def __init__(self, configs: list[BackendConfig], overrides: dict[str, ProviderAdapter] | None = None, transport: httpx.AsyncBaseTransport | None = None):
        self.configs: dict[str, BackendConfig] = {cfg.backend_id: cfg for cfg in configs}
        self._adapters: dict[str, ProviderAdapter] = {backend_id: REGISTRY[cfg.kind](cfg, transport=transport) for backend_id, cfg in self.configs.items()}
        for backend_id, adapter in (overrides or {}).items():
            self._adapters[backend_id] = adapter
            self.configs.setdefault(backend_id, adapter.config)

    def get(self, backend_id: str) -> ProviderAdapter:
        adapter = self._adapters.get(backend_id)
        if not adapter:
            raise BackendNotFoundError(backend_id)
        return adapter

    def keys(self):
        return self._adapters.keys()

    def __contains__(self, backend_id: str) -> bool:
        return backend_id in self._adapters
