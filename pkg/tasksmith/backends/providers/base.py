from abc import ABC

import httpx

from tasksmith.backends.exceptions import UnsupportedByBackend
from tasksmith.backends.schemas.request import BackendConfig, DecodingParams


class ProviderAdapter(ABC):
    """One configured backend. Kinds implement the operations they support; the rest raise UnsupportedByBackend."""

    def __init__(self, config: BackendConfig, transport: httpx.AsyncBaseTransport | None = None):
        self.config = config
        self.transport = transport

    @property
    def backend_id(self) -> str:
        return self.config.backend_id

    async def generate(self, prompt: str, decoding: DecodingParams, instruction: str | None = None) -> str:
        raise UnsupportedByBackend(self.backend_id, "generate")

    async def embed(self, texts: list[str]) -> list[list[float]]:
        raise UnsupportedByBackend(self.backend_id, "embed")

    async def label_distribution(self, text: str, label_set: list[str], keywords: dict[str, list[str]] | None = None) -> dict[str, float]:
        raise UnsupportedByBackend(self.backend_id, "label_probability")

    async def avg_token_loglik(self, text: str) -> float:
        raise UnsupportedByBackend(self.backend_id, "avg_token_loglik")
