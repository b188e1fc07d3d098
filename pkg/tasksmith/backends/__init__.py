from .exceptions import BackendError, BackendNotFoundError, EmptyText, GatewayError, UnsupportedByBackend
from .gateway import BackendGateway
from .schemas import BackendConfig, DecodingParams, MockGeneratorSpec
from .utils import hashed_ngram_embed

__all__ = [
    "BackendConfig",
    "BackendError",
    "BackendGateway",
    "BackendNotFoundError",
    "DecodingParams",
    "EmptyText",
    "GatewayError",
    "MockGeneratorSpec",
    "UnsupportedByBackend",
    "hashed_ngram_embed",
]
