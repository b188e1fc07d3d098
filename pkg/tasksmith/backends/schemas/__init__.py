from .request import BackendConfig, BackendKind, ChatMessage, ChatRequest, CompletionScoreRequest, DecodingParams, EmbeddingRequest, MockGeneratorSpec, MockTableEntry, MockTransform
from .response import ChatResponse, CompletionResponse, EmbeddingResponse

__all__ = [
    "BackendConfig",
    "BackendKind",
    "ChatMessage",
    "ChatRequest",
    "CompletionScoreRequest",
    "DecodingParams",
    "EmbeddingRequest",
    "MockGeneratorSpec",
    "MockTableEntry",
    "MockTransform",
    "ChatResponse",
    "CompletionResponse",
    "EmbeddingResponse",
]
