from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

BackendKind = Literal["http_chat", "http_embed", "mock_generator", "mock_embedder", "mock_classifier", "mock_likelihood"]

MessageRole = Literal["system", "user", "assistant"]


class MockTransform(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    prefix: str = ""
    suffix: str = ""
    suffixes: list[str] = Field(default_factory=list)


class MockTableEntry(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    pattern: str
    response: str


class MockGeneratorSpec(BaseModel):
    """How a mock generator turns a prompt into text.

    echo_transform: prefix + prompt + suffix; with ``suffixes`` the variant is picked by the decoding seed
    template_table: first fnmatch pattern that matches the prompt wins; falls back to echo
    seeded_markov:  word chain over prompt + built-in corpus, seeded by (seed, prompt, decoding seed)
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    mode: Literal["echo_transform", "template_table", "seeded_markov"] = "echo_transform"
    table: list[MockTableEntry] | None = None
    transform: MockTransform | None = None
    seed: int = Field(default=0, ge=0)
    markov_words: int = Field(default=24, ge=1)

    @model_validator(mode="before")
    @classmethod
    def echo_has_transform(cls, data):
        if isinstance(data, dict) and data.get("mode", "echo_transform") == "echo_transform" and data.get("transform") is None:
            return {**data, "transform": {}}
        return data

    @model_validator(mode="after")
    def mode_fields_present(self):
        if self.mode == "template_table" and not self.table:
            raise ValueError("template_table mode needs a non-empty table")
        return self


class BackendConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    backend_id: str
    kind: BackendKind
    endpoint_url: str | None = None
    auth_token_env: str | None = None
    model_name: str | None = None
    timeout_ms: int = Field(default=30_000, ge=1)
    max_retries: int = Field(default=2, ge=0)
    retry_backoff_ms: int = Field(default=250, ge=0)
    max_concurrency: int = Field(default=4, ge=1)
    mock: MockGeneratorSpec | None = None
    embed_dim: int = Field(default=64, ge=8)
    ngram: int = Field(default=3, ge=1)

    @model_validator(mode="after")
    def http_kinds_need_endpoint(self):
        if self.kind.startswith("http_") and not self.endpoint_url:
            raise ValueError(f"backend '{self.backend_id}': {self.kind} requires endpoint_url")
        return self


class DecodingParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    temperature: float = Field(default=0.7, ge=0.0)
    max_tokens: int = Field(default=256, ge=1)
    top_p: float = Field(default=1.0, gt=0.0, le=1.0)
    seed: int | None = Field(default=None, ge=0)


# Wire bodies


class ChatMessage(BaseModel):
    role: MessageRole
    content: str


class ChatRequest(BaseModel):
    model: str
    messages: list[ChatMessage]
    temperature: float
    max_tokens: int
    top_p: float
    seed: int | None = None
    logprobs: bool | None = None
    top_logprobs: int | None = None


class EmbeddingRequest(BaseModel):
    model: str
    input: list[str]


class CompletionScoreRequest(BaseModel):
    model: str
    prompt: str
    max_tokens: int = 0
    echo: bool = True
    logprobs: int = 1
