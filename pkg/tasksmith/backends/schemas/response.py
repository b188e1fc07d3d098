from pydantic import BaseModel


class TopLogprob(BaseModel):
    token: str
    logprob: float


class TokenLogprob(BaseModel):
    token: str
    logprob: float
    top_logprobs: list[TopLogprob] = []


class ChoiceLogprobs(BaseModel):
    content: list[TokenLogprob] | None = None


class ChatChoiceMessage(BaseModel):
    role: str = "assistant"
    content: str | None = None


class ChatChoice(BaseModel):
    message: ChatChoiceMessage
    logprobs: ChoiceLogprobs | None = None


class ChatResponse(BaseModel):
    choices: list[ChatChoice]


class EmbeddingItem(BaseModel):
    embedding: list[float]
    index: int | None = None


class EmbeddingResponse(BaseModel):
    data: list[EmbeddingItem]


class CompletionLogprobs(BaseModel):
    tokens: list[str] = []
    token_logprobs: list[float | None] = []


class CompletionChoice(BaseModel):
    text: str = ""
    logprobs: CompletionLogprobs | None = None


class CompletionResponse(BaseModel):
    choices: list[CompletionChoice]
