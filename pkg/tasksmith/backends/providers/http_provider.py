import json
import logging
import math
import os

import httpx
from pydantic import BaseModel, ValidationError

from tasksmith.backends.exceptions import BackendError, UnsupportedByBackend
from tasksmith.backends.providers.base import ProviderAdapter
from tasksmith.backends.schemas.request import ChatMessage, ChatRequest, CompletionScoreRequest, DecodingParams, EmbeddingRequest
from tasksmith.backends.schemas.response import ChatResponse, CompletionResponse, EmbeddingResponse
from tasksmith.backends.utils import redact_headers, redact_text
from tasksmith.schemas.records import canonical_json

logger = logging.getLogger(__name__)

LABEL_TOP_LOGPROBS = 20


class HttpAdapter(ProviderAdapter):
    """JSON-over-HTTP client for an OpenAI-compatible model gateway."""

    def _token(self) -> str | None:
        if not self.config.auth_token_env:
            return None
        return os.environ.get(self.config.auth_token_env)

    def _get_headers(self, token: str | None) -> dict:
        headers = {"Content-Type": "application/json", "X-Title": "tasksmith"}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    @property
    def model(self) -> str:
        return self.config.model_name or "default"

    def _extract_error_message(self, body: str) -> str:
        try:
            data = json.loads(body)
            err = data.get("error")
            if isinstance(err, dict):
                return err.get("message") or json.dumps(err)
            if isinstance(err, str):
                return err
            return body or "Unknown error"
        except (json.JSONDecodeError, TypeError, AttributeError):
            return body or "Unknown error"

    async def _post(self, path: str, payload: BaseModel, response_model: type[BaseModel]):
        url = f"{self.config.endpoint_url.rstrip('/')}/{path}"
        token = self._token()
        headers = self._get_headers(token)
        body = payload.model_dump(exclude_none=True)
        logger.debug(f"→ [{self.backend_id}] POST {url} headers={redact_headers(headers)} body={redact_text(canonical_json(body), [token])}")

        timeout = self.config.timeout_ms / 1000.0
        try:
            async with httpx.AsyncClient(http2=True, transport=self.transport, timeout=timeout) as client:
                response = await client.post(url, json=body, headers=headers)
        except httpx.TimeoutException as e:
            raise BackendError(self.backend_id, "timeout", f"no response within {self.config.timeout_ms} ms") from e
        except httpx.TransportError as e:
            raise BackendError(self.backend_id, "unreachable", redact_text(str(e) or type(e).__name__, [token])) from e

        text = response.text
        logger.debug(f"← [{self.backend_id}] {response.status_code} {redact_text(text[:500], [token])}")
        if response.is_error:
            raise BackendError(self.backend_id, "http_status", redact_text(self._extract_error_message(text), [token]), status_code=response.status_code)
        try:
            return response_model.model_validate(response.json())
        except (json.JSONDecodeError, ValidationError, ValueError) as e:
            raise BackendError(self.backend_id, "malformed_response", f"response does not match {response_model.__name__}") from e

    def _chat_request(self, messages: list[ChatMessage], decoding: DecodingParams, **extra) -> ChatRequest:
        return ChatRequest(
            model=self.model,
            messages=messages,
            temperature=decoding.temperature,
            max_tokens=decoding.max_tokens,
            top_p=decoding.top_p,
            seed=decoding.seed,
            **extra,
        )


class HttpChatAdapter(HttpAdapter):
    async def generate(self, prompt: str, decoding: DecodingParams, instruction: str | None = None) -> str:
        messages = []
        if instruction:
            messages.append(ChatMessage(role="system", content=instruction))
        messages.append(ChatMessage(role="user", content=prompt))

        response: ChatResponse = await self._post("chat/completions", self._chat_request(messages, decoding), ChatResponse)
        if not response.choices or not response.choices[0].message.content:
            raise BackendError(self.backend_id, "malformed_response", "first choice carries no message content")
        return response.choices[0].message.content

    async def label_distribution(self, text: str, label_set: list[str], keywords: dict[str, list[str]] | None = None) -> dict[str, float]:
        messages = [
            ChatMessage(role="system", content=f"Classify the text. Answer with exactly one of: {', '.join(label_set)}."),
            ChatMessage(role="user", content=text),
        ]
        decoding = DecodingParams(temperature=0.0, max_tokens=1, top_p=1.0)
        request = self._chat_request(messages, decoding, logprobs=True, top_logprobs=LABEL_TOP_LOGPROBS)
        response: ChatResponse = await self._post("chat/completions", request, ChatResponse)

        if not response.choices:
            raise BackendError(self.backend_id, "malformed_response", "no choices returned")
        logprobs = response.choices[0].logprobs
        if logprobs is None or not logprobs.content:
            raise UnsupportedByBackend(self.backend_id, "label_probability")

        best: dict[str, float] = {}
        for candidate in logprobs.content[0].top_logprobs:
            token = candidate.token.strip().lower()
            if not token:
                continue
            for label in label_set:
                if label.lower().startswith(token) and candidate.logprob > best.get(label, -math.inf):
                    best[label] = candidate.logprob

        if not best:
            logger.warning(f"[{self.backend_id}] no label token among the top {LABEL_TOP_LOGPROBS} logprobs; using a uniform distribution")
            return {label: 1.0 / len(label_set) for label in label_set}

        peak = max(best.values())
        mass = {label: math.exp(best[label] - peak) if label in best else 0.0 for label in label_set}
        total = sum(mass.values())
        return {label: value / total for label, value in mass.items()}

    async def avg_token_loglik(self, text: str) -> float:
        request = CompletionScoreRequest(model=self.model, prompt=text)
        response: CompletionResponse = await self._post("completions", request, CompletionResponse)
        if not response.choices or response.choices[0].logprobs is None:
            raise UnsupportedByBackend(self.backend_id, "avg_token_loglik")
        # the first echoed token has no conditional probability
        values = [lp for lp in response.choices[0].logprobs.token_logprobs if lp is not None]
        if not values:
            raise BackendError(self.backend_id, "malformed_response", "echoed prompt carries no token logprobs")
        return min(0.0, sum(values) / len(values))


class HttpEmbedAdapter(HttpAdapter):
    async def embed(self, texts: list[str]) -> list[list[float]]:
        response: EmbeddingResponse = await self._post("embeddings", EmbeddingRequest(model=self.model, input=texts), EmbeddingResponse)
        if len(response.data) != len(texts):
            raise BackendError(self.backend_id, "malformed_response", f"{len(response.data)} embeddings for {len(texts)} inputs")
        items = response.data
        if all(item.index is not None for item in items):
            items = sorted(items, key=lambda item: item.index)
        return [item.embedding for item in items]
