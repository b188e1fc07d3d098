import fnmatch
import re

import numpy as np

from tasksmith.backends.exceptions import EmptyText
from tasksmith.backends.providers.base import ProviderAdapter
from tasksmith.backends.schemas.request import DecodingParams, MockGeneratorSpec
from tasksmith.backends.utils import bigram_avg_loglik, hashed_ngram_embed, keyword_hits, softmax, stable_seed

MARKOV_CORPUS = (
    "the staff was friendly and the food arrived quickly . the service felt slow but the price was fair . "
    "this product works well and the battery lasts for days . the story is clear and the answer is simple . "
    "the premise supports the hypothesis and the evidence is strong . customers said the room was clean and quiet ."
)


class MockGeneratorAdapter(ProviderAdapter):
    """Deterministic text generator; see MockGeneratorSpec for the modes."""

    @property
    def spec(self) -> MockGeneratorSpec:
        return self.config.mock or MockGeneratorSpec()

    async def generate(self, prompt: str, decoding: DecodingParams, instruction: str | None = None) -> str:
        spec = self.spec
        if spec.mode == "template_table":
            for entry in spec.table or []:
                if fnmatch.fnmatchcase(prompt, entry.pattern):
                    return entry.response
            return self._echo(prompt, decoding)
        if spec.mode == "seeded_markov":
            return self._markov(prompt, decoding)
        return self._echo(prompt, decoding)

    def _echo(self, prompt: str, decoding: DecodingParams) -> str:
        transform = self.spec.transform
        if transform is None:
            return prompt
        suffix = transform.suffix
        if transform.suffixes:
            suffix += transform.suffixes[(decoding.seed or 0) % len(transform.suffixes)]
        return f"{transform.prefix}{prompt}{suffix}"

    def _markov(self, prompt: str, decoding: DecodingParams) -> str:
        words = re.findall(r"\S+", prompt.lower()) + MARKOV_CORPUS.split()
        chain: dict[str, list[str]] = {}
        for current, following in zip(words, words[1:], strict=False):
            chain.setdefault(current, []).append(following)

        rng = np.random.default_rng(stable_seed(self.spec.seed, prompt, decoding.seed))
        word = words[int(rng.integers(len(words)))]
        out = [word]
        for _ in range(min(self.spec.markov_words, decoding.max_tokens) - 1):
            options = chain.get(word) or words
            word = options[int(rng.integers(len(options)))]
            out.append(word)
        return " ".join(out)


class MockEmbedderAdapter(ProviderAdapter):
    async def embed(self, texts: list[str]) -> list[list[float]]:
        return [hashed_ngram_embed(text, dim=self.config.embed_dim, n=self.config.ngram) for text in texts]


class MockClassifierAdapter(ProviderAdapter):
    """Softmax over label logits, where a label's logit is its count of distinct keyword hits."""

    async def label_distribution(self, text: str, label_set: list[str], keywords: dict[str, list[str]] | None = None) -> dict[str, float]:
        keywords = keywords or {}
        logits = [float(keyword_hits(text, keywords.get(label, []))) for label in label_set]
        probs = softmax(logits)
        return {label: float(p) for label, p in zip(label_set, probs, strict=True)}


class MockLikelihoodAdapter(ProviderAdapter):
    async def avg_token_loglik(self, text: str) -> float:
        if not text.strip():
            raise EmptyText("cannot score empty text")
        return bigram_avg_loglik(text)
