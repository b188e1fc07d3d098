import hashlib
import math
import re

import numpy as np

from tasksmith.backends.exceptions import EmptyText

REDACTED = "***"

_SENSITIVE_HEADERS = {"authorization", "x-api-key", "api-key"}

_WORD_RE = re.compile(r"\S+")

# Most frequent English character bigrams (space included), most frequent first.
ENGLISH_BIGRAMS = (
    "e_ _t th he s_ in d_ er an t_ re n_ _a on y_ at _o en _s nd r_ ti es or te of _i ed is it _w "
    "al ar st _c to nt ng se ha as ou io _h le ve _b co me de hi ri ro _f ic _m ne ea ra _p ce li "
    "ch ll be ma si om ur ca el ta la ns di fo ho pe ec pr no ct us ac ot il tr ly nc et ut ss so rs "
    "un lo wa ge ie wh ee wi em ad ol rt po we na ul ni ts mo ow pa im mi ai sh ir su id os iv ia am"
).split()

BIGRAM_LOGPROB = {bigram.replace("_", " "): -1.0 - 0.025 * rank for rank, bigram in enumerate(ENGLISH_BIGRAMS)}
UNSEEN_BIGRAM_LOGPROB = -7.0


def l2_normalize(vector) -> np.ndarray:
    array = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(array))
    if norm == 0.0 or not math.isfinite(norm):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return array / norm


def hashed_ngram_embed(text: str, dim: int = 64, n: int = 3) -> list[float]:
    """Signed-hash bag of character n-grams, L2-normalized.

    Each whitespace-separated word is wrapped as ``<word>`` and cut into
    character n-grams (a bounded word shorter than n contributes itself).
    A gram's bucket is the first four sha256 bytes (big-endian) mod dim and
    its sign is negative when the fifth byte is odd.
    A text joined to itself by whitespace doubles every count, so its
    direction is unchanged; direct concatenation forms new grams at the seam.
    """
    if dim < 8 or n < 1:
        raise ValueError(f"hashed_ngram_embed needs dim >= 8 and n >= 1 (got dim={dim}, n={n})")
    words = _WORD_RE.findall(text)
    if not words:
        raise EmptyText("cannot embed empty text")

    counts = np.zeros(dim, dtype=np.float64)
    for word in words:
        bounded = f"<{word}>"
        grams = [bounded] if len(bounded) < n else [bounded[i : i + n] for i in range(len(bounded) - n + 1)]
        for gram in grams:
            digest = hashlib.sha256(gram.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:4], "big") % dim
            counts[bucket] += -1.0 if digest[4] & 1 else 1.0

    norm = float(np.linalg.norm(counts))
    if norm == 0.0:
        # every gram cancelled out; fall back to the unsigned bucket of the whole text
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        counts[int.from_bytes(digest[:4], "big") % dim] = 1.0
        norm = 1.0
    return (counts / norm).tolist()


def bigram_avg_loglik(text: str) -> float:
    """Average log-probability of the text's character bigrams against ENGLISH_BIGRAMS.

    Letters are lower-cased and every run of non-letters collapses to one space.
    """
    cleaned = re.sub(r"[^a-z]+", " ", text.lower()).strip()
    if not cleaned:
        raise EmptyText("cannot score text without letters")
    padded = f" {cleaned} "
    scores = [BIGRAM_LOGPROB.get(padded[i : i + 2], UNSEEN_BIGRAM_LOGPROB) for i in range(len(padded) - 1)]
    return sum(scores) / len(scores)


def keyword_hits(text: str, keywords) -> int:
    """Number of distinct keywords present in text as whole words/phrases, case-insensitive."""
    lowered = text.lower()
    hits = 0
    for keyword in {k.lower() for k in keywords if k}:
        if re.search(rf"(?<!\w){re.escape(keyword)}(?!\w)", lowered):
            hits += 1
    return hits


def softmax(logits) -> np.ndarray:
    array = np.asarray(logits, dtype=np.float64)
    shifted = np.exp(array - np.max(array))
    return shifted / shifted.sum()


def stable_seed(*parts) -> int:
    """64-bit seed derived from the parts' text, identical across processes."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def redact_headers(headers: dict) -> dict:
    return {key: (REDACTED if key.lower() in _SENSITIVE_HEADERS else value) for key, value in headers.items()}


def redact_text(text: str, secrets: list[str | None]) -> str:
    for secret in secrets:
        if secret:
            text = text.replace(secret, REDACTED)
    return text
