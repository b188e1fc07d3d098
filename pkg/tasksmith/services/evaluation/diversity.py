import re
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict

from tasksmith.backends.gateway import BackendGateway
from tasksmith.exceptions import PreconditionError
from tasksmith.schemas.records import write_csv, write_json
from tasksmith.schemas.sample import SynthSample
from tasksmith.services.scoring.set_scores import ensure_embeddings

_TOKEN_RE = re.compile(r"\w+")


class DiversityReport(BaseModel):
    """Summary of how spread out a sample set is. Similarity stats are None for fewer than two samples."""

    model_config = ConfigDict(frozen=True)

    count: int
    mean_similarity: float | None
    p10_similarity: float | None
    p90_similarity: float | None
    distinct_ngram_ratio: float
    ngram: int
    samples: list[SynthSample]


def distinct_ngram_ratio(texts: list[str], n: int = 2) -> float:
    """Distinct word n-grams over all n-grams in ``texts``; texts shorter than n count as one n-gram."""
    grams = []
    for text in texts:
        tokens = _TOKEN_RE.findall(text.lower())
        if len(tokens) < n:
            grams.append(tuple(tokens))
            continue
        grams.extend(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    if not grams:
        return 0.0
    return len(set(grams)) / len(grams)


def pairwise_similarities(embeddings: list[list[float]]) -> np.ndarray:
    """Cosine similarity of every unordered pair (unit vectors assumed)."""
    matrix = np.asarray(embeddings, dtype=np.float64)
    sims = np.clip(matrix @ matrix.T, -1.0, 1.0)
    upper = np.triu_indices(len(matrix), k=1)
    return sims[upper]


async def diversity_report(samples: list[SynthSample], gateway: BackendGateway | None, embedder_backend: str | None, ngram: int = 2) -> DiversityReport:
    if not samples:
        raise PreconditionError("diversity report needs at least one sample")
    embedded = await ensure_embeddings(samples, gateway, embedder_backend)
    sims = pairwise_similarities([s.embedding for s in embedded]) if len(embedded) > 1 else np.empty(0)
    stats = (float(sims.mean()), float(np.percentile(sims, 10)), float(np.percentile(sims, 90))) if sims.size else (None, None, None)
    return DiversityReport(
        count=len(embedded),
        mean_similarity=stats[0],
        p10_similarity=stats[1],
        p90_similarity=stats[2],
        distinct_ngram_ratio=distinct_ngram_ratio([s.text for s in embedded], ngram),
        ngram=ngram,
        samples=embedded,
    )


def write_diversity_report(report: DiversityReport, out_dir: str | Path, stem: str) -> tuple[Path, Path]:
    """Per-sample CSV (scores + embedding columns e0..eN) for external projection tools, plus a JSON summary."""
    out_dir = Path(out_dir)
    dim = len(report.samples[0].embedding)
    columns = ["sample_id", "task_id", "label", "rs", "ds", "r_total"] + [f"e{i}" for i in range(dim)]

    def row(sample: SynthSample) -> list:
        rewards = sample.rewards
        scores = [rewards.rs, rewards.ds, rewards.r_total] if rewards else [None, None, None]
        return [sample.sample_id, sample.task_id, sample.label] + ["" if v is None else v for v in scores] + list(sample.embedding)

    csv_path, json_path = out_dir / f"{stem}.csv", out_dir / f"{stem}.json"
    write_csv(csv_path, columns, (row(s) for s in report.samples))
    write_json(json_path, report.model_dump(mode="json", exclude={"samples"}))
    return csv_path, json_path
