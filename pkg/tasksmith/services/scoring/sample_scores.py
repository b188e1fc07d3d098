import json
import logging
import re

from tasksmith.backends.exceptions import EmptyText
from tasksmith.backends.gateway import BackendGateway
from tasksmith.backends.utils import keyword_hits
from tasksmith.exceptions import UnknownLabel
from tasksmith.schemas.sample import RewardBreakdown, SynthSample
from tasksmith.schemas.scoring import FluencyConfig, FormatRule, FormatRules, RelevanceConfig, SampleScoreWeights, StyleRule, TaskScoring

logger = logging.getLogger(__name__)

_SENTENCE_SPLIT_RE = re.compile(r"[.!?]+")
_WORD_RE = re.compile(r"[A-Za-z0-9']+")
_PUNCTUATION_RE = re.compile(r"[,.;:!?]")


def clamp01(value: float) -> float:
    return min(1.0, max(0.0, value))


def _as_json_object(text: str) -> dict | None:
    try:
        data = json.loads(text)
    except (json.JSONDecodeError, TypeError):
        return None
    return data if isinstance(data, dict) else None


def rule_passes(rule: FormatRule, text: str) -> bool:
    if rule.kind == "non_empty":
        return bool(text.strip())
    if rule.kind == "max_length":
        return len(text) <= rule.max_chars
    if rule.kind == "forbidden_substrings":
        lowered = text.lower()
        return not any(s.lower() in lowered for s in rule.substrings)
    data = _as_json_object(text)
    if rule.kind == "json_object":
        return data is not None
    return data is not None and all(name in data for name in rule.fields)


def score_structural(sample: SynthSample, rules: FormatRules) -> float:
    return clamp01(sum(rule.weight for rule in rules.rules if rule_passes(rule, sample.text)))


def style_statistics(text: str) -> dict[str, float]:
    """sentence_length: mean words per sentence; punctuation_balance: punctuation marks per word;
    repetition_ratio: share of words that repeat an earlier word."""
    words = [w.lower() for w in _WORD_RE.findall(text)]
    sentences = [s for s in _SENTENCE_SPLIT_RE.split(text) if _WORD_RE.search(s)]
    if not words:
        return {"sentence_length": 0.0, "punctuation_balance": 0.0, "repetition_ratio": 0.0}
    return {
        "sentence_length": len(words) / max(1, len(sentences)),
        "punctuation_balance": len(_PUNCTUATION_RE.findall(text)) / len(words),
        "repetition_ratio": 1.0 - len(set(words)) / len(words),
    }


def style_score(text: str, rules: list[StyleRule]) -> float:
    if not rules:
        return 1.0
    stats = style_statistics(text)
    passed = sum(rule.weight for rule in rules if rule.low <= stats[rule.statistic] <= rule.high)
    return clamp01(passed / sum(rule.weight for rule in rules))


def normalize_loglik(lm_loglik: float, cfg: FluencyConfig) -> float:
    return clamp01((lm_loglik - cfg.lm_score_floor) / (cfg.lm_score_ceiling - cfg.lm_score_floor))


def combine_fluency(lm_normalized: float, style: float, alpha: float) -> float:
    return clamp01(alpha * lm_normalized + (1.0 - alpha) * style)


async def score_fluency(sample: SynthSample, gateway: BackendGateway, likelihood_backend: str, cfg: FluencyConfig) -> float:
    lm_normalized = 0.0
    if cfg.alpha > 0.0:
        try:
            lm_normalized = normalize_loglik(await gateway.avg_token_loglik(likelihood_backend, sample.text), cfg)
        except EmptyText:
            logger.debug(f"sample {sample.sample_id[:12]} has no scorable text; LM term is 0")
    return combine_fluency(lm_normalized, style_score(sample.text, cfg.style_rules), cfg.alpha)


def keyword_match(text: str, keywords: list[str]) -> float:
    distinct = {k.lower() for k in keywords if k}
    if not distinct:
        return 0.0
    return keyword_hits(text, distinct) / len(distinct)


async def score_relevance(sample: SynthSample, gateway: BackendGateway, classifier_backend: str, cfg: RelevanceConfig) -> float:
    if sample.label not in cfg.keyword_sets:
        raise UnknownLabel(sample.label, sorted(cfg.keyword_sets))
    match = keyword_match(sample.text, cfg.keyword_sets[sample.label])
    if cfg.theta == 0.0:
        return clamp01(match)
    label_set = list(cfg.keyword_sets)
    prob = await gateway.label_probability(classifier_backend, sample.text, sample.label, label_set, cfg.keyword_sets)
    return clamp01(cfg.theta * prob + (1.0 - cfg.theta) * match)


def build_breakdown(s_struct: float, s_fluent: float, s_rel: float, weights: SampleScoreWeights) -> RewardBreakdown:
    rs = weights.gamma_struct * s_struct + weights.gamma_fluent * s_fluent + weights.gamma_rel * s_rel
    return RewardBreakdown(
        s_struct=s_struct,
        s_fluent=s_fluent,
        s_rel=s_rel,
        gamma_struct=weights.gamma_struct,
        gamma_fluent=weights.gamma_fluent,
        gamma_rel=weights.gamma_rel,
        rs=clamp01(rs),
    )


async def score_sample(sample: SynthSample, scoring: TaskScoring, gateway: BackendGateway) -> RewardBreakdown:
    """Sample-level reward; ds is left unset."""
    weights = scoring.weights
    s_struct = score_structural(sample, scoring.format_rules) if weights.gamma_struct > 0 else 0.0
    s_fluent = await score_fluency(sample, gateway, scoring.likelihood_backend, scoring.fluency) if weights.gamma_fluent > 0 else 0.0
    s_rel = await score_relevance(sample, gateway, scoring.classifier_backend, scoring.relevance) if weights.gamma_rel > 0 else 0.0
    return build_breakdown(s_struct, s_fluent, s_rel, weights)
