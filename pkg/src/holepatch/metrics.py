"""Graded-relevance metrics (nDCG@k, MAP, Pr@k) with an explicit unjudged-document policy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import IO, Mapping, Sequence

from .trec_io import JudgmentSet, RunRanking


class HolePolicy(Enum):
    """How unjudged documents are graded during evaluation.

    TREAT_AS_NONRELEVANT grades them 0, today's status quo. USE_PATCHED
    declares that the supplied judgments were already patched and should
    cover the run; any remaining unjudged document still grades 0.
    """

    TREAT_AS_NONRELEVANT = "treat-as-nonrelevant"
    USE_PATCHED = "use-patched"


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class MetricConfig:
    cutoff_k: int = 10
    map_threshold: int = 2
    gain: str = "linear"

    def __post_init__(self):
        if self.cutoff_k < 1:
            raise ValueError("cutoff_k must be >= 1")
        if self.gain not in ("linear", "exponential"):
            raise ValueError(f"unknown gain {self.gain!r}")

    def gain_of(self, grade: int) -> float:
        if self.gain == "linear":
            return float(grade)
        return float(2**grade - 1)


@dataclass(frozen=True)
class TopicScore:
    topic_id: str
    ndcg: float
    average_precision: float
    precision_at_k: float


def _grade_of(
    passage_id: str,
    topic_judgments: Mapping[str, int],
    policy: HolePolicy,
) -> int:
    # Both policies fall back to 0 for unjudged documents; USE_PATCHED merely
    # asserts the caller already filled the holes that matter.
    del policy
    return int(topic_judgments.get(passage_id, 0))


def ndcg_at_k(
    ranked_passages: Sequence[str],
    topic_judgments: Mapping[str, int],
    config: MetricConfig = MetricConfig(),
    policy: HolePolicy = HolePolicy.TREAT_AS_NONRELEVANT,
) -> float:
    """DCG@k / IDCG@k with discount log2(rank+1); 0.0 when the topic has no gain."""
    k = config.cutoff_k
    dcg = 0.0
    for rank, pid in enumerate(ranked_passages[:k], start=1):
        dcg += config.gain_of(_grade_of(pid, topic_judgments, policy)) / math.log2(rank + 1)
    ideal = sorted((int(g) for g in topic_judgments.values()), reverse=True)[:k]
    idcg = 0.0
    for rank, grade in enumerate(ideal, start=1):
        idcg += config.gain_of(grade) / math.log2(rank + 1)
    if idcg <= 0.0:
        return 0.0
    # Reordering equal-grade documents can perturb the sum in the last bit.
    return min(dcg / idcg, 1.0)


def average_precision(
    ranked_passages: Sequence[str],
    topic_judgments: Mapping[str, int],
    config: MetricConfig = MetricConfig(),
    policy: HolePolicy = HolePolicy.TREAT_AS_NONRELEVANT,
) -> float:
    """Sum of precision at each relevant retrieved rank over the topic's relevant count."""
    threshold = config.map_threshold
    n_relevant = sum(1 for g in topic_judgments.values() if int(g) >= threshold)
    if n_relevant == 0:
        return 0.0
    hits = 0
    total = 0.0
    for rank, pid in enumerate(ranked_passages, start=1):
        if _grade_of(pid, topic_judgments, policy) >= threshold:
            hits += 1
            total += hits / rank
    return total / n_relevant


def precision_at_k(
    ranked_passages: Sequence[str],
    topic_judgments: Mapping[str, int],
    config: MetricConfig = MetricConfig(),
    policy: HolePolicy = HolePolicy.TREAT_AS_NONRELEVANT,
) -> float:
    """Fraction of the top k at or above the relevance threshold; short lists pad as non-relevant."""
    k = config.cutoff_k
    hits = sum(
        1
        for pid in ranked_passages[:k]
        if _grade_of(pid, topic_judgments, policy) >= config.map_threshold
    )
    return hits / k


def evaluate_run(
    run: RunRanking,
    judgments: JudgmentSet,
    config: MetricConfig = MetricConfig(),
    policy: HolePolicy = HolePolicy.TREAT_AS_NONRELEVANT,
) -> tuple[list[TopicScore], TopicScore]:
    """Score every judged topic of a run; returns per-topic scores and their mean.

    Topics present in the run but absent from the judgments are skipped; the
    mean (topic_id "all") is arithmetic over the evaluated topics.
    """
    by_topic = judgments.by_topic()
    topics = [t for t in run.topic_ids() if t in by_topic]
    if not topics:
        raise EvaluationError(
            f"run {run.system_tag!r} shares no topics with judgments {judgments.source_name!r}"
        )
    scores = []
    for topic_id in topics:
        ranked = run.passage_ids(topic_id)
        judged = by_topic[topic_id]
        scores.append(
            TopicScore(
                topic_id=topic_id,
                ndcg=ndcg_at_k(ranked, judged, config, policy),
                average_precision=average_precision(ranked, judged, config, policy),
                precision_at_k=precision_at_k(ranked, judged, config, policy),
            )
        )
    n = len(scores)
    mean = TopicScore(
        topic_id="all",
        ndcg=sum(s.ndcg for s in scores) / n,
        average_precision=sum(s.average_precision for s in scores) / n,
        precision_at_k=sum(s.precision_at_k for s in scores) / n,
    )
    return scores, mean


def write_topic_scores_csv(
    system_tag: str,
    topic_scores: Sequence[TopicScore],
    mean: TopicScore,
    out: IO[str],
    config: MetricConfig = MetricConfig(),
) -> None:
    """Export per-topic scores plus the trailing mean row (topic_id "all")."""
    k = config.cutoff_k
    out.write(f"system_tag,topic_id,ndcg@{k},map,p@{k}\n")
    for row in list(topic_scores) + [mean]:
        out.write(
            f"{system_tag},{row.topic_id},{row.ndcg!r},{row.average_precision!r},"
            f"{row.precision_at_k!r}\n"
        )
