"""Synthetic incomplete judgments: stratified removal of relevant labels."""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass
from typing import IO

from .trec_io import JudgmentSet, Pair, RelevanceGrade, RunRanking

RELEVANT_GRADES = (RelevanceGrade.RELATED, RelevanceGrade.HIGHLY_RELEVANT, RelevanceGrade.PERFECTLY_RELEVANT)


@dataclass(frozen=True)
class HoleSpec:
    """Fraction of each relevant label to remove, with the sampling seed."""

    drop_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_fraction <= 1.0:
            raise ValueError("drop_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class HoleSet:
    """The removed (topic, passage) pairs with their original grades.

    Origin grades are kept for oracle assessors and audits; they are never
    grade 0 because only relevant labels are dropped.
    """

    origin_grade: dict[Pair, RelevanceGrade]

    def __post_init__(self):
        for pair, grade in self.origin_grade.items():
            if RelevanceGrade(grade) == RelevanceGrade.IRRELEVANT:
                raise ValueError(f"hole {pair} has grade 0; only relevant labels are dropped")

    @property
    def pairs(self) -> set[Pair]:
        return set(self.origin_grade)

    def __len__(self) -> int:
        return len(self.origin_grade)

    def __contains__(self, pair: Pair) -> bool:
        return pair in self.origin_grade

    def as_judgment_set(self, source_name: str = "holes") -> JudgmentSet:
        """The holes with their original grades, viewed as a judgment set."""
        return JudgmentSet(entries=dict(self.origin_grade), source_name=source_name)


def simulate_holes(
    complete: JudgmentSet,
    spec: HoleSpec,
    per_topic: bool = False,
) -> tuple[JudgmentSet, HoleSet]:
    """Remove floor(drop_fraction * n_g) entries of each relevant grade g.

    Sampling is uniform without replacement from a seeded generator, by default
    per grade over all topics pooled together; per_topic=True stratifies the
    same rule inside each topic. Grade-0 entries are always retained, and
    retained plus holes reconstructs the complete set exactly.
    """
    rng = random.Random(spec.seed)
    dropped: dict[Pair, RelevanceGrade] = {}
    for grade in RELEVANT_GRADES:
        keys = sorted(pair for pair, g in complete.entries.items() if g == grade)
        if per_topic:
            by_topic: dict[str, list[Pair]] = {}
            for pair in keys:
                by_topic.setdefault(pair[0], []).append(pair)
            chosen: list[Pair] = []
            for topic_id in sorted(by_topic):
                topic_keys = by_topic[topic_id]
                n_drop = math.floor(spec.drop_fraction * len(topic_keys))
                chosen.extend(rng.sample(topic_keys, n_drop))
        else:
            n_drop = math.floor(spec.drop_fraction * len(keys))
            chosen = rng.sample(keys, n_drop)
        for pair in chosen:
            dropped[pair] = grade
    retained_entries = {
        pair: g for pair, g in complete.entries.items() if pair not in dropped
    }
    retained = JudgmentSet(entries=retained_entries, source_name=complete.source_name)
    return retained, HoleSet(origin_grade=dropped)


@dataclass(frozen=True)
class UnjudgedAudit:
    per_topic: dict[str, int]
    total: int


def audit_unjudged(run: RunRanking, judgments: JudgmentSet, k: int) -> UnjudgedAudit:
    """Count top-k passages per topic that the judgments do not cover."""
    per_topic: dict[str, int] = {}
    for topic_id in run.topic_ids():
        count = sum(
            1
            for pid in run.passage_ids(topic_id)[:k]
            if (topic_id, pid) not in judgments
        )
        per_topic[topic_id] = count
    return UnjudgedAudit(per_topic=per_topic, total=sum(per_topic.values()))


def write_holes_csv(holes: HoleSet, out: IO[str]) -> None:
    """Sidecar audit table: topic_id,passage_id,origin_grade."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["topic_id", "passage_id", "origin_grade"])
    for (topic_id, passage_id), grade in sorted(holes.origin_grade.items()):
        writer.writerow([topic_id, passage_id, int(grade)])
