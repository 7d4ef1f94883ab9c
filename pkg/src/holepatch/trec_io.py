"""Parsing and serialization for TREC-style qrels, run files, and id/text tables."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import IO, Iterable

Pair = tuple[str, str]


class FormatError(ValueError):
    """Raised when an input file violates its format; carries a 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class RelevanceGrade(IntEnum):
    """Four-level graded relevance: 3 perfectly relevant down to 0 irrelevant."""

    IRRELEVANT = 0
    RELATED = 1
    HIGHLY_RELEVANT = 2
    PERFECTLY_RELEVANT = 3


def _check_token(value: str, what: str) -> None:
    if not value or any(ch.isspace() for ch in value):
        raise ValueError(f"{what} must be a non-empty whitespace-free token, got {value!r}")


@dataclass(frozen=True)
class JudgmentSet:
    """Graded relevance judgments keyed by (topic_id, passage_id).

    Treated as immutable after construction; equality compares entries only,
    not the provenance name.
    """

    entries: dict[Pair, RelevanceGrade]
    source_name: str = field(default="", compare=False)

    def __post_init__(self):
        validated: dict[Pair, RelevanceGrade] = {}
        for (topic_id, passage_id), grade in self.entries.items():
            _check_token(topic_id, "topic_id")
            _check_token(passage_id, "passage_id")
            validated[(topic_id, passage_id)] = RelevanceGrade(grade)
        object.__setattr__(self, "entries", validated)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, pair: Pair) -> bool:
        return pair in self.entries

    def grade(self, topic_id: str, passage_id: str) -> RelevanceGrade | None:
        return self.entries.get((topic_id, passage_id))

    def topic_ids(self) -> list[str]:
        return sorted({topic_id for topic_id, _ in self.entries})

    def for_topic(self, topic_id: str) -> dict[str, RelevanceGrade]:
        """Passage -> grade map for one topic."""
        return {pid: g for (tid, pid), g in self.entries.items() if tid == topic_id}

    def by_topic(self) -> dict[str, dict[str, RelevanceGrade]]:
        out: dict[str, dict[str, RelevanceGrade]] = {}
        for (tid, pid), g in self.entries.items():
            out.setdefault(tid, {})[pid] = g
        return out

    def count_by_grade(self) -> dict[RelevanceGrade, int]:
        counts = {g: 0 for g in RelevanceGrade}
        for g in self.entries.values():
            counts[g] += 1
        return counts


@dataclass(frozen=True)
class ScoredDoc:
    passage_id: str
    score: float


@dataclass(frozen=True)
class RunRanking:
    """One retrieval system's ranked output, canonically ordered per topic.

    Canonical order within a topic is descending score, ties broken by
    lexicographically descending passage_id (the convention of the standard
    TREC evaluation tool). The on-disk rank field is not trusted.
    """

    system_tag: str
    topics: dict[str, tuple[ScoredDoc, ...]]

    def __post_init__(self):
        _check_token(self.system_tag, "system_tag")
        for topic_id, docs in self.topics.items():
            _check_token(topic_id, "topic_id")
            seen: set[str] = set()
            for doc in docs:
                if doc.passage_id in seen:
                    raise ValueError(
                        f"duplicate passage {doc.passage_id!r} in topic {topic_id!r}"
                    )
                seen.add(doc.passage_id)
            if list(docs) != _canonical_order(docs):
                raise ValueError(f"topic {topic_id!r} is not in canonical order")

    @classmethod
    def from_scores(
        cls, system_tag: str, scores: dict[str, Iterable[tuple[str, float]]]
    ) -> "RunRanking":
        """Build a ranking from raw (passage_id, score) pairs, canonicalizing order."""
        topics = {
            topic_id: tuple(_canonical_order([ScoredDoc(pid, s) for pid, s in docs]))
            for topic_id, docs in scores.items()
        }
        return cls(system_tag=system_tag, topics=topics)

    def topic_ids(self) -> list[str]:
        return sorted(self.topics)

    def ranking(self, topic_id: str) -> tuple[ScoredDoc, ...]:
        return self.topics.get(topic_id, ())

    def passage_ids(self, topic_id: str) -> list[str]:
        return [doc.passage_id for doc in self.ranking(topic_id)]


def _canonical_order(docs: Iterable[ScoredDoc]) -> list[ScoredDoc]:
    ordered = sorted(docs, key=lambda d: d.passage_id, reverse=True)
    ordered.sort(key=lambda d: d.score, reverse=True)
    return ordered


@dataclass(frozen=True)
class TextStore:
    """Id -> text lookup table (used once for queries, once for passages)."""

    texts: dict[str, str]

    def __post_init__(self):
        for key, text in self.texts.items():
            _check_token(key, "id")
            if not text.strip():
                raise ValueError(f"empty text for id {key!r}")

    def __len__(self) -> int:
        return len(self.texts)

    def __contains__(self, key: str) -> bool:
        return key in self.texts

    def get(self, key: str) -> str | None:
        return self.texts.get(key)


def _iter_fields(lines: Iterable[str], n_fields: int, what: str):
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != n_fields:
            raise FormatError(
                f"expected {n_fields} {what} fields, got {len(fields)}", line_no
            )
        yield line_no, fields


def parse_qrels(lines: Iterable[str], source_name: str = "qrels") -> JudgmentSet:
    """Parse `<topic_id> <iteration> <passage_id> <grade>` lines.

    The iteration field is ignored. Duplicate (topic, passage) keys and grades
    outside 0..3 are hard errors; parsing is all-or-nothing.
    """
    entries: dict[Pair, RelevanceGrade] = {}
    for line_no, (topic_id, _iteration, passage_id, grade_text) in _iter_fields(
        lines, 4, "qrels"
    ):
        try:
            grade = RelevanceGrade(int(grade_text))
        except ValueError:
            raise FormatError(f"invalid relevance grade {grade_text!r}", line_no) from None
        key = (topic_id, passage_id)
        if key in entries:
            raise FormatError(f"duplicate judgment for {topic_id} {passage_id}", line_no)
        entries[key] = grade
    return JudgmentSet(entries=entries, source_name=source_name)


def write_qrels(judgments: JudgmentSet, out: IO[str]) -> None:
    """Emit 4-field qrels lines (iteration written as 0), sorted by (topic, passage)."""
    for (topic_id, passage_id), grade in sorted(judgments.entries.items()):
        out.write(f"{topic_id} 0 {passage_id} {int(grade)}\n")


def parse_run(lines: Iterable[str]) -> RunRanking:
    """Parse `<topic_id> Q0 <passage_id> <rank> <score> <tag>` lines into a ranking.

    The rank field is validated as an integer but discarded; canonical order is
    recomputed from scores. The tag must be identical on all lines.
    """
    scores: dict[str, list[tuple[str, float]]] = {}
    seen: dict[str, set[str]] = {}
    system_tag: str | None = None
    for line_no, (topic_id, _q0, passage_id, rank_text, score_text, tag) in _iter_fields(
        lines, 6, "run"
    ):
        try:
            int(rank_text)
        except ValueError:
            raise FormatError(f"invalid rank {rank_text!r}", line_no) from None
        try:
            score = float(score_text)
        except ValueError:
            raise FormatError(f"invalid score {score_text!r}", line_no) from None
        if score != score or score in (float("inf"), float("-inf")):
            raise FormatError(f"non-finite score {score_text!r}", line_no)
        if system_tag is None:
            system_tag = tag
        elif tag != system_tag:
            raise FormatError(
                f"inconsistent run tag {tag!r} (expected {system_tag!r})", line_no
            )
        if passage_id in seen.setdefault(topic_id, set()):
            raise FormatError(
                f"duplicate passage {passage_id} in topic {topic_id}", line_no
            )
        seen[topic_id].add(passage_id)
        scores.setdefault(topic_id, []).append((passage_id, score))
    if system_tag is None:
        raise FormatError("run file contains no data lines")
    return RunRanking.from_scores(system_tag, scores)


def parse_text_table(lines: Iterable[str]) -> TextStore:
    """Parse `<id><TAB><text>` lines; the text may contain further tabs."""
    texts: dict[str, str] = {}
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        key, sep, text = line.partition("\t")
        if not sep:
            raise FormatError("missing tab separator", line_no)
        if not key or any(ch.isspace() for ch in key):
            raise FormatError(f"invalid id {key!r}", line_no)
        if key in texts:
            raise FormatError(f"duplicate id {key}", line_no)
        if not text.strip():
            raise FormatError(f"empty text for id {key}", line_no)
        texts[key] = text
    return TextStore(texts=texts)


def read_qrels(path: str | Path) -> JudgmentSet:
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        return parse_qrels(f, source_name=path.name)


def save_qrels(judgments: JudgmentSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        write_qrels(judgments, f)


def read_run(path: str | Path) -> RunRanking:
    with open(path, encoding="utf-8") as f:
        return parse_run(f)


def read_text_table(path: str | Path) -> TextStore:
    with open(path, encoding="utf-8") as f:
        return parse_text_table(f)
