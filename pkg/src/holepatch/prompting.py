"""Assessor prompt construction (few-shot or zero-shot) and reply parsing."""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .trec_io import JudgmentSet, Pair, RelevanceGrade, TextStore

EXAMPLES_LEAD_IN = (
    "Following are some of the examples of relevance categorizations for different categories:"
)
_PLACEHOLDERS = ("{examples}", "{query}", "{passage}")
_TARGET_RE = re.compile(r"\{(query|passage)\}")
_FINAL_LINE_RE = re.compile(r"^([0-3])\.?$")
_CATEGORY_RE = re.compile(r"category:\s*([0-3])", re.IGNORECASE)


class PromptMode(Enum):
    FEW_SHOT = "few-shot"
    ZERO_SHOT = "zero-shot"


class PromptError(ValueError):
    pass


class MalformedResponse(ValueError):
    """The assessor's reply contains no extractable relevance category."""

    def __init__(self, response_text: str):
        self.response_text = response_text
        super().__init__(f"no relevance category in response: {response_text!r}")


@dataclass(frozen=True)
class Example:
    query_text: str
    passage_text: str
    grade: RelevanceGrade

    def __post_init__(self):
        if not self.query_text or not self.passage_text:
            raise ValueError("example texts must be non-empty")


@dataclass(frozen=True)
class ExampleSet:
    """per_label_count examples of every grade, ascending grade then sampling order."""

    examples: tuple[Example, ...]
    per_label_count: int

    def __post_init__(self):
        counts = {g: 0 for g in RelevanceGrade}
        previous = -1
        for ex in self.examples:
            if int(ex.grade) < previous:
                raise ValueError("examples must be ordered by ascending grade")
            previous = int(ex.grade)
            counts[ex.grade] += 1
        if any(c != self.per_label_count for c in counts.values()):
            raise ValueError(
                f"expected {self.per_label_count} examples per grade, got {counts}"
            )


@dataclass(frozen=True)
class PromptText:
    text: str
    mode: PromptMode

    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


def default_template() -> str:
    return (
        resources.files("holepatch")
        .joinpath("templates/relevance_prompt.txt")
        .read_text(encoding="utf-8")
    )


def load_template(path: str | Path | None = None) -> str:
    """Read a prompt template and check it carries the three placeholders."""
    if path is None:
        template = default_template()
    else:
        template = Path(path).read_text(encoding="utf-8")
    for placeholder in _PLACEHOLDERS:
        if placeholder not in template:
            raise PromptError(f"template is missing the {placeholder} placeholder")
    return template


def pair_seed(base_seed: int, topic_id: str, passage_id: str) -> int:
    """Stable per-pair seed so concurrent assessment order cannot change prompts."""
    digest = hashlib.sha256(
        f"{base_seed}\x1f{topic_id}\x1f{passage_id}".encode("utf-8")
    ).digest()
    return int.from_bytes(digest[:8], "big")


def sample_examples(
    retained: JudgmentSet,
    queries: TextStore,
    passages: TextStore,
    per_label: int,
    seed: int,
    exclude: Pair | None = None,
) -> ExampleSet:
    """Draw per_label judged pairs of every grade, never the pair under assessment.

    Sampling is uniform without replacement per grade from the retained set;
    pairs whose query or passage text is unresolvable raise.
    """
    if per_label < 1:
        raise ValueError("per_label must be >= 1")
    rng = random.Random(seed)
    picked: list[Example] = []
    for grade in RelevanceGrade:
        pool = sorted(
            pair
            for pair, g in retained.entries.items()
            if g == grade and pair != exclude
        )
        if len(pool) < per_label:
            raise PromptError(
                f"not enough grade-{int(grade)} examples: need {per_label}, have {len(pool)}"
            )
        for topic_id, passage_id in rng.sample(pool, per_label):
            query_text = queries.get(topic_id)
            if query_text is None:
                raise PromptError(f"no query text for id {topic_id!r}")
            passage_text = passages.get(passage_id)
            if passage_text is None:
                raise PromptError(f"no passage text for id {passage_id!r}")
            picked.append(Example(query_text, passage_text, grade))
    return ExampleSet(examples=tuple(picked), per_label_count=per_label)


def _examples_section(example_set: ExampleSet) -> str:
    blocks = [
        f"Query: {ex.query_text}\nPassage: {ex.passage_text}\nRelevance category: {int(ex.grade)}"
        for ex in example_set.examples
    ]
    return EXAMPLES_LEAD_IN + "\n\n###\n\n" + "\n\n###\n\n".join(blocks)


def build_prompt(
    query_text: str,
    passage_text: str,
    examples: ExampleSet | None,
    template: str | None = None,
) -> PromptText:
    """Render the grading prompt; byte-deterministic for equal inputs.

    With examples the {examples} slot receives the lead-in line plus one
    block per example; without, the slot and its trailing blank line are
    dropped (zero-shot).
    """
    if not query_text or not passage_text:
        raise ValueError("query and passage texts must be non-empty")
    if template is None:
        template = load_template()
    if examples is None:
        for token in ("{examples}\n\n", "{examples}\n", "{examples}"):
            if token in template:
                template = template.replace(token, "", 1)
                break
        mode = PromptMode.ZERO_SHOT
    else:
        template = template.replace("{examples}", _examples_section(examples), 1)
        mode = PromptMode.FEW_SHOT
    substitutions = {"query": query_text, "passage": passage_text}
    text = _TARGET_RE.sub(lambda m: substitutions[m.group(1)], template)
    return PromptText(text=text, mode=mode)


def parse_grade(response_text: str) -> RelevanceGrade:
    """Extract the categorical answer from an assessor reply.

    The last line holding exactly a bare category (optionally dot-suffixed)
    wins; failing that, the last `category: <g>` mention anywhere.
    """
    for line in reversed(response_text.splitlines()):
        match = _FINAL_LINE_RE.match(line.strip())
        if match:
            return RelevanceGrade(int(match.group(1)))
    mentions = _CATEGORY_RE.findall(response_text)
    if mentions:
        return RelevanceGrade(int(mentions[-1]))
    raise MalformedResponse(response_text)
