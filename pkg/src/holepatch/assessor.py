"""Pluggable grading backends, the response cache, and judgment patching."""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import IO, Callable

import requests

from .holes import HoleSet
from .prompting import MalformedResponse, PromptText, pair_seed, parse_grade
from .trec_io import JudgmentSet, Pair, RelevanceGrade

logger = logging.getLogger(__name__)

API_KEY_ENV_VAR = "HOLEPATCH_API_KEY"

PromptBuilder = Callable[[str, str], PromptText]


class AssessorError(RuntimeError):
    pass


class TransportError(AssessorError):
    """The remote endpoint stayed unreachable or unusable after retries."""


class VerdictSource(Enum):
    FRESH = "fresh"
    CACHED = "cached"
    FALLBACK = "fallback"


@dataclass(frozen=True)
class Verdict:
    grade: RelevanceGrade
    raw_response: str
    source: VerdictSource


@dataclass(frozen=True)
class Decoding:
    temperature: float = 0.0
    max_tokens: int = 512

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class CacheRecord:
    model_name: str
    prompt_hash: str
    topic_id: str
    passage_id: str
    grade: RelevanceGrade
    raw_response: str
    timestamp: float


class ResponseCache:
    """Append-only JSON-lines journal of assessor verdicts.

    Lookup returns the newest record for (model_name, prompt_hash); corrupt
    journal lines are skipped with a warning, never fatal. Concurrent writers
    are serialized so each record lands as one intact line.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._index: dict[tuple[str, str], CacheRecord] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    data = json.loads(line)
                    record = CacheRecord(
                        model_name=data["model_name"],
                        prompt_hash=data["prompt_hash"],
                        topic_id=data["topic_id"],
                        passage_id=data["passage_id"],
                        grade=RelevanceGrade(int(data["grade"])),
                        raw_response=data["raw_response"],
                        timestamp=float(data["timestamp"]),
                    )
                except (ValueError, KeyError, TypeError) as exc:
                    logger.warning("skipping corrupt cache line %d in %s: %s", line_no, self.path, exc)
                    continue
                self._index[(record.model_name, record.prompt_hash)] = record

    def __len__(self) -> int:
        return len(self._index)

    def lookup(self, model_name: str, prompt_hash: str) -> CacheRecord | None:
        with self._lock:
            return self._index.get((model_name, prompt_hash))

    def store(self, record: CacheRecord) -> None:
        line = json.dumps(
            {
                "model_name": record.model_name,
                "prompt_hash": record.prompt_hash,
                "topic_id": record.topic_id,
                "passage_id": record.passage_id,
                "grade": int(record.grade),
                "raw_response": record.raw_response,
                "timestamp": record.timestamp,
            },
            ensure_ascii=False,
        )
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
            self._index[(record.model_name, record.prompt_hash)] = record


class Assessor:
    """Base grading backend; subclasses fill in assess()."""

    name = "assessor"
    needs_prompt = False
    max_concurrency = 1

    def assess(
        self, topic_id: str, passage_id: str, prompt: PromptText | None = None
    ) -> Verdict:
        raise NotImplementedError


class OracleAssessor(Assessor):
    """Returns the ground-truth grade; the pipeline's fixpoint backend."""

    name = "oracle"

    def __init__(self, truth: JudgmentSet):
        self.truth = truth

    def assess(self, topic_id, passage_id, prompt=None):
        grade = self.truth.grade(topic_id, passage_id)
        if grade is None:
            raise AssessorError(f"oracle has no truth for ({topic_id}, {passage_id})")
        return Verdict(grade=grade, raw_response=str(int(grade)), source=VerdictSource.FRESH)


class ConstantAssessor(Assessor):
    """Grades every pair the same; Constant(0) is the non-relevant-fill baseline."""

    def __init__(self, grade: RelevanceGrade | int):
        self.grade = RelevanceGrade(grade)
        self.name = f"constant:{int(self.grade)}"

    def assess(self, topic_id, passage_id, prompt=None):
        return Verdict(
            grade=self.grade, raw_response=str(int(self.grade)), source=VerdictSource.FRESH
        )


class NoisyAssessor(Assessor):
    """Ground truth, degraded to grade 0 with a per-pair seeded probability."""

    def __init__(self, truth: JudgmentSet, corruption_probability: float, seed: int = 0):
        if not 0.0 <= corruption_probability <= 1.0:
            raise ValueError("corruption_probability must lie in [0, 1]")
        self.truth = truth
        self.corruption_probability = corruption_probability
        self.seed = seed
        self.name = f"noisy:{corruption_probability:g}"

    def assess(self, topic_id, passage_id, prompt=None):
        grade = self.truth.grade(topic_id, passage_id)
        if grade is None:
            raise AssessorError(f"no truth for ({topic_id}, {passage_id})")
        rng = random.Random(pair_seed(self.seed, topic_id, passage_id))
        if rng.random() < self.corruption_probability:
            grade = RelevanceGrade.IRRELEVANT
        return Verdict(grade=grade, raw_response=str(int(grade)), source=VerdictSource.FRESH)


class RemoteLLMAssessor(Assessor):
    """Grades via an OpenAI-style chat-completions endpoint, with retry and cache.

    Malformed replies are retried and finally fall back to grade 0 (a wrong 0
    mimics the treat-as-nonrelevant status quo); transport failures that
    outlive the retry budget raise instead.
    """

    needs_prompt = True

    def __init__(
        self,
        model_name: str,
        endpoint: str,
        decoding: Decoding = Decoding(),
        api_key: str | None = None,
        cache: ResponseCache | None = None,
        max_retries: int = 2,
        backoff_seconds: float = 1.0,
        timeout_seconds: float = 60.0,
        concurrency: int = 4,
    ):
        self.model_name = model_name
        self.endpoint = endpoint
        self.decoding = decoding
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV_VAR)
        self.cache = cache
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        self.timeout_seconds = timeout_seconds
        self.max_concurrency = concurrency
        self.name = f"llm:{model_name}"

    def assess(self, topic_id, passage_id, prompt=None):
        if prompt is None:
            raise ValueError("remote assessor requires a prompt")
        prompt_hash = prompt.sha256()
        if self.cache is not None:
            record = self.cache.lookup(self.model_name, prompt_hash)
            if record is not None:
                return Verdict(
                    grade=record.grade,
                    raw_response=record.raw_response,
                    source=VerdictSource.CACHED,
                )
        verdict = self._request_with_retry(topic_id, passage_id, prompt)
        if self.cache is not None:
            self.cache.store(
                CacheRecord(
                    model_name=self.model_name,
                    prompt_hash=prompt_hash,
                    topic_id=topic_id,
                    passage_id=passage_id,
                    grade=verdict.grade,
                    raw_response=verdict.raw_response,
                    timestamp=time.time(),
                )
            )
        return verdict

    def _request_with_retry(self, topic_id, passage_id, prompt) -> Verdict:
        last_malformed: MalformedResponse | None = None
        last_transport: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_seconds * 2 ** (attempt - 1))
            try:
                raw = self._post(prompt.text)
            except (requests.RequestException, TransportError) as exc:
                last_transport, last_malformed = exc, None
                continue
            try:
                return Verdict(
                    grade=parse_grade(raw), raw_response=raw, source=VerdictSource.FRESH
                )
            except MalformedResponse as exc:
                last_malformed, last_transport = exc, None
                continue
        if last_malformed is not None:
            logger.warning(
                "falling back to grade 0 for (%s, %s): no category in %d replies",
                topic_id,
                passage_id,
                self.max_retries + 1,
            )
            return Verdict(
                grade=RelevanceGrade.IRRELEVANT,
                raw_response=last_malformed.response_text,
                source=VerdictSource.FALLBACK,
            )
        raise TransportError(
            f"request for ({topic_id}, {passage_id}) failed after "
            f"{self.max_retries + 1} attempts: {last_transport}"
        ) from last_transport

    def _post(self, prompt_text: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model_name,
            "messages": [{"role": "user", "content": prompt_text}],
            "temperature": self.decoding.temperature,
            "max_tokens": self.decoding.max_tokens,
        }
        response = requests.post(
            self.endpoint, json=payload, headers=headers, timeout=self.timeout_seconds
        )
        response.raise_for_status()
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"reply is not a chat completion: {exc}") from exc


def make_assessor(
    spec: str,
    truth: JudgmentSet | None = None,
    model: str | None = None,
    endpoint: str | None = None,
    decoding: Decoding = Decoding(),
    cache: ResponseCache | None = None,
    seed: int = 0,
    api_key: str | None = None,
) -> Assessor:
    """Build an assessor from a CLI-style spec: llm | oracle | constant:<g> | noisy:<p>."""
    kind, _, arg = spec.partition(":")
    if kind == "oracle":
        if truth is None:
            raise ValueError("oracle assessor needs ground-truth judgments")
        return OracleAssessor(truth)
    if kind == "constant":
        return ConstantAssessor(int(arg or "0"))
    if kind == "noisy":
        if truth is None:
            raise ValueError("noisy assessor needs ground-truth judgments")
        return NoisyAssessor(truth, float(arg or "0"), seed=seed)
    if kind == "llm":
        if not model or not endpoint:
            raise ValueError("llm assessor needs --model and --endpoint")
        return RemoteLLMAssessor(
            model_name=model,
            endpoint=endpoint,
            decoding=decoding,
            cache=cache,
            api_key=api_key,
        )
    raise ValueError(f"unknown assessor spec {spec!r}")


@dataclass(frozen=True)
class PatchAudit:
    topic_id: str
    passage_id: str
    grade: RelevanceGrade
    source: VerdictSource


def patch_judgments(
    retained: JudgmentSet,
    holes: HoleSet,
    assessor: Assessor,
    prompt_builder: PromptBuilder | None = None,
    concurrency: int | None = None,
) -> tuple[JudgmentSet, list[PatchAudit]]:
    """Fill every hole with the assessor's verdict, keeping retained grades intact.

    The output's key set is exactly retained keys plus hole pairs. Verdicts are
    keyed by pair and prompts seeded per pair, so the result is independent of
    request completion order; fresh verdicts hit the cache as they complete,
    making an aborted run resumable.
    """
    overlap = set(retained.entries) & holes.pairs
    if overlap:
        raise ValueError(f"holes overlap retained judgments: {sorted(overlap)[:3]}")
    if assessor.needs_prompt and prompt_builder is None:
        raise ValueError(f"assessor {assessor.name} requires a prompt builder")
    pairs = sorted(holes.pairs)

    def grade_one(pair: Pair) -> Verdict:
        prompt = prompt_builder(*pair) if assessor.needs_prompt else None
        return assessor.assess(pair[0], pair[1], prompt)

    verdicts: dict[Pair, Verdict] = {}
    workers = assessor.max_concurrency if concurrency is None else concurrency
    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(grade_one, pair): pair for pair in pairs}
            try:
                for future in as_completed(futures):
                    verdicts[futures[future]] = future.result()
            except BaseException:
                for future in futures:
                    future.cancel()
                raise
    else:
        for pair in pairs:
            verdicts[pair] = grade_one(pair)

    entries: dict[Pair, RelevanceGrade] = dict(retained.entries)
    audit = []
    for pair in pairs:
        verdict = verdicts[pair]
        entries[pair] = verdict.grade
        audit.append(PatchAudit(pair[0], pair[1], verdict.grade, verdict.source))
    patched = JudgmentSet(
        entries=entries, source_name=f"{retained.source_name}+{assessor.name}"
    )
    return patched, audit


def write_audit_csv(audit: list[PatchAudit], out: IO[str]) -> None:
    out.write("topic_id,passage_id,grade,source\n")
    for entry in audit:
        out.write(
            f"{entry.topic_id},{entry.passage_id},{int(entry.grade)},{entry.source.value}\n"
        )
