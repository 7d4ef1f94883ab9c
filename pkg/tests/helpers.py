"""Shared builders for synthetic collections, runs, and text tables."""

from __future__ import annotations

import random

from holepatch import JudgmentSet, RunRanking, TextStore


def make_judgments(
    rng: random.Random,
    n_topics: int = 10,
    judged_per_topic: tuple[int, int] = (6, 12),
    min_per_grade: int = 3,
) -> JudgmentSet:
    """Random graded judgments; every topic keeps at least one grade-0 entry.

    The grade-0 anchor keeps a topic evaluable even when every relevant label
    is dropped, so retained and patched evaluations cover identical topics.
    """
    entries: dict[tuple[str, str], int] = {}
    pid_counter = 0
    for t in range(1, n_topics + 1):
        tid = f"t{t}"
        n_judged = rng.randint(*judged_per_topic)
        for j in range(n_judged):
            pid_counter += 1
            grade = 0 if j == 0 else rng.choice([0, 1, 2, 3])
            entries[(tid, f"p{pid_counter}")] = grade
    # top up scarce grades so few-shot sampling always has a pool
    counts = {g: 0 for g in range(4)}
    for grade in entries.values():
        counts[grade] += 1
    for grade in range(4):
        while counts[grade] < min_per_grade:
            pid_counter += 1
            entries[("t1", f"p{pid_counter}")] = grade
            counts[grade] += 1
    return JudgmentSet(entries=entries, source_name="synthetic")


def make_run(
    rng: random.Random,
    judgments: JudgmentSet,
    tag: str,
    quality: float,
    extra_unjudged: int = 2,
    depth: int = 20,
) -> RunRanking:
    """A system whose scores track the true grades more tightly as quality rises."""
    scores: dict[str, list[tuple[str, float]]] = {}
    by_topic = judgments.by_topic()
    for topic_id, judged in by_topic.items():
        docs = []
        for pid, grade in judged.items():
            noise = rng.random() * 3.0
            docs.append((pid, quality * float(grade) + (1.0 - quality) * noise))
        for e in range(extra_unjudged):
            docs.append((f"x{topic_id}_{tag}_{e}", rng.random() * (1.0 - quality)))
        docs.sort(key=lambda d: d[1], reverse=True)
        scores[topic_id] = docs[:depth]
    return RunRanking.from_scores(tag, scores)


def make_runs(
    rng: random.Random, judgments: JudgmentSet, n_systems: int = 5
) -> list[RunRanking]:
    qualities = [0.95 - 0.8 * i / max(n_systems - 1, 1) for i in range(n_systems)]
    return [
        make_run(rng, judgments, f"sys{i + 1}", quality)
        for i, quality in enumerate(qualities)
    ]


def make_text_stores(judgments: JudgmentSet) -> tuple[TextStore, TextStore]:
    queries = TextStore(
        texts={tid: f"what is topic {tid} about?" for tid in judgments.topic_ids()}
    )
    passages = TextStore(
        texts={
            pid: f"passage {pid} discusses the subject in detail."
            for _, pid in judgments.entries
        }
    )
    return queries, passages


def make_collection(
    seed: int,
    n_topics: int = 10,
    n_systems: int = 5,
) -> tuple[JudgmentSet, list[RunRanking], TextStore, TextStore]:
    rng = random.Random(seed)
    judgments = make_judgments(rng, n_topics=n_topics)
    runs = make_runs(rng, judgments, n_systems=n_systems)
    queries, passages = make_text_stores(judgments)
    return judgments, runs, queries, passages


def write_run_file(run: RunRanking, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for topic_id in run.topic_ids():
            for rank, doc in enumerate(run.ranking(topic_id), start=1):
                f.write(
                    f"{topic_id} Q0 {doc.passage_id} {rank} {doc.score!r} {run.system_tag}\n"
                )


def write_text_store(store: TextStore, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for key in sorted(store.texts):
            f.write(f"{key}\t{store.texts[key]}\n")
