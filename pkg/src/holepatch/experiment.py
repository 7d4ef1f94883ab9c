"""Sweep orchestration: simulate holes, patch, score runs, correlate, report."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

from . import __version__
from .assessor import (
    Decoding,
    PromptBuilder,
    ResponseCache,
    make_assessor,
    patch_judgments,
)
from .correlation import kendall_tau
from .holes import HoleSpec, simulate_holes
from .metrics import HolePolicy, MetricConfig, evaluate_run
from .prompting import ExampleSet, build_prompt, load_template, pair_seed, sample_examples
from .trec_io import (
    JudgmentSet,
    RunRanking,
    TextStore,
    read_qrels,
    read_run,
    read_text_table,
)

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    """Everything a hole-fraction sweep needs; fractions are fractions retained."""

    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    trials: int = 3
    base_seed: int = 0
    assessors: tuple[str, ...] = ("oracle", "constant:0")
    metric: MetricConfig = field(default_factory=MetricConfig)
    qrels_path: str | None = None
    runs_dir: str | None = None
    queries_path: str | None = None
    passages_path: str | None = None
    model: str | None = None
    endpoint: str | None = None
    cache_path: str | None = None
    template_path: str | None = None
    per_label_examples: int = 2
    zero_shot: bool = False
    fixed_examples: bool = False
    per_topic_holes: bool = False

    def __post_init__(self):
        for f in self.fractions:
            if not 0.0 < f <= 1.0:
                raise ValueError(f"retained fraction {f} outside (0, 1]")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.assessors:
            raise ValueError("at least one assessor is required")

    @classmethod
    def from_json(cls, path: str | Path) -> "SweepConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        metric = MetricConfig(**data.pop("metric", {}))
        for key in ("fractions", "assessors"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(metric=metric, **data)


@dataclass(frozen=True)
class SweepInputs:
    qrels: JudgmentSet
    runs: tuple[RunRanking, ...]
    queries: TextStore | None = None
    passages: TextStore | None = None


@dataclass(frozen=True)
class TrialRow:
    fraction_retained: float
    trial: int
    assessor: str
    tau: float | None
    n_systems: int
    seed: int
    error: str | None = None


@dataclass(frozen=True)
class AggregateRow:
    fraction_retained: float
    assessor: str
    mean_tau: float
    var_tau: float


@dataclass(frozen=True)
class SystemScoreRow:
    fraction_retained: float
    trial: int
    assessor: str
    system_tag: str
    score: float


@dataclass(frozen=True)
class ExperimentReport:
    trial_rows: tuple[TrialRow, ...]
    aggregate_rows: tuple[AggregateRow, ...]
    system_rows: tuple[SystemScoreRow, ...]
    ground_truth_scores: dict[str, float]
    provenance: dict[str, str]


def load_sweep_inputs(config: SweepConfig) -> SweepInputs:
    if not config.qrels_path or not config.runs_dir:
        raise ExperimentError("sweep needs qrels_path and runs_dir")
    qrels = read_qrels(config.qrels_path)
    run_files = sorted(p for p in Path(config.runs_dir).iterdir() if p.is_file())
    runs = tuple(read_run(p) for p in run_files)
    queries = read_text_table(config.queries_path) if config.queries_path else None
    passages = read_text_table(config.passages_path) if config.passages_path else None
    return SweepInputs(qrels=qrels, runs=runs, queries=queries, passages=passages)


def make_prompt_builder(
    retained: JudgmentSet,
    queries: TextStore,
    passages: TextStore,
    per_label: int = 2,
    seed: int = 0,
    zero_shot: bool = False,
    fixed_examples: bool = False,
    template: str | None = None,
) -> PromptBuilder:
    """Per-hole prompt factory; example sampling is seeded per pair.

    fixed_examples draws a single example set up front and reuses it for
    every hole instead of resampling per pair.
    """
    if template is None:
        template = load_template()
    shared: ExampleSet | None = None
    if fixed_examples and not zero_shot:
        shared = sample_examples(retained, queries, passages, per_label, seed=seed)

    def builder(topic_id: str, passage_id: str):
        query_text = queries.get(topic_id)
        if query_text is None:
            raise ExperimentError(f"no query text for topic {topic_id!r}")
        passage_text = passages.get(passage_id)
        if passage_text is None:
            raise ExperimentError(f"no passage text for id {passage_id!r}")
        if zero_shot:
            examples = None
        elif shared is not None:
            examples = shared
        else:
            examples = sample_examples(
                retained,
                queries,
                passages,
                per_label,
                seed=pair_seed(seed, topic_id, passage_id),
                exclude=(topic_id, passage_id),
            )
        return build_prompt(query_text, passage_text, examples, template)

    return builder


def score_systems(
    runs: tuple[RunRanking, ...],
    judgments: JudgmentSet,
    metric: MetricConfig,
    policy: HolePolicy,
) -> dict[str, float]:
    """Mean nDCG@k per system tag."""
    scores: dict[str, float] = {}
    for run in runs:
        if run.system_tag in scores:
            raise ExperimentError(f"duplicate system tag {run.system_tag!r}")
        _, mean = evaluate_run(run, judgments, metric, policy)
        scores[run.system_tag] = mean.ndcg
    return scores


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def _sample_variance(values: list[float]) -> float:
    if len(values) < 2:
        return 0.0
    m = _mean(values)
    return sum((v - m) ** 2 for v in values) / (len(values) - 1)


def aggregate_trials(trial_rows: tuple[TrialRow, ...]) -> tuple[AggregateRow, ...]:
    """Mean and sample variance of tau per (fraction, assessor), failed cells excluded."""
    groups: dict[tuple[float, str], list[float]] = {}
    for row in trial_rows:
        if row.tau is None:
            continue
        groups.setdefault((row.fraction_retained, row.assessor), []).append(row.tau)
    return tuple(
        AggregateRow(
            fraction_retained=fraction,
            assessor=assessor,
            mean_tau=_mean(taus),
            var_tau=_sample_variance(taus),
        )
        for (fraction, assessor), taus in sorted(groups.items())
    )


def run_sweep(config: SweepConfig, inputs: SweepInputs | None = None) -> ExperimentReport:
    """Run the full (fraction x trial x assessor) grid against ground truth.

    Each cell simulates holes with seed base_seed + trial, patches them with
    the assessor, rescores every run on the patched judgments, and correlates
    the system ranking with the ground-truth ranking. A failed cell is
    recorded with its error and the sweep continues.
    """
    if inputs is None:
        inputs = load_sweep_inputs(config)
    if len(inputs.runs) < 2:
        raise ExperimentError("sweep needs at least 2 run files")
    gt_scores = score_systems(
        inputs.runs, inputs.qrels, config.metric, HolePolicy.TREAT_AS_NONRELEVANT
    )
    template = load_template(config.template_path) if _wants_llm(config) else None
    cache = ResponseCache(config.cache_path) if config.cache_path else None

    trial_rows: list[TrialRow] = []
    system_rows: list[SystemScoreRow] = []
    for fraction in config.fractions:
        # round() keeps derived drop fractions free of binary float noise
        drop = round(1.0 - fraction, 10)
        for trial in range(1, config.trials + 1):
            seed = config.base_seed + trial
            retained, holes = simulate_holes(
                inputs.qrels, HoleSpec(drop_fraction=drop, seed=seed), per_topic=config.per_topic_holes
            )
            for spec in config.assessors:
                try:
                    assessor = make_assessor(
                        spec,
                        truth=inputs.qrels,
                        model=config.model,
                        endpoint=config.endpoint,
                        cache=cache,
                        seed=seed,
                    )
                    prompt_builder = None
                    if assessor.needs_prompt:
                        if inputs.queries is None or inputs.passages is None:
                            raise ExperimentError(
                                "llm assessor needs queries and passages tables"
                            )
                        prompt_builder = make_prompt_builder(
                            retained,
                            inputs.queries,
                            inputs.passages,
                            per_label=config.per_label_examples,
                            seed=seed,
                            zero_shot=config.zero_shot,
                            fixed_examples=config.fixed_examples,
                            template=template,
                        )
                    patched, _ = patch_judgments(retained, holes, assessor, prompt_builder)
                    scores = score_systems(
                        inputs.runs, patched, config.metric, HolePolicy.USE_PATCHED
                    )
                    result = kendall_tau(gt_scores, scores)
                    trial_rows.append(
                        TrialRow(fraction, trial, spec, result.tau, result.n_systems, seed)
                    )
                    system_rows.extend(
                        SystemScoreRow(fraction, trial, spec, tag, score)
                        for tag, score in sorted(scores.items())
                    )
                except Exception as exc:
                    logger.warning(
                        "cell (fraction=%s, trial=%d, assessor=%s) failed: %s",
                        fraction,
                        trial,
                        spec,
                        exc,
                    )
                    trial_rows.append(
                        TrialRow(fraction, trial, spec, None, len(inputs.runs), seed, error=str(exc))
                    )

    trial_rows.sort(key=lambda r: (r.fraction_retained, r.trial, r.assessor))
    system_rows.sort(
        key=lambda r: (r.fraction_retained, r.trial, r.assessor, r.system_tag)
    )
    return ExperimentReport(
        trial_rows=tuple(trial_rows),
        aggregate_rows=aggregate_trials(tuple(trial_rows)),
        system_rows=tuple(system_rows),
        ground_truth_scores=gt_scores,
        provenance=_provenance(config, template),
    )


def _wants_llm(config: SweepConfig) -> bool:
    return any(spec.split(":")[0] == "llm" for spec in config.assessors)


def _provenance(config: SweepConfig, template: str | None) -> dict[str, str]:
    decoding = Decoding()
    prov = {
        "toolkit_version": __version__,
        "base_seed": str(config.base_seed),
        "fractions_retained": ",".join(repr(f) for f in config.fractions),
        "trials": str(config.trials),
        "assessors": ",".join(config.assessors),
        "metric": f"ndcg@{config.metric.cutoff_k},gain={config.metric.gain}",
        "map_threshold": str(config.metric.map_threshold),
        "tau_variant": "tau-b",
        "variance_estimator": "sample variance over trials",
        "hole_sampling": "per-topic" if config.per_topic_holes else "global per grade",
    }
    if _wants_llm(config):
        prov["model"] = config.model or ""
        prov["decoding"] = f"temperature={decoding.temperature:g},max_tokens={decoding.max_tokens}"
        prov["prompt_mode"] = "zero-shot" if config.zero_shot else "few-shot"
        prov["per_label_examples"] = str(config.per_label_examples)
        if template is not None:
            prov["prompt_template_sha256"] = hashlib.sha256(
                template.encode("utf-8")
            ).hexdigest()
    return prov


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    ndcg: float
    average_precision: float


@dataclass(frozen=True)
class ComparisonReport:
    system_tag: str
    cutoff_k: int
    ground_truth: ComparisonRow
    patched: ComparisonRow

    @property
    def delta_ndcg(self) -> float:
        return self.patched.ndcg - self.ground_truth.ndcg

    @property
    def delta_average_precision(self) -> float:
        return self.patched.average_precision - self.ground_truth.average_precision


def compare_single_run(
    run: RunRanking,
    complete: JudgmentSet,
    patched: JudgmentSet,
    metric: MetricConfig = MetricConfig(),
) -> ComparisonReport:
    """Score one run against ground-truth and patched judgments side by side."""
    _, gt_mean = evaluate_run(run, complete, metric, HolePolicy.TREAT_AS_NONRELEVANT)
    _, patched_mean = evaluate_run(run, patched, metric, HolePolicy.USE_PATCHED)
    return ComparisonReport(
        system_tag=run.system_tag,
        cutoff_k=metric.cutoff_k,
        ground_truth=ComparisonRow("ground-truth", gt_mean.ndcg, gt_mean.average_precision),
        patched=ComparisonRow("patched", patched_mean.ndcg, patched_mean.average_precision),
    )


def _float_field(value: float | None) -> str:
    return "" if value is None else repr(value)


def write_trials_csv(report: ExperimentReport, out: IO[str]) -> None:
    out.write("fraction_retained,trial,assessor,tau,n_systems,seed\n")
    for row in report.trial_rows:
        out.write(
            f"{row.fraction_retained!r},{row.trial},{row.assessor},"
            f"{_float_field(row.tau)},{row.n_systems},{row.seed}\n"
        )


def write_aggregates_csv(report: ExperimentReport, out: IO[str]) -> None:
    out.write("fraction_retained,assessor,mean_tau,var_tau\n")
    for row in report.aggregate_rows:
        out.write(
            f"{row.fraction_retained!r},{row.assessor},{row.mean_tau!r},{row.var_tau!r}\n"
        )


def write_system_scores_csv(report: ExperimentReport, out: IO[str]) -> None:
    k = _cutoff_from_provenance(report)
    out.write(f"fraction_retained,trial,assessor,system_tag,ndcg@{k}\n")
    for row in report.system_rows:
        out.write(
            f"{row.fraction_retained!r},{row.trial},{row.assessor},"
            f"{row.system_tag},{row.score!r}\n"
        )


def _cutoff_from_provenance(report: ExperimentReport) -> str:
    metric = report.provenance.get("metric", "ndcg@10")
    return metric.split(",")[0].split("@")[1]


def write_report_table(report: ExperimentReport, out: IO[str]) -> None:
    """Human-readable summary: provenance, aggregates, and failures."""
    out.write("sweep report\n============\n")
    for key, value in report.provenance.items():
        out.write(f"{key}: {value}\n")
    out.write("\nground-truth system scores\n")
    for tag, score in sorted(report.ground_truth_scores.items()):
        out.write(f"  {tag}: {score:.6f}\n")
    out.write("\nfraction_retained  assessor            mean_tau   var_tau\n")
    for row in report.aggregate_rows:
        out.write(
            f"{row.fraction_retained:<17g}  {row.assessor:<18}  "
            f"{row.mean_tau:<9.4f}  {row.var_tau:.6f}\n"
        )
    failures = [row for row in report.trial_rows if row.error]
    if failures:
        out.write("\nfailed cells\n")
        for row in failures:
            out.write(
                f"  fraction={row.fraction_retained:g} trial={row.trial} "
                f"assessor={row.assessor}: {row.error}\n"
            )


def write_report(report: ExperimentReport, report_dir: str | Path) -> dict[str, Path]:
    """Persist the report as CSVs plus a text table; bodies carry no timestamps."""
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "trials": report_dir / "trials.csv",
        "aggregates": report_dir / "aggregates.csv",
        "system_scores": report_dir / "system_scores.csv",
        "table": report_dir / "report.txt",
    }
    writers = {
        "trials": write_trials_csv,
        "aggregates": write_aggregates_csv,
        "system_scores": write_system_scores_csv,
        "table": write_report_table,
    }
    for key, path in paths.items():
        with open(path, "w", encoding="utf-8") as f:
            writers[key](report, f)
    return paths
