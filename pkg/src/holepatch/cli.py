"""Command-line interface: evaluate, simulate, patch, sweep, compare."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .assessor import (
    API_KEY_ENV_VAR,
    ResponseCache,
    make_assessor,
    patch_judgments,
    write_audit_csv,
)
from .experiment import (
    SweepConfig,
    compare_single_run,
    make_prompt_builder,
    run_sweep,
    write_report,
)
from .holes import HoleSet, HoleSpec, simulate_holes, write_holes_csv
from .metrics import HolePolicy, MetricConfig, evaluate_run, write_topic_scores_csv
from .trec_io import JudgmentSet, read_qrels, read_run, read_text_table, save_qrels


def _metric_config(args) -> MetricConfig:
    return MetricConfig(cutoff_k=args.k, map_threshold=args.map_threshold, gain=args.gain)


def _add_metric_flags(parser) -> None:
    parser.add_argument("--k", type=int, default=10, help="metric cutoff (default 10)")
    parser.add_argument(
        "--map-threshold",
        type=int,
        default=2,
        help="grade at or above which a passage counts as relevant for MAP/P@k",
    )
    parser.add_argument(
        "--gain", choices=["linear", "exponential"], default="linear", help="nDCG gain"
    )


def _add_assessor_flags(parser) -> None:
    parser.add_argument(
        "--assessor",
        default="oracle",
        help="llm | oracle | constant:<g> | noisy:<p>",
    )
    parser.add_argument("--model", help="model name for the llm assessor")
    parser.add_argument("--endpoint", help="chat-completions endpoint URL")
    parser.add_argument("--cache", help="JSON-lines response cache path")
    parser.add_argument("--zero-shot", action="store_true", help="omit in-context examples")
    parser.add_argument(
        "--per-label-examples",
        type=int,
        default=2,
        help="examples per relevance grade in few-shot prompts (default 2)",
    )
    parser.add_argument(
        "--fixed-examples",
        action="store_true",
        help="sample one example set and reuse it for every hole",
    )
    parser.add_argument("--template", help="prompt template override (same placeholders)")


def cmd_evaluate(args) -> int:
    run = read_run(args.run)
    qrels = read_qrels(args.qrels)
    config = _metric_config(args)
    policy = HolePolicy(args.policy)
    topic_scores, mean = evaluate_run(run, qrels, config, policy)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as f:
            write_topic_scores_csv(run.system_tag, topic_scores, mean, f, config)
    print(f"system: {run.system_tag}  topics: {len(topic_scores)}")
    print(f"ndcg@{config.cutoff_k}: {mean.ndcg:.4f}")
    print(f"map:     {mean.average_precision:.4f}")
    print(f"p@{config.cutoff_k}:    {mean.precision_at_k:.4f}")
    return 0


def cmd_simulate(args) -> int:
    qrels = read_qrels(args.qrels)
    drop = round(1.0 - args.fraction, 10)
    retained, holes = simulate_holes(
        qrels, HoleSpec(drop_fraction=drop, seed=args.seed), per_topic=args.per_topic
    )
    save_qrels(retained, args.retained_out)
    save_qrels(holes.as_judgment_set(), args.holes_out)
    if args.holes_csv:
        with open(args.holes_csv, "w", encoding="utf-8") as f:
            write_holes_csv(holes, f)
    print(
        f"retained {len(retained)} judgments, removed {len(holes)} "
        f"(fraction retained {args.fraction:g}, seed {args.seed})"
    )
    return 0


def cmd_patch(args) -> int:
    retained = read_qrels(args.retained)
    holes_judgments = read_qrels(args.holes)
    holes = HoleSet(origin_grade=dict(holes_judgments.entries))
    truth = None
    if args.assessor.split(":")[0] in ("oracle", "noisy"):
        # the holes file carries origin grades, so retained + holes is the truth
        merged = dict(retained.entries)
        merged.update(holes_judgments.entries)
        truth = JudgmentSet(entries=merged, source_name="retained+holes")
    cache = ResponseCache(args.cache) if args.cache else None
    assessor = make_assessor(
        args.assessor,
        truth=truth,
        model=args.model,
        endpoint=args.endpoint,
        cache=cache,
        seed=args.seed,
    )
    prompt_builder = None
    if assessor.needs_prompt:
        if not args.queries or not args.passages:
            print("error: llm assessor needs --queries and --passages", file=sys.stderr)
            return 2
        template = Path(args.template).read_text(encoding="utf-8") if args.template else None
        prompt_builder = make_prompt_builder(
            retained,
            read_text_table(args.queries),
            read_text_table(args.passages),
            per_label=args.per_label_examples,
            seed=args.seed,
            zero_shot=args.zero_shot,
            fixed_examples=args.fixed_examples,
            template=template,
        )
    patched, audit = patch_judgments(retained, holes, assessor, prompt_builder)
    save_qrels(patched, args.out)
    if args.audit:
        with open(args.audit, "w", encoding="utf-8") as f:
            write_audit_csv(audit, f)
    sources = {}
    for entry in audit:
        sources[entry.source.value] = sources.get(entry.source.value, 0) + 1
    print(f"patched {len(audit)} holes with {assessor.name} -> {args.out} ({sources})")
    return 0


def cmd_sweep(args) -> int:
    if args.config:
        config = SweepConfig.from_json(args.config)
    else:
        config = SweepConfig()
    overrides = {}
    if args.qrels:
        overrides["qrels_path"] = args.qrels
    if args.runs:
        overrides["runs_dir"] = args.runs
    if args.queries:
        overrides["queries_path"] = args.queries
    if args.passages:
        overrides["passages_path"] = args.passages
    if args.fraction:
        overrides["fractions"] = tuple(args.fraction)
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.assessor:
        overrides["assessors"] = tuple(args.assessor)
    if args.model:
        overrides["model"] = args.model
    if args.endpoint:
        overrides["endpoint"] = args.endpoint
    if args.cache:
        overrides["cache_path"] = args.cache
    if args.template:
        overrides["template_path"] = args.template
    if args.zero_shot:
        overrides["zero_shot"] = True
    if args.fixed_examples:
        overrides["fixed_examples"] = True
    if args.per_label_examples is not None:
        overrides["per_label_examples"] = args.per_label_examples
    if args.k is not None:
        overrides["metric"] = MetricConfig(cutoff_k=args.k)
    if overrides:
        config = replace(config, **overrides)
    report = run_sweep(config)
    paths = write_report(report, args.report_dir)
    failed = sum(1 for row in report.trial_rows if row.error)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    print(f"{len(report.trial_rows)} cells, {failed} failed")
    return 0 if failed == 0 else 1


def cmd_compare(args) -> int:
    run = read_run(args.run)
    complete = read_qrels(args.qrels)
    patched = read_qrels(args.patched)
    config = _metric_config(args)
    report = compare_single_run(run, complete, patched, config)
    k = report.cutoff_k
    print(f"system: {report.system_tag}")
    print(f"{'':14}ndcg@{k:<6} map")
    for row in (report.ground_truth, report.patched):
        print(f"{row.label:<14}{row.ndcg:<11.4f}{row.average_precision:.4f}")
    print(f"{'delta':<14}{report.delta_ndcg:<+11.4f}{report.delta_average_precision:+.4f}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as f:
            f.write(f"label,ndcg@{k},map\n")
            for row in (report.ground_truth, report.patched):
                f.write(f"{row.label},{row.ndcg!r},{row.average_precision!r}\n")
            f.write(f"delta,{report.delta_ndcg!r},{report.delta_average_precision!r}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="holepatch",
        description=(
            "Patch unjudged holes in IR test collections with a pluggable assessor "
            f"and measure the ranking impact. API credential: ${API_KEY_ENV_VAR}."
        ),
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score one run file against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    _add_metric_flags(p)
    p.add_argument(
        "--policy",
        choices=[policy.value for policy in HolePolicy],
        default=HolePolicy.TREAT_AS_NONRELEVANT.value,
    )
    p.add_argument("--csv", help="per-topic scores CSV output path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="remove relevant judgments to create holes")
    p.add_argument("--qrels", required=True)
    p.add_argument(
        "--fraction",
        type=float,
        required=True,
        help="fraction of each relevant label retained; the rest become holes",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-topic", action="store_true", help="stratify removal inside topics")
    p.add_argument("--retained-out", required=True)
    p.add_argument("--holes-out", required=True, help="removed entries in qrels format")
    p.add_argument("--holes-csv", help="sidecar topic_id,passage_id,origin_grade table")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("patch", help="fill holes with assessor verdicts")
    p.add_argument("--retained", required=True, help="retained qrels path")
    p.add_argument("--holes", required=True, help="holes qrels path (origin grades)")
    p.add_argument("--queries", help="topic_id<TAB>text table")
    p.add_argument("--passages", help="passage_id<TAB>text table")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="patched qrels output path")
    p.add_argument("--audit", help="per-hole audit CSV output path")
    _add_assessor_flags(p)
    p.set_defaults(func=cmd_patch)

    p = sub.add_parser("sweep", help="fraction x trial x assessor grid with tau vs ground truth")
    p.add_argument("--config", help="SweepConfig JSON path; flags override it")
    p.add_argument("--qrels")
    p.add_argument("--runs", help="directory of run files (one system each)")
    p.add_argument("--queries")
    p.add_argument("--passages")
    p.add_argument(
        "--fraction",
        type=float,
        action="append",
        help="fraction retained; repeat for several (default 0.1..0.9)",
    )
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument(
        "--assessor", action="append", help="assessor spec; repeat to compare several"
    )
    p.add_argument("--model")
    p.add_argument("--endpoint")
    p.add_argument("--cache")
    p.add_argument("--template")
    p.add_argument("--zero-shot", action="store_true")
    p.add_argument("--fixed-examples", action="store_true")
    p.add_argument("--per-label-examples", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--report-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="one run scored on ground-truth vs patched qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True, help="ground-truth qrels")
    p.add_argument("--patched", required=True, help="patched qrels")
    _add_metric_flags(p)
    p.add_argument("--csv", help="comparison CSV output path")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
