"""Patch unjudged holes in IR test collections and measure the ranking impact."""

__version__ = "0.1.0"

from .assessor import (
    Assessor,
    AssessorError,
    ConstantAssessor,
    Decoding,
    NoisyAssessor,
    OracleAssessor,
    RemoteLLMAssessor,
    ResponseCache,
    TransportError,
    Verdict,
    VerdictSource,
    make_assessor,
    patch_judgments,
)
from .correlation import CorrelationError, TauResult, kendall_tau, rank_systems
from .experiment import (
    ComparisonReport,
    ExperimentError,
    ExperimentReport,
    SweepConfig,
    SweepInputs,
    compare_single_run,
    make_prompt_builder,
    run_sweep,
    write_report,
)
from .holes import HoleSet, HoleSpec, audit_unjudged, simulate_holes
from .metrics import (
    EvaluationError,
    HolePolicy,
    MetricConfig,
    TopicScore,
    average_precision,
    evaluate_run,
    ndcg_at_k,
    precision_at_k,
)
from .prompting import (
    Example,
    ExampleSet,
    MalformedResponse,
    PromptMode,
    PromptText,
    build_prompt,
    load_template,
    parse_grade,
    sample_examples,
)
from .trec_io import (
    FormatError,
    JudgmentSet,
    RelevanceGrade,
    RunRanking,
    ScoredDoc,
    TextStore,
    parse_qrels,
    parse_run,
    parse_text_table,
    read_qrels,
    read_run,
    read_text_table,
    save_qrels,
    write_qrels,
)
