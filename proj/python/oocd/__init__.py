"""Two-stage multi-teacher distillation for out-of-context news detection.

Thin re-export of the compiled `_oocd` module; see the C++ headers under
``include/oocd`` for the authoritative documentation.
"""

from ._oocd import (  # noqa: F401
    BudgetReport,
    ConfigError,
    ConsensusPartition,
    Corpus,
    CorpusConfig,
    Evidence,
    ExperimentResult,
    KnowledgeSet,
    Label,
    Metrics,
    NewsItem,
    ParseFailure,
    PipelineConfig,
    PipelineError,
    PromptVariant,
    SchemaError,
    SweepRow,
    TeacherProfile,
    TeacherRecord,
    acquire_knowledge,
    budget_report,
    build_prompt,
    compute_metrics,
    config_from_file,
    config_from_string,
    generate_corpus,
    load_jsonl,
    parse_response,
    partition_by_consensus,
    run_ablation,
    save_jsonl,
    sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
