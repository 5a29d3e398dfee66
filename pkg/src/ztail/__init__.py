"""Strict zero-shot long-tail classification toolkit.

Refactors hierarchical taxonomy corpora into leaf-node long-tail tasks,
runs entailment/LLM composition chains against pluggable backends, and
scores runs with top-k accuracy and macro F1.
"""

from .entailment import RankedPrediction, build_hypothesis, classify, top_k
from .evaluation import (
    LabeledRun,
    MetricsReport,
    aggregate,
    compare_to_reference,
    evaluate,
    load_reference,
    macro_f1_at_k,
    top_k_accuracy,
)
from .gateway import (
    BackendDescriptor,
    GenRequest,
    ModelGateway,
    NliRequest,
    NliScore,
    open_gateway,
)
from .pipeline import (
    Gateways,
    PipelineConfig,
    PipelineResult,
    Stage,
    builtin_configs,
    run_batch,
    run_pipeline,
)
from .retrieval import (
    GroundedGeneration,
    PromptTemplate,
    ground_labels,
    load_catalog,
    render_init_prompt,
    render_primed_prompt,
    retrieve,
)
from .taxonomy import (
    DepthPolicy,
    LongTailDataset,
    RawSample,
    Taxonomy,
    class_distribution,
    parse_taxonomy,
    refactor_to_longtail,
    subsample,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # taxonomy
    "Taxonomy",
    "RawSample",
    "LongTailDataset",
    "DepthPolicy",
    "parse_taxonomy",
    "refactor_to_longtail",
    "class_distribution",
    "subsample",
    # gateway
    "BackendDescriptor",
    "ModelGateway",
    "NliRequest",
    "NliScore",
    "GenRequest",
    "open_gateway",
    # entailment
    "RankedPrediction",
    "build_hypothesis",
    "classify",
    "top_k",
    # retrieval
    "PromptTemplate",
    "GroundedGeneration",
    "load_catalog",
    "render_init_prompt",
    "render_primed_prompt",
    "retrieve",
    "ground_labels",
    # pipeline
    "Stage",
    "PipelineConfig",
    "PipelineResult",
    "Gateways",
    "builtin_configs",
    "run_pipeline",
    "run_batch",
    # evaluation
    "LabeledRun",
    "MetricsReport",
    "top_k_accuracy",
    "macro_f1_at_k",
    "aggregate",
    "evaluate",
    "compare_to_reference",
    "load_reference",
]
