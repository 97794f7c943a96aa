"""Temporal video grounding rewards, task inversion, and a desk-scale GRPO lab."""

from .core import (
    Annotation,
    ArTarget,
    Segment,
    TaskInstance,
    TaskKind,
    TvgTarget,
    VcTarget,
    VdTarget,
    validate,
)
from .datasets import load_annotations, read_annotations, split_multi_segment, write_annotations
from .grpo import (
    GroupRollout,
    GrpoConfig,
    PolicyHandle,
    finite_difference_gradient,
    grpo_step,
    kl_penalty,
    normalize_advantages,
    surrogate_objective,
)
from .invert import (
    invert_dataset,
    make_ar_instance,
    make_tvg_instance,
    make_vc_instances,
    make_vd_instance,
)
from .metrics import EvalReport, mean_iou, r1_at_m, score_run
from .rewards import (
    EmbeddingTable,
    ParsedResponse,
    RewardBreakdown,
    ar_reward,
    combined_reward,
    cosine_similarity_reward,
    format_reward,
    iou_reward,
    parse_response,
    sample_task_kind,
    vc_reward,
    vd_reward,
)
from .verbs import VerbHit, VerbLexicon, extract_verbs, is_variant, lemmatize_verb, tokenize

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "ArTarget",
    "Segment",
    "TaskInstance",
    "TaskKind",
    "TvgTarget",
    "VcTarget",
    "VdTarget",
    "validate",
    "load_annotations",
    "read_annotations",
    "split_multi_segment",
    "write_annotations",
    "GroupRollout",
    "GrpoConfig",
    "PolicyHandle",
    "finite_difference_gradient",
    "grpo_step",
    "kl_penalty",
    "normalize_advantages",
    "surrogate_objective",
    "invert_dataset",
    "make_ar_instance",
    "make_tvg_instance",
    "make_vc_instances",
    "make_vd_instance",
    "EvalReport",
    "mean_iou",
    "r1_at_m",
    "score_run",
    "EmbeddingTable",
    "ParsedResponse",
    "RewardBreakdown",
    "ar_reward",
    "combined_reward",
    "cosine_similarity_reward",
    "format_reward",
    "iou_reward",
    "parse_response",
    "sample_task_kind",
    "vc_reward",
    "vd_reward",
    "VerbHit",
    "VerbLexicon",
    "extract_verbs",
    "is_variant",
    "lemmatize_verb",
    "tokenize",
    "__version__",
]
