"""Embedding adapter training and morphing-attack evaluation toolkit."""

from ._core import (
    Adapter,
    DmadModel,
    EmbeddingSet,
    ScoreSet,
    TetraError,
    build_report,
    default_config_json,
    det_points,
    dmad_scores,
    evaluate_scenarios,
    export_difference_vectors,
    fuse,
    fuse_scores,
    generate_splits,
    logistic,
    normalize,
    rates_at_threshold,
    riapar,
    score_comparisons,
    sq_dist,
    threshold_at_fmr,
    train_adapter,
    train_dmad,
)

__all__ = [
    "Adapter",
    "DmadModel",
    "EmbeddingSet",
    "ScoreSet",
    "TetraError",
    "build_report",
    "default_config_json",
    "det_points",
    "dmad_scores",
    "evaluate_scenarios",
    "export_difference_vectors",
    "fuse",
    "fuse_scores",
    "generate_splits",
    "logistic",
    "normalize",
    "rates_at_threshold",
    "riapar",
    "score_comparisons",
    "sq_dist",
    "threshold_at_fmr",
    "train_adapter",
    "train_dmad",
]
