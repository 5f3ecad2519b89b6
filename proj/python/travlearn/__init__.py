"""Online self-supervised traversability learning on a simulated robot."""

from ._core import (
    ModelShape,
    confidence,
    distance_transform,
    forward,
    init_params,
    load_checkpoint,
    load_config,
    loss_trav,
    replay_session,
    roc_auc,
    run_session,
    select_threshold,
    traversability_score,
    validate_wire_message,
    velocity_error,
)

__all__ = [
    "ModelShape",
    "confidence",
    "distance_transform",
    "forward",
    "init_params",
    "load_checkpoint",
    "load_config",
    "loss_trav",
    "replay_session",
    "roc_auc",
    "run_session",
    "select_threshold",
    "traversability_score",
    "validate_wire_message",
    "velocity_error",
]
