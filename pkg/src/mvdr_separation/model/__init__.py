from .config import NetConfig
from .params import (
    CHECKPOINT_FORMAT,
    Parameters,
    init_params,
    load_checkpoint,
    parameter_shapes,
    save_checkpoint,
)
from .network import estimate_masks, forward, gru_direction, normalize_features

__all__ = [
    "NetConfig",
    "Parameters",
    "CHECKPOINT_FORMAT",
    "init_params",
    "parameter_shapes",
    "save_checkpoint",
    "load_checkpoint",
    "forward",
    "estimate_masks",
    "gru_direction",
    "normalize_features",
]
