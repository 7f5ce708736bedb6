"""Dynamic graph spatial-temporal attention for skeleton hand-gesture recognition."""

from .attention import AttentionConfig, HeadParams, MultiHeadParams, multi_head, naive_multi_head
from .graph import AttentionMask, GraphShape
from .network import ModelConfig, ModelParams, forward, init_params, predict

__all__ = [
    "AttentionConfig",
    "AttentionMask",
    "GraphShape",
    "HeadParams",
    "ModelConfig",
    "ModelParams",
    "MultiHeadParams",
    "forward",
    "init_params",
    "multi_head",
    "naive_multi_head",
    "predict",
]
