"""View-consistent text-to-views generation."""

from .generator import (
    Batch,
    TextToViews,
    TokenizedObject,
    build_batch,
    tokenize_dataset,
    training_loss,
)
from .layout import BOS, MASK_PRIOR, NUM_POSES, PAD, SEP_PRIOR, SEP_TARGET, SequenceLayout
from .losses import (
    ContrastiveConfig,
    LossWeights,
    ViewEncoder,
    combine_losses,
    contrastive_loss,
    decode_predicted_image,
    info_nce,
)
from .model import TransformerConfig, ViewTransformer
from .sampling import generate_views, sample_view

__all__ = [
    "BOS",
    "Batch",
    "ContrastiveConfig",
    "LossWeights",
    "MASK_PRIOR",
    "NUM_POSES",
    "PAD",
    "SEP_PRIOR",
    "SEP_TARGET",
    "SequenceLayout",
    "TextToViews",
    "TokenizedObject",
    "TransformerConfig",
    "ViewEncoder",
    "ViewTransformer",
    "build_batch",
    "combine_losses",
    "contrastive_loss",
    "decode_predicted_image",
    "generate_views",
    "info_nce",
    "sample_view",
    "tokenize_dataset",
    "training_loss",
]
