"""Discrete representations: BPE caption tokenizer and VQ image tokenizer."""

from .bpe import BASE_VOCAB, BYTE_OFFSET, PAD_ID, SOC_ID, BPETokenizer, CaptionTokens
from .vq import (
    COMMITMENT_COEF,
    DEAD_CODE_STEPS,
    ImageTokenGrid,
    VQTokenizer,
    nearest_code_indices,
    train_image_tokenizer,
    vq_quantize,
)

__all__ = [
    "BASE_VOCAB",
    "BYTE_OFFSET",
    "BPETokenizer",
    "CaptionTokens",
    "COMMITMENT_COEF",
    "DEAD_CODE_STEPS",
    "ImageTokenGrid",
    "PAD_ID",
    "SOC_ID",
    "VQTokenizer",
    "nearest_code_indices",
    "train_image_tokenizer",
    "vq_quantize",
]
