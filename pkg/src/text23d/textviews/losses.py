"""Training objective of the text-to-views generator.

Seven weighted terms: next-token cross entropies for pose / caption /
prior / target-image segments, a pixel L1 on the straight-through decoded
image, a caption-similarity loss under the frozen dual encoder, and the
view-contrastive loss whose denominator runs over negatives only (other
objects' decoded views).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor, nn, ops
from ..errors import ContractViolation
from .layout import SequenceLayout

DEFAULT_WEIGHTS = (0.1, 0.1, 0.1, 0.6, 1.0, 1.0, 1.0)
TERM_ORDER = ("pose", "txt", "prior", "img", "pixel", "caption", "contrastive")


@dataclass(frozen=True)
class LossWeights:
    pose: float = DEFAULT_WEIGHTS[0]
    txt: float = DEFAULT_WEIGHTS[1]
    prior: float = DEFAULT_WEIGHTS[2]
    img: float = DEFAULT_WEIGHTS[3]
    pixel: float = DEFAULT_WEIGHTS[4]
    caption: float = DEFAULT_WEIGHTS[5]
    contrastive: float = DEFAULT_WEIGHTS[6]

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in TERM_ORDER}


@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float = 0.07
    include_positive_in_denominator: bool = False  # standard-InfoNCE variant


class ViewEncoder(nn.Module):
    """f_enc: image -> unit-norm embedding used by view contrastive learning."""

    def __init__(self, resolution: int = 48, embed_dim: int = 64, seed: int = 0):
        rng = np.random.default_rng([seed, 53])
        self.resolution = resolution
        self.convs = [
            nn.Conv2d(3, 16, 4, rng, stride=2, padding=1),
            nn.Conv2d(16, 32, 4, rng, stride=2, padding=1),
            nn.Conv2d(32, 32, 4, rng, stride=2, padding=1),
        ]
        self.proj = nn.Linear(32, embed_dim, rng)

    def __call__(self, images: Tensor) -> Tensor:
        x = images
        for conv in self.convs:
            x = ops.relu(conv(x))
        x = ops.mean(x, axis=(1, 2))
        return nn.l2_normalize(self.proj(x))


def info_nce(sim_pos: Tensor, sim_negs: Tensor, cfg: ContrastiveConfig) -> Tensor:
    """-log[ exp(s_pos/tau) / sum_negs exp(s/tau) ].

    ``sim_pos`` is scalar-like, ``sim_negs`` a vector of negative
    similarities.  With the positive absent from the denominator the loss
    can go negative.
    """
    if cfg.temperature <= 0:
        raise ContractViolation("temperature must be positive")
    tau = cfg.temperature
    scaled = ops.mul(sim_negs, 1.0 / tau)
    if cfg.include_positive_in_denominator:
        scaled = ops.concat(
            [ops.reshape(ops.mul(sim_pos, 1.0 / tau), (1,)), scaled], axis=0)
    m = float(scaled.data.max())
    lse = ops.add(ops.log(ops.sum(ops.exp(ops.sub(scaled, m)))), m)
    return ops.sub(lse, ops.mul(sim_pos, 1.0 / tau))


def contrastive_loss(view_i, view_j, negatives: list, encoder: ViewEncoder,
                     cfg: ContrastiveConfig | None = None) -> Tensor:
    """View contrastive loss for one anchor.

    ``view_i`` / ``view_j`` are same-object images (H, W, 3); ``negatives``
    are images of other objects.  Cosine similarities use f_enc's unit
    embeddings.
    """
    cfg = cfg or ContrastiveConfig()
    if len(negatives) < 1:
        raise ContractViolation("contrastive_loss needs at least one negative")
    imgs = [view_i, view_j, *negatives]
    batch = ops.stack([v if isinstance(v, Tensor) else Tensor(np.asarray(v, dtype=np.float32))
                       for v in imgs], axis=0)
    emb = encoder(batch)
    anchor = emb[0:1]
    others = emb[1:]
    sims = ops.sum(ops.mul(anchor, others), axis=-1)  # (1 + K_neg,)
    return info_nce(sims[0], sims[1:], cfg)


def masked_token_ce(logits: Tensor, targets: np.ndarray, keep: np.ndarray) -> Tensor:
    """Mean cross entropy over positions where ``keep`` is True.

    ``logits`` (N, V), ``targets`` (N,), ``keep`` (N,) bool.  Exactly zero
    (constant) when nothing is kept.
    """
    if not keep.any():
        return Tensor(np.array(0.0, dtype=logits.dtype))
    keep_idx = np.nonzero(keep)[0]
    lp = ops.log_softmax(logits[keep_idx], axis=-1)
    picked = lp[np.arange(keep_idx.size), targets[keep_idx]]
    return ops.neg(ops.mean(picked))


def combine_losses(terms: dict[str, Tensor], weights: LossWeights) -> Tensor:
    """Exact weighted sum in the fixed term order."""
    wdict = weights.as_dict()
    total = None
    for name in TERM_ORDER:
        contribution = ops.mul(terms[name], wdict[name])
        total = contribution if total is None else ops.add(total, contribution)
    return total


def decode_predicted_image(logits: Tensor, layout: SequenceLayout,
                           codebook: Tensor, decoder_fn) -> tuple[Tensor, np.ndarray]:
    """Teacher-forced image decode with straight-through gradients.

    Forward: per-position argmax over the image-code block of the logits
    that predict each target token, mapped through the codebook and the
    pixel decoder.  Backward: gradients flow through the softmax-weighted
    mixture of code vectors into the logits.

    Returns (images (B, H, W, 3), argmax grids (B, n_i)).
    """
    b = logits.shape[0]
    n_i = layout.n_i
    side = int(round(np.sqrt(n_i)))
    pred_positions = slice(layout.sep_target_pos, layout.sep_target_pos + n_i)
    block = logits[:, pred_positions, layout.image_base:layout.image_base + layout.image_vocab]
    idx = block.data.argmax(axis=-1)                      # (B, n_i)
    hard = codebook.data[idx]                             # (B, n_i, n_z)
    soft = ops.matmul(ops.softmax(block, axis=-1), codebook)
    z = ops.straight_through(hard.astype(soft.dtype), soft)
    z = ops.reshape(z, (b, side, side, codebook.shape[1]))
    return decoder_fn(z), idx
