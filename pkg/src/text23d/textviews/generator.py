"""Text-to-views generator: model bundle, batch assembly, training loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, ops
from ..captionsim import DualEncoder, similarity
from ..errors import ContractViolation
from ..scene.dataset import Dataset
from ..tokens.bpe import BPETokenizer
from ..tokens.vq import VQTokenizer
from .layout import NUM_POSES, SequenceLayout
from .losses import (
    ContrastiveConfig,
    LossWeights,
    ViewEncoder,
    combine_losses,
    decode_predicted_image,
    info_nce,
    masked_token_ce,
)
from .model import TransformerConfig, ViewTransformer


class TextToViews:
    """Transformer + f_enc on top of a frozen tokenizer and dual encoder."""

    def __init__(self, vq: VQTokenizer, bpe: BPETokenizer, clip: DualEncoder,
                 transformer_cfg: TransformerConfig | None = None, seed: int = 0,
                 prior_guidance: bool = True,
                 weights: LossWeights | None = None,
                 contrastive: ContrastiveConfig | None = None):
        self.vq = vq
        self.bpe = bpe
        self.clip = clip
        self.vq.freeze()
        self.clip.freeze()
        self.layout = SequenceLayout(
            n_t=bpe.max_len, n_i=vq.grid_size * vq.grid_size,
            caption_vocab=bpe.vocab_size, image_vocab=vq.codebook_size)
        self.transformer = ViewTransformer(
            self.layout.vocab_size, self.layout.total_len,
            transformer_cfg or TransformerConfig(), seed=seed)
        self.view_encoder = ViewEncoder(resolution=vq.resolution, seed=seed)
        self.prior_guidance = prior_guidance
        self.weights = weights or LossWeights()
        self.contrastive = contrastive or ContrastiveConfig()

    def parameters(self):
        return self.transformer.parameters() + self.view_encoder.parameters()

    def named_parameters(self):
        return (self.transformer.named_parameters("transformer.")
                + self.view_encoder.named_parameters("view_encoder."))

    def state_dict(self):
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        for name, p in self.named_parameters():
            p.data = np.asarray(state[name]).astype(p.data.dtype)

    def caption_ids(self, caption: str) -> np.ndarray:
        return np.asarray(self.bpe.pad(self.bpe.encode(caption)), dtype=np.int64)


@dataclass
class TokenizedObject:
    object_index: int
    caption: str
    caption_ids: np.ndarray      # (N_T,) padded
    grids: np.ndarray            # (36, n_i) int64 flat token grids
    pixels: np.ndarray           # (36, H, W, 3) float32 white-composited


def tokenize_dataset(dataset: Dataset, model: TextToViews,
                     split: str = "train") -> list[TokenizedObject]:
    """Precompute token grids and white-composited pixels for a split."""
    out = []
    for i, obj in enumerate(dataset.objects):
        if obj.split != split:
            continue
        grids = np.stack([
            model.vq.tokenize_image(obj.white_view(v)).flat()
            for v in range(obj.images.shape[0])
        ])
        pixels = np.stack([obj.white_view(v) for v in range(obj.images.shape[0])])
        out.append(TokenizedObject(
            object_index=i, caption=obj.caption,
            caption_ids=model.caption_ids(obj.caption),
            grids=grids.astype(np.int64), pixels=pixels.astype(np.float32)))
    return out


@dataclass
class Batch:
    """2 views per object; arrays indexed [object * 2 + view_slot]."""
    sequences: np.ndarray        # (B, L)
    caption_ids: np.ndarray      # (B, N_T)
    target_pixels: np.ndarray    # (B, H, W, 3)
    prior_unmasked: np.ndarray   # (B,) bool
    n_objects: int


def build_batch(objects: list[TokenizedObject], model: TextToViews,
                rng: np.random.Generator, n_objects: int) -> Batch:
    """Sample ``n_objects`` objects x 2 poses with 50% prior masking.

    The prior of pose k is the ground-truth grid of pose (k-1) mod 36
    (rig adjacency wraps around).  With prior guidance disabled the prior
    segment is always masked.
    """
    if len(objects) < n_objects:
        raise ContractViolation("not enough objects for the requested batch")
    chosen = rng.choice(len(objects), size=n_objects, replace=False)
    sequences, caption_ids, pixels, unmasked = [], [], [], []
    for oi in chosen:
        obj = objects[int(oi)]
        poses = rng.choice(NUM_POSES, size=2, replace=False)
        for k in poses:
            k = int(k)
            prior_grid = obj.grids[(k - 1) % NUM_POSES]
            use_prior = model.prior_guidance and rng.uniform() < 0.5
            sequences.append(model.layout.build_sequence(
                k, obj.caption_ids,
                prior_grid if use_prior else None, obj.grids[k]))
            caption_ids.append(obj.caption_ids)
            pixels.append(obj.pixels[k])
            unmasked.append(use_prior)
    return Batch(
        sequences=np.stack(sequences), caption_ids=np.stack(caption_ids),
        target_pixels=np.stack(pixels),
        prior_unmasked=np.asarray(unmasked), n_objects=n_objects)


def training_loss(model: TextToViews, batch: Batch) -> tuple[Tensor, dict[str, float]]:
    """Total Eq.-style objective plus a per-term float report."""
    if batch.n_objects < 2:
        raise ContractViolation("training batch needs >= 2 objects for negatives")
    layout = model.layout
    seq = batch.sequences
    b = seq.shape[0]
    logits = model.transformer(seq)

    terms: dict[str, Tensor] = {}
    # pose: predicted from BOS
    terms["pose"] = masked_token_ce(
        logits[:, 0, :], seq[:, layout.pose_pos], np.ones(b, dtype=bool))
    # caption: positions 1 .. n_t predict tokens at 2 .. n_t+1, pads excluded
    cap_logits = ops.reshape(
        logits[:, 1:1 + layout.n_t, :], (b * layout.n_t, layout.vocab_size))
    cap_targets = seq[:, layout.caption_slice].reshape(-1)
    terms["txt"] = masked_token_ce(
        cap_logits, cap_targets, cap_targets != layout.caption_token(0))
    # prior: only samples whose prior segment is unmasked contribute
    prior_logits = ops.reshape(
        logits[:, layout.sep_prior_pos:layout.sep_prior_pos + layout.n_i, :],
        (b * layout.n_i, layout.vocab_size))
    prior_targets = batch.sequences[:, layout.prior_slice].reshape(-1)
    prior_keep = np.repeat(batch.prior_unmasked, layout.n_i)
    terms["prior"] = masked_token_ce(prior_logits, prior_targets, prior_keep)
    # target image tokens
    img_logits = ops.reshape(
        logits[:, layout.sep_target_pos:layout.sep_target_pos + layout.n_i, :],
        (b * layout.n_i, layout.vocab_size))
    img_targets = seq[:, layout.target_slice].reshape(-1)
    terms["img"] = masked_token_ce(
        img_logits, img_targets, np.ones_like(img_targets, dtype=bool))

    # pixel-level terms via the straight-through decode
    decoded, _ = decode_predicted_image(
        logits, layout, model.vq.codebook, model.vq.codes_to_image)
    terms["pixel"] = ops.mean(ops.abs(ops.sub(decoded, Tensor(batch.target_pixels))))
    sims = similarity(model.clip, decoded, batch.caption_ids)
    terms["caption"] = ops.neg(ops.mean(sims))

    # view contrastive: anchors are every decoded view; the positive is the
    # same object's other view; negatives are other objects' same-slot views
    emb = model.view_encoder(decoded)
    sim_matrix = ops.matmul(emb, ops.transpose(emb))
    losses = []
    n_obj = batch.n_objects
    for o in range(n_obj):
        for s in range(2):
            i = 2 * o + s
            j = 2 * o + (1 - s)
            negs = np.asarray([2 * oo + s for oo in range(n_obj) if oo != o])
            losses.append(info_nce(sim_matrix[i, j], sim_matrix[i, negs],
                                   model.contrastive))
    terms["contrastive"] = ops.mean(ops.stack(losses))

    total = combine_losses(terms, model.weights)
    report = {name: t.item() for name, t in terms.items()}
    report["total"] = total.item()
    return total, report


def train_text_to_views(model: TextToViews, objects: list[TokenizedObject],
                        steps: int = 2000, batch_objects: int = 3,
                        lr: float = 1e-3, schedule: str = "cosine", seed: int = 0,
                        start_step: int = 0, stop_step: int | None = None,
                        optimizer=None,
                        log_every: int = 0, log_fn=print):
    """AdamW (beta2 0.96) with cosine-annealed LR; returns (term log, opt)."""
    from ..autodiff.optim import AdamW, Schedule
    opt = optimizer or AdamW(
        model.parameters(), lr=lr, betas=(0.9, 0.96), weight_decay=1e-4,
        schedule=Schedule(schedule, lr, total_steps=steps))
    log: list[dict[str, float]] = []
    for step in range(start_step, steps if stop_step is None else min(steps, stop_step)):
        rng = np.random.default_rng([seed, 47, step])
        batch = build_batch(objects, model, rng, batch_objects)
        total, report = training_loss(model, batch)
        opt.zero_grad()
        total.backward()
        opt.step()
        report["step"] = step
        log.append(report)
        if log_every and step % log_every == 0:
            log_fn(f"t2v step {step}: total {report['total']:.4f} "
                   f"img {report['img']:.3f} pixel {report['pixel']:.3f}")
    return log, opt
