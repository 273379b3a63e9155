"""Caption-image similarity: a small dual encoder trained from scratch.

Image tower: strided convs + global average pool + projection.  Text tower:
token embedding, mean pool over non-pad positions, projection.  Both emit
unit-norm vectors; ``similarity`` is their cosine and ``clip_score`` is
100x the mean similarity over a list of views.  The encoder is trained
with a symmetric cross-entropy over the in-batch similarity matrix and
then frozen for downstream use.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, nn, no_grad, ops
from .autodiff.optim import AdamW
from .errors import ContractViolation
from .tokens.bpe import PAD_ID, BPETokenizer

EMBED_DIM = 64


class DualEncoder(nn.Module):
    def __init__(self, resolution: int = 48, text_vocab: int = 512,
                 max_caption_len: int = 32, embed_dim: int = EMBED_DIM,
                 seed: int = 0):
        rng = np.random.default_rng([seed, 23])
        self.resolution = resolution
        self.max_caption_len = max_caption_len
        self.embed_dim = embed_dim
        self.image_convs = [
            nn.Conv2d(3, 16, 4, rng, stride=2, padding=1),
            nn.Conv2d(16, 32, 4, rng, stride=2, padding=1),
            nn.Conv2d(32, 32, 4, rng, stride=2, padding=1),
        ]
        self.image_proj = nn.Linear(32, embed_dim, rng)
        self.token_embed = nn.Embedding(text_vocab, embed_dim, rng)
        self.text_proj = nn.Linear(embed_dim, embed_dim, rng)
        # exp(logit_scale) multiplies the similarity matrix during training only
        self.logit_scale = Tensor(np.array(np.log(1.0 / 0.07), dtype=np.float32),
                                  requires_grad=True)

    def embed_images(self, images: Tensor) -> Tensor:
        """(B, H, W, 3) -> (B, d) unit vectors."""
        if images.shape[1] != self.resolution:
            raise ContractViolation(
                f"expected {self.resolution}px images, got {images.shape}")
        x = images
        for conv in self.image_convs:
            x = ops.relu(conv(x))
        x = ops.mean(x, axis=(1, 2))
        return nn.l2_normalize(self.image_proj(x))

    def embed_texts(self, ids: np.ndarray) -> Tensor:
        """(B, N_T) padded token ids -> (B, d) unit vectors."""
        ids = np.asarray(ids)
        emb = self.token_embed(ids)
        mask = (ids != PAD_ID).astype(np.float32)[..., None]
        summed = ops.sum(ops.mul(emb, Tensor(mask)), axis=1)
        counts = np.maximum(mask.sum(axis=1), 1.0)
        pooled = ops.div(summed, Tensor(counts))
        return nn.l2_normalize(self.text_proj(pooled))


def similarity(encoder: DualEncoder, image: Tensor | np.ndarray,
               caption_ids: np.ndarray) -> Tensor:
    """Cosine similarity in [-1, 1]; differentiable w.r.t. image pixels."""
    img = image if isinstance(image, Tensor) else Tensor(np.asarray(image, dtype=np.float32))
    if img.ndim == 3:
        img = ops.reshape(img, (1,) + img.shape)
    ids = np.asarray(caption_ids)
    if ids.ndim == 1:
        ids = ids[None]
    ie = encoder.embed_images(img)
    te = encoder.embed_texts(ids)
    return ops.sum(ops.mul(ie, te), axis=-1)


def clip_score(encoder: DualEncoder, views: list[np.ndarray], caption_ids: np.ndarray) -> float:
    """100x mean cosine similarity between the views and the caption."""
    if len(views) == 0:
        raise ContractViolation("clip_score needs at least one view")
    with no_grad():
        batch = Tensor(np.stack(views).astype(np.float32))
        sims = similarity(encoder, batch, np.broadcast_to(
            np.asarray(caption_ids)[None], (len(views), len(caption_ids))))
    return float(100.0 * sims.data.mean())


def _caption_ids(bpe: BPETokenizer, caption: str) -> list[int]:
    return bpe.pad(bpe.encode(caption))


def train_dual_encoder(pairs: list[tuple[np.ndarray, str]], bpe: BPETokenizer,
                       encoder: DualEncoder, steps: int = 1000,
                       batch_size: int = 16, lr: float = 2e-3, seed: int = 0,
                       start_step: int = 0, stop_step: int | None = None,
                       optimizer: AdamW | None = None,
                       log_every: int = 0, log_fn=print):
    """Symmetric-CE contrastive training on (white-composited view, caption) pairs.

    Batches draw pairs with mutually distinct captions so in-batch targets
    are unambiguous.  Returns (loss log, optimizer).
    """
    captions = {c for _, c in pairs}
    if len(captions) < 2:
        raise ContractViolation("training needs at least 2 distinct captions")
    by_caption: dict[str, list[int]] = {}
    for i, (_, cap) in enumerate(pairs):
        by_caption.setdefault(cap, []).append(i)
    caption_list = sorted(by_caption)
    ids_cache = {c: np.asarray(_caption_ids(bpe, c)) for c in caption_list}

    params = encoder.parameters()
    opt = optimizer or AdamW(params, lr=lr, betas=(0.9, 0.96), weight_decay=1e-4)
    log: list[tuple[int, float]] = []
    for step in range(start_step, steps if stop_step is None else min(steps, stop_step)):
        rng = np.random.default_rng([seed, 31, step])
        k = min(batch_size, len(caption_list))
        chosen = rng.choice(len(caption_list), size=k, replace=False)
        imgs, txts = [], []
        for ci in chosen:
            cap = caption_list[ci]
            idx = by_caption[cap][int(rng.integers(0, len(by_caption[cap])))]
            imgs.append(pairs[idx][0])
            txts.append(ids_cache[cap])
        img_emb = encoder.embed_images(Tensor(np.stack(imgs).astype(np.float32)))
        txt_emb = encoder.embed_texts(np.stack(txts))
        scale = ops.exp(encoder.logit_scale)
        logits = ops.mul(ops.matmul(img_emb, ops.transpose(txt_emb)), scale)
        targets = np.arange(k)
        loss_i = ops.softmax_cross_entropy(logits, targets)
        loss_t = ops.softmax_cross_entropy(ops.transpose(logits), targets)
        loss = ops.mul(ops.add(loss_i, loss_t), 0.5)
        opt.zero_grad()
        loss.backward()
        opt.step()
        # keep the temperature in a sane band, mirroring common practice
        encoder.logit_scale.data = np.clip(encoder.logit_scale.data, 0.0, np.log(100.0))
        log.append((step, loss.item()))
        if log_every and step % log_every == 0:
            log_fn(f"captionsim step {step}: loss {loss.item():.5f}")
    return log, opt


def retrieval_accuracy(encoder: DualEncoder, images: list[np.ndarray],
                       caption_ids: list[np.ndarray]) -> float:
    """Top-1 caption->image retrieval over matched lists."""
    with no_grad():
        ie = encoder.embed_images(Tensor(np.stack(images).astype(np.float32)))
        te = encoder.embed_texts(np.stack(caption_ids))
    sims = te.data @ ie.data.T
    return float((sims.argmax(axis=1) == np.arange(len(images))).mean())
