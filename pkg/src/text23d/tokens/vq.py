"""Vector-quantized image autoencoder.

Encoder downsamples by a power-of-two factor to an (h, w, n_z) feature
map; each cell is replaced by its nearest codebook vector (squared
Euclidean, lowest-index tie-break) with a straight-through gradient; the
decoder maps the quantized map back to pixels.  Trained with
reconstruction + codebook + 0.25*commitment losses; codes unused for 200
consecutive steps are reseeded from encoder outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, nn, no_grad, ops
from ..autodiff.optim import AdamW
from ..errors import ContractViolation

DEAD_CODE_STEPS = 200
COMMITMENT_COEF = 0.25


@dataclass
class ImageTokenGrid:
    indices: np.ndarray      # (h, w) int64
    source_resolution: int

    @property
    def num_tokens(self) -> int:
        return int(self.indices.size)

    def flat(self) -> np.ndarray:
        return self.indices.reshape(-1)


def nearest_code_indices(features: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Exhaustive squared-distance argmin; ties resolve to the lowest index."""
    if features.shape[-1] != codes.shape[-1]:
        raise ContractViolation(
            f"feature dim {features.shape[-1]} != code dim {codes.shape[-1]}")
    diff = features[..., None, :] - codes  # (..., K, n_z)
    dist = (diff * diff).sum(axis=-1)
    return np.argmin(dist, axis=-1)


def vq_quantize(features: Tensor | np.ndarray, codebook: Tensor | np.ndarray):
    """Quantize an (h, w, n_z) map; returns (ImageTokenGrid, straight-through F̂)."""
    feat = features if isinstance(features, Tensor) else Tensor(features)
    codes = codebook.data if isinstance(codebook, Tensor) else np.asarray(codebook)
    idx = nearest_code_indices(feat.data, codes)
    hard = codes[idx].astype(feat.dtype)
    quantized = ops.straight_through(hard, feat)
    side = int(round(np.sqrt(idx.size))) if idx.ndim == 2 else 0
    grid = ImageTokenGrid(indices=idx.astype(np.int64),
                          source_resolution=side)
    return grid, quantized


class VQTokenizer(nn.Module):
    """Encoder / decoder / codebook triple."""

    def __init__(self, resolution: int = 48, codebook_size: int = 128,
                 code_dim: int = 32, downsample: int = 8, seed: int = 0):
        levels = int(round(np.log2(downsample)))
        if 2 ** levels != downsample or levels < 1:
            raise ContractViolation("downsample must be a power of two >= 2")
        if resolution % downsample:
            raise ContractViolation("resolution must be divisible by downsample")
        rng = np.random.default_rng([seed, 17])
        self.resolution = resolution
        self.codebook_size = codebook_size
        self.code_dim = code_dim
        self.downsample = downsample
        self.grid_size = resolution // downsample

        widths = [32 * min(2 ** i, 2) for i in range(levels - 1)]  # 32, 64, 64...
        enc_dims = [3] + widths + [code_dim]
        self.encoder_convs = [
            nn.Conv2d(a, b, 4, rng, stride=2, padding=1)
            for a, b in zip(enc_dims[:-1], enc_dims[1:])
        ]
        dec_dims = [code_dim] + widths[::-1] + [3]
        self.decoder_convs = [
            nn.ConvTranspose2d(a, b, 4, rng, stride=2, padding=1)
            for a, b in zip(dec_dims[:-1], dec_dims[1:])
        ]
        bound = 1.0 / codebook_size
        self.codebook = Tensor(
            rng.uniform(-bound, bound, size=(codebook_size, code_dim))
            .astype(np.float32), requires_grad=True)

    # -- differentiable pieces ---------------------------------------------

    def encode(self, images: Tensor) -> Tensor:
        """(B, H, W, 3) -> (B, h, w, n_z)."""
        if images.shape[1] != self.resolution or images.shape[2] != self.resolution:
            raise ContractViolation(
                f"expected {self.resolution}x{self.resolution} input, got {images.shape}")
        x = images
        for i, conv in enumerate(self.encoder_convs):
            x = conv(x)
            if i < len(self.encoder_convs) - 1:
                x = ops.relu(x)
        return x

    def decode(self, z: Tensor) -> Tensor:
        """(B, h, w, n_z) -> (B, H, W, 3) in [0, 1] (sigmoid head)."""
        x = z
        for i, conv in enumerate(self.decoder_convs):
            x = conv(x)
            if i < len(self.decoder_convs) - 1:
                x = ops.relu(x)
        return ops.sigmoid(x)

    # -- frozen-tokenizer interface ------------------------------------------

    def tokenize_image(self, image: np.ndarray) -> ImageTokenGrid:
        """Deterministic (H, W, 3) -> token grid."""
        if image.shape[:2] != (self.resolution, self.resolution):
            raise ContractViolation(
                f"expected {self.resolution}x{self.resolution} image, got {image.shape}")
        with no_grad():
            feat = self.encode(Tensor(image[None].astype(np.float32)))
        idx = nearest_code_indices(feat.data[0], self.codebook.data)
        return ImageTokenGrid(indices=idx.astype(np.int64),
                              source_resolution=self.resolution)

    def detokenize_image(self, grid: ImageTokenGrid) -> np.ndarray:
        """Token grid -> (H, W, 3) pixels clamped to [0, 1]."""
        idx = grid.indices
        if idx.min() < 0 or idx.max() >= self.codebook_size:
            raise IndexError(
                f"token index out of range [0, {self.codebook_size})")
        z = self.codebook.data[idx][None]
        with no_grad():
            img = self.decode(Tensor(z.astype(np.float32)))
        return np.clip(img.data[0], 0.0, 1.0)

    def codes_to_image(self, z: Tensor) -> Tensor:
        """Differentiable decode of (B, h, w, n_z) code vectors (weights frozen)."""
        return self.decode(z)


def train_image_tokenizer(images: np.ndarray, tokenizer: VQTokenizer,
                          steps: int = 500, batch_size: int = 16,
                          lr: float = 2e-3, seed: int = 0,
                          start_step: int = 0, stop_step: int | None = None,
                          optimizer: AdamW | None = None,
                          log_every: int = 0, log_fn=print):
    """Train on (N, H, W, 3) white-composited renders; returns (loss log, opt)."""
    if len(images) < 1:
        raise ContractViolation("train_image_tokenizer needs at least 1 image")
    params = tokenizer.parameters()
    opt = optimizer or AdamW(params, lr=lr, betas=(0.9, 0.96), weight_decay=0.0)
    unused_steps = np.zeros(tokenizer.codebook_size, dtype=np.int64)
    log: list[tuple[int, float]] = []
    for step in range(start_step, steps if stop_step is None else min(steps, stop_step)):
        rng = np.random.default_rng([seed, 101, step])
        take = rng.integers(0, len(images), size=min(batch_size, len(images)))
        batch = Tensor(images[take].astype(np.float32))
        feat = tokenizer.encode(batch)
        idx = nearest_code_indices(feat.data, tokenizer.codebook.data)
        hard = tokenizer.codebook.data[idx].astype(feat.dtype)
        recon = tokenizer.decode(ops.straight_through(hard, feat))
        recon_loss = ops.mean(ops.pow_const(ops.sub(recon, batch), 2))
        z_sel = ops.embedding(tokenizer.codebook, idx.reshape(-1))
        codebook_loss = ops.mean(ops.pow_const(
            ops.sub(z_sel, Tensor(feat.data.reshape(-1, tokenizer.code_dim))), 2))
        commit_loss = ops.mean(ops.pow_const(ops.sub(feat, Tensor(hard)), 2))
        loss = ops.add(recon_loss,
                       ops.add(codebook_loss, ops.mul(commit_loss, COMMITMENT_COEF)))
        opt.zero_grad()
        loss.backward()
        opt.step()

        # dead-code bookkeeping and reseeding
        used = np.zeros(tokenizer.codebook_size, dtype=bool)
        used[np.unique(idx)] = True
        unused_steps = np.where(used, 0, unused_steps + 1)
        dead = np.nonzero(unused_steps >= DEAD_CODE_STEPS)[0]
        if dead.size:
            flat = feat.data.reshape(-1, tokenizer.code_dim)
            rows = rng.integers(0, flat.shape[0], size=dead.size)
            tokenizer.codebook.data[dead] = flat[rows]
            unused_steps[dead] = 0
        log.append((step, loss.item()))
        if log_every and step % log_every == 0:
            log_fn(f"tokenizer step {step}: loss {loss.item():.5f}")
    return log, opt
