"""Autoregressive view sampling: single views and chained multi-view generation."""

from __future__ import annotations

import numpy as np

from ..autodiff import no_grad
from ..errors import ContractViolation
from ..scene.camera import CameraPose, camera_rig
from .generator import TextToViews
from .layout import NUM_POSES


def sample_view(model: TextToViews, caption_ids: np.ndarray, pose_index: int,
                prior: np.ndarray | None, mode: str = "greedy",
                top_k: int = 8, rng: np.random.Generator | None = None
                ) -> tuple[np.ndarray, np.ndarray]:
    """Generate the N_I image tokens for one view, left to right.

    Decoding is constrained to the image-code block of the vocabulary, so
    every sampled token is a valid codebook id.  Greedy mode is
    deterministic; ``top_k`` mode needs an rng.

    Returns (flat token grid (n_i,), decoded image (H, W, 3)).
    """
    if mode not in ("greedy", "topk"):
        raise ContractViolation(f"unknown sampling mode: {mode}")
    if mode == "topk" and rng is None:
        raise ContractViolation("top-k sampling needs an rng")
    layout = model.layout
    seq = layout.build_sequence(pose_index, caption_ids, prior, None)
    base = layout.image_base
    k_codes = layout.image_vocab
    start = layout.target_slice.start
    with no_grad():
        for t in range(layout.n_i):
            prefix = seq[None, :start + t]
            logits = model.transformer(prefix)
            block = logits.data[0, -1, base:base + k_codes]
            if mode == "greedy":
                code = int(block.argmax())
            else:
                k = min(top_k, k_codes)
                top = np.argpartition(block, -k)[-k:]
                z = block[top] - block[top].max()
                p = np.exp(z)
                p /= p.sum()
                code = int(top[rng.choice(k, p=p)])
            seq[start + t] = base + code
    grid_flat = (seq[layout.target_slice] - base).astype(np.int64)
    side = model.vq.grid_size
    from ..tokens.vq import ImageTokenGrid
    image = model.vq.detokenize_image(
        ImageTokenGrid(grid_flat.reshape(side, side), model.vq.resolution))
    return grid_flat, image


def generate_views(model: TextToViews, caption: str, n_views: int,
                   mode: str = "greedy", top_k: int = 8,
                   rng: np.random.Generator | None = None,
                   resolution: int | None = None,
                   fov_deg: float = 40.0, camera_radius: float = 2.7,
                   elevation_deg: float = -30.0
                   ) -> list[tuple[np.ndarray, np.ndarray, CameraPose]]:
    """Chained multi-view generation at rig poses 0..n_views-1.

    View 0 samples with a masked prior; view k conditions on the grid
    generated for view k-1.  Returns (grid, image, pose) triples.
    """
    if not 1 <= n_views <= NUM_POSES:
        raise ContractViolation(f"n_views must lie in [1, {NUM_POSES}]")
    caption_ids = model.caption_ids(caption)
    resolution = resolution or model.vq.resolution
    out = []
    prior = None
    for k in range(n_views):
        grid, image = sample_view(model, caption_ids, k, prior,
                                  mode=mode, top_k=top_k, rng=rng)
        pose = camera_rig(k, resolution, fov_deg, camera_radius, elevation_deg)
        out.append((grid, image, pose))
        prior = grid
    return out
