"""Views-to-3D training: 9-of-36 conditioning views, 128 target rays per
object, dilated-alpha-mask ray restriction during the early phase."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, ops
from ..autodiff.optim import AdamW, Schedule
from ..errors import ContractViolation
from ..metrics import psnr
from ..scene.camera import pixel_rays
from ..scene.dataset import ObjectRecord
from .field import RadianceField
from .render import render_rays, render_view

COND_VIEWS = 9
RAYS_PER_OBJECT = 128
BBOX_FRACTION = 0.2
MASK_DILATION = 3


def dilate_mask(mask: np.ndarray, radius: int = MASK_DILATION) -> np.ndarray:
    """Binary dilation by a square structuring element."""
    out = mask.copy()
    h, w = mask.shape
    for di in range(-radius, radius + 1):
        for dj in range(-radius, radius + 1):
            if di == 0 and dj == 0:
                continue
            shifted = np.zeros_like(mask)
            src = mask[max(0, -di):h - max(0, di), max(0, -dj):w - max(0, dj)]
            shifted[max(0, di):h - max(0, -di), max(0, dj):w - max(0, -dj)] = src
            out |= shifted
    return out


def train_step(field: RadianceField, objects: list[ObjectRecord],
               rng: np.random.Generator, cond_count: int = COND_VIEWS,
               rays: int = RAYS_PER_OBJECT, n_samples: int = 64,
               bbox_phase: bool = False) -> Tensor:
    """MSE between rendered and ground-truth ray colors, averaged over objects.

    Per object: ``cond_count`` conditioning views drawn uniformly without
    replacement, ``rays`` target rays from one held-out view.  During the
    bounding-box phase rays come only from the dilated alpha mask.
    """
    if not objects:
        raise ContractViolation("train_step needs at least one object")
    losses = []
    for obj in objects:
        n_views = obj.images.shape[0]
        if n_views < cond_count + 1:
            raise ContractViolation(
                f"object {obj.object_id} has {n_views} views; "
                f"need {cond_count + 1} (conditioning + target)")
        picked = rng.choice(n_views, size=cond_count + 1, replace=False)
        cond_idx, target_idx = picked[:cond_count], int(picked[cond_count])
        cond_imgs = np.stack([obj.white_view(int(v)) for v in cond_idx])
        features = field.extract_features(cond_imgs.astype(np.float32))
        cond_poses = [obj.poses[int(v)] for v in cond_idx]

        target_pose = obj.poses[target_idx]
        gt = obj.white_view(target_idx).reshape(-1, 3)
        if bbox_phase:
            mask = dilate_mask(obj.images[target_idx][..., 3] > 0)
            candidates = np.flatnonzero(mask.reshape(-1))
            if candidates.size == 0:
                candidates = np.arange(gt.shape[0])
        else:
            candidates = np.arange(gt.shape[0])
        chosen = rng.choice(candidates, size=rays,
                            replace=candidates.size < rays)
        origin, dir_map = pixel_rays(target_pose)
        dirs = dir_map.reshape(-1, 3)[chosen]

        rgb, _, _ = render_rays(
            origin, dirs,
            lambda pts, ds: field.query(pts, ds, features, cond_poses),
            n_samples=n_samples, rng=rng)
        diff = ops.sub(rgb, Tensor(gt[chosen].astype(np.float32)))
        losses.append(ops.mean(ops.mul(diff, diff)))
    return ops.mean(ops.stack(losses))


def train_views_to_3d(field: RadianceField, objects: list[ObjectRecord],
                      steps: int = 5000, batch_objects: int = 1,
                      lr: float = 1e-3, seed: int = 0,
                      cond_count: int = COND_VIEWS, rays: int = RAYS_PER_OBJECT,
                      n_samples: int = 64, bbox_fraction: float = BBOX_FRACTION,
                      start_step: int = 0, stop_step: int | None = None,
                      optimizer: AdamW | None = None,
                      log_every: int = 0, log_fn=print):
    """Adam-style training (weight decay 0) with cosine LR; returns (log, opt).

    ``steps`` is the full-run length (the LR schedule and bbox phase depend
    on it); ``start_step``/``stop_step`` delimit a partial run for resume.
    """
    opt = optimizer or AdamW(field.parameters(), lr=lr, betas=(0.9, 0.96),
                             weight_decay=0.0,
                             schedule=Schedule("cosine", lr, total_steps=steps))
    log: list[tuple[int, float]] = []
    for step in range(start_step, steps if stop_step is None else min(steps, stop_step)):
        rng = np.random.default_rng([seed, 61, step])
        idx = rng.choice(len(objects), size=min(batch_objects, len(objects)),
                         replace=False)
        bbox_phase = step < bbox_fraction * steps
        loss = train_step(field, [objects[int(i)] for i in idx], rng,
                          cond_count=cond_count, rays=rays,
                          n_samples=n_samples, bbox_phase=bbox_phase)
        opt.zero_grad()
        loss.backward()
        opt.step()
        log.append((step, loss.item()))
        if log_every and step % log_every == 0:
            log_fn(f"v23d step {step}: loss {loss.item():.5f}")
    return log, opt


def evenly_spaced_views(n: int, total: int = 36, exclude: int | None = None) -> list[int]:
    """Deterministic near-uniform pose subset for evaluation."""
    picks = [int(round(i * total / n)) % total for i in range(n)]
    if exclude is not None:
        picks = [(p + 1) % total if p == exclude else p for p in picks]
    seen = []
    for p in picks:
        while p in seen:
            p = (p + 1) % total
        seen.append(p)
    return seen


def reconstruction_psnr(field: RadianceField, obj: ObjectRecord,
                        cond_indices: list[int], target_index: int,
                        n_samples: int = 64, chunk: int = 512) -> float:
    """Render a held-out view from GT conditioning views and PSNR it."""
    cond_imgs = np.stack([obj.white_view(v) for v in cond_indices]).astype(np.float32)
    features = field.extract_features(cond_imgs)
    cond_poses = [obj.poses[v] for v in cond_indices]
    rgb, _, _ = render_view(field, features, cond_poses, obj.poses[target_index],
                            n_samples=n_samples, chunk=chunk)
    return psnr(rgb, obj.white_view(target_index))


def mean_color_baseline_psnr(obj: ObjectRecord, target_index: int) -> float:
    """PSNR of the constant image equal to the target view's mean color."""
    gt = obj.white_view(target_index)
    baseline = np.broadcast_to(gt.reshape(-1, 3).mean(axis=0), gt.shape)
    return psnr(baseline, gt)
