"""Deterministic analytic reference renderer.

Flat Lambertian shading under a single fixed directional light plus an
ambient term.  The alpha channel is exactly 0 where no primitive is hit;
this renderer is the ground-truth oracle for the whole pipeline.
"""

from __future__ import annotations

import numpy as np

from .camera import CameraPose, pixel_rays
from .objects import SceneSpec, build_primitives

_LIGHT_DIR = np.array([0.35, 0.9, 0.25])
_LIGHT_DIR = _LIGHT_DIR / np.linalg.norm(_LIGHT_DIR)
_AMBIENT = 0.35


def render_reference(spec: SceneSpec, pose: CameraPose) -> np.ndarray:
    """Ray-trace a spec from a pose; returns (H, W, 4) float32 RGBA in [0, 1]."""
    prims = build_primitives(spec)
    origin, dirs = pixel_rays(pose)
    h, w = dirs.shape[:2]

    best_t = np.full((h, w), np.inf)
    rgb = np.zeros((h, w, 3))
    for prim in prims:
        t, normals = prim.intersect(origin, dirs)
        closer = t < best_t
        if not closer.any():
            continue
        lam = np.clip(normals @ _LIGHT_DIR, 0.0, 1.0)
        shade = _AMBIENT + (1.0 - _AMBIENT) * lam
        color = prim.color[None, None, :] * (shade * prim.shade)[..., None]
        rgb = np.where(closer[..., None], color, rgb)
        best_t = np.where(closer, t, best_t)

    alpha = np.isfinite(best_t).astype(np.float64)
    out = np.concatenate([np.clip(rgb, 0.0, 1.0), alpha[..., None]], axis=-1)
    return out.astype(np.float32)


def composite_white(rgba: np.ndarray) -> np.ndarray:
    """Flatten RGBA onto a white background; returns (H, W, 3)."""
    rgb = rgba[..., :3]
    alpha = rgba[..., 3:4]
    return rgb * alpha + (1.0 - alpha)
