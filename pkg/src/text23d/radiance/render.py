"""Volume rendering: stratified sampling, transmittance compositing over a
white background, expected depth."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, no_grad, ops
from ..errors import ContractViolation
from ..scene.camera import CameraPose, pixel_rays

SPHERE_MARGIN = 1.5   # near/far offsets around the unit object sphere
WEIGHT_EPS = 1e-8
EMPTY_WEIGHT = 1e-6


def sample_depths(n_rays: int, n_samples: int, near: float, far: float,
                  rng: np.random.Generator | None) -> np.ndarray:
    """Stratified depths: one sample per bin, or bin midpoints when rng is None."""
    if n_samples < 2:
        raise ContractViolation("need at least 2 samples per ray")
    if near >= far:
        raise ContractViolation(f"near {near} must be < far {far}")
    edges = np.linspace(near, far, n_samples + 1)
    width = edges[1] - edges[0]
    if rng is None:
        offsets = np.full((n_rays, n_samples), 0.5)
    else:
        offsets = rng.uniform(size=(n_rays, n_samples))
    return edges[:-1] + offsets * width


def composite(sigma: Tensor, color: Tensor, depths: np.ndarray, far: float):
    """Composite per-sample (sigma, color) along rays over a white background.

    ``sigma`` (R, S), ``color`` (R, S, 3), ``depths`` (R, S).  Returns
    (rgb (R, 3), transmittance T_end (R,), depth (R,)).  Transmittance is
    computed as exp(-cumsum sigma*delta), the numerically stable form of
    the product of (1 - alpha) factors.
    """
    r, s = sigma.shape
    deltas = np.empty((r, s), dtype=depths.dtype)
    deltas[:, :-1] = depths[:, 1:] - depths[:, :-1]
    deltas[:, -1] = far - depths[:, -1]
    deltas_t = Tensor(deltas.astype(sigma.dtype))

    tau = ops.mul(sigma, deltas_t)                       # sigma_k * delta_k
    accum = ops.cumsum(tau, axis=1)                      # inclusive prefix sums
    t_end = ops.exp(ops.neg(accum[:, -1:]))              # (R, 1)
    # exclusive prefix (sum over j < k): partial sums of non-negative terms
    # are exactly non-decreasing, so T_k is exactly non-increasing
    zeros = Tensor(np.zeros((r, 1), dtype=sigma.dtype))
    excl = ops.concat([zeros, accum[:, :-1]], axis=1)
    trans = ops.exp(ops.neg(excl))                       # T_k
    alpha = ops.sub(1.0, ops.exp(ops.neg(tau)))
    weights = ops.mul(trans, alpha)                       # (R, S)

    rgb_obj = ops.sum(ops.mul(ops.reshape(weights, (r, s, 1)), color), axis=1)
    rgb = ops.add(rgb_obj, t_end)                         # white background
    t_end = ops.reshape(t_end, (r,))
    wsum = ops.sum(weights, axis=1)
    depth_num = ops.sum(ops.mul(weights, Tensor(depths.astype(sigma.dtype))), axis=1)
    wsum_safe = np.maximum(wsum.data, WEIGHT_EPS)
    depth = ops.div(depth_num, Tensor(wsum_safe))
    depth_vals = np.where(wsum.data < EMPTY_WEIGHT,
                          np.full(r, far, dtype=depth.dtype), depth.data)
    depth = ops.straight_through(depth_vals.astype(depth.dtype), depth)
    return rgb, t_end, depth


def render_rays(origins: np.ndarray, dirs: np.ndarray, field_fn,
                n_samples: int = 64, near: float | None = None,
                far: float | None = None,
                rng: np.random.Generator | None = None):
    """Render a bundle of rays through ``field_fn(points, dirs) -> (sigma, color)``.

    near/far default to the unit-sphere bounds around the origin distance.
    Returns (rgb (R, 3), transmittance (R,), depth (R,)) as Tensors.
    """
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    r = dirs.shape[0]
    dist = float(np.linalg.norm(origins[0] if origins.ndim == 2 else origins))
    near = dist - SPHERE_MARGIN if near is None else near
    far = dist + SPHERE_MARGIN if far is None else far
    if near >= far:
        raise ContractViolation(f"near {near} must be < far {far}")
    depths = sample_depths(r, n_samples, near, far, rng)
    if origins.ndim == 1:
        origins = np.broadcast_to(origins, dirs.shape)
    points = origins[:, None, :] + dirs[:, None, :] * depths[..., None]
    flat_pts = points.reshape(-1, 3)
    flat_dirs = np.repeat(dirs, n_samples, axis=0)
    sigma, color = field_fn(flat_pts, flat_dirs)
    sigma = ops.reshape(sigma, (r, n_samples))
    color = ops.reshape(color, (r, n_samples, 3))
    return composite(sigma, color, depths, far)


def render_view(field, features: Tensor, cond_poses: list[CameraPose],
                pose: CameraPose, n_samples: int = 64,
                rng: np.random.Generator | None = None,
                chunk: int = 512):
    """Render color/transmittance/depth maps for a full camera view.

    ``field`` is a RadianceField, ``features``/``cond_poses`` the
    conditioning views.  Rendering is chunked over rays and runs without
    graph construction.
    """
    if len(cond_poses) == 0:
        raise ContractViolation("render_view needs at least one conditioning view")
    origin, dir_map = pixel_rays(pose)
    h, w = dir_map.shape[:2]
    flat_dirs = dir_map.reshape(-1, 3)
    rgb = np.empty((h * w, 3), dtype=np.float32)
    trans = np.empty(h * w, dtype=np.float32)
    depth = np.empty(h * w, dtype=np.float32)

    def field_fn(pts, ds):
        return field.query(pts, ds, features, cond_poses)

    with no_grad():
        for start in range(0, h * w, chunk):
            sl = slice(start, min(start + chunk, h * w))
            c, t, d = render_rays(origin, flat_dirs[sl], field_fn,
                                  n_samples=n_samples, rng=rng)
            rgb[sl] = np.clip(c.data, 0.0, 1.0)
            trans[sl] = t.data
            depth[sl] = d.data
    return rgb.reshape(h, w, 3), trans.reshape(h, w), depth.reshape(h, w)
