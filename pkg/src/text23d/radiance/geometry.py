"""Point projection into conditioning views and positional encoding."""

from __future__ import annotations

import numpy as np

from ..scene.camera import CameraPose

NUM_FREQUENCIES = 6
ENCODING_WIDTH = 3 + 3 * 2 * NUM_FREQUENCIES  # raw + sin/cos per frequency
MIN_DEPTH = 1e-4


def project(points: np.ndarray, pose: CameraPose,
            dirs: np.ndarray | None = None):
    """Transform world points into a camera: H(y) = R y + h.

    ``points`` is (..., 3); optional ``dirs`` (..., 3) are rotated into the
    camera frame (d_cam = R d).  Returns (cam_points, cam_dirs, uv, valid)
    where ``uv`` are pinhole image coordinates and ``valid`` flags points in
    front of the camera that land inside the image rectangle.
    """
    points = np.asarray(points, dtype=np.float64)
    r = pose.rotation
    cam = points @ r.T + pose.translation
    cam_dirs = None if dirs is None else np.asarray(dirs, dtype=np.float64) @ r.T
    z = cam[..., 2]
    z_safe = np.where(np.abs(z) < MIN_DEPTH, MIN_DEPTH, z)
    cx, cy = pose.principal_point
    u = pose.focal * cam[..., 0] / z_safe + cx
    v = pose.focal * cam[..., 1] / z_safe + cy
    uv = np.stack([u, v], axis=-1)
    valid = (z > MIN_DEPTH) & (u >= 0) & (u <= pose.width) & (v >= 0) & (v <= pose.height)
    return cam, cam_dirs, uv, valid


def pos_encode_into(points: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Fill ``out[..., :39]`` with [p, sin(2^k pi p), cos(2^k pi p)], k=0..5."""
    out[..., 0:3] = points
    for k in range(NUM_FREQUENCIES):
        scaled = ((2.0 ** k) * np.pi) * points
        out[..., 3 + 6 * k:6 + 6 * k] = np.sin(scaled)
        out[..., 6 + 6 * k:9 + 6 * k] = np.cos(scaled)
    return out


def pos_encode(points: np.ndarray) -> np.ndarray:
    """gamma(p): raw coords plus sin/cos at 6 exponentially increasing
    frequencies; output width 39 for 3D points."""
    points = np.asarray(points)
    out = np.empty(points.shape[:-1] + (ENCODING_WIDTH,), dtype=points.dtype)
    return pos_encode_into(points, out)
