"""Camera rig: 36 poses on a circle, pinhole intrinsics, ray generation.

World frame is y-up with the object centered at the origin inside the unit
sphere.  Camera frame follows the OpenCV convention (x right, y down,
z forward), so the world-to-camera map is ``H(y) = R @ y + h`` and a point
with positive camera-frame z lies in front of the camera.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NUM_RIG_POSES = 36
DEFAULT_FOV_DEG = 40.0
DEFAULT_RADIUS = 2.7
DEFAULT_ELEVATION_DEG = -30.0


@dataclass(frozen=True)
class CameraPose:
    rotation: np.ndarray          # (3, 3) world-to-camera
    translation: np.ndarray       # (3,)
    pose_index: int
    width: int
    height: int
    fov_deg: float

    @property
    def focal(self) -> float:
        return 0.5 * self.width / np.tan(0.5 * np.deg2rad(self.fov_deg))

    @property
    def principal_point(self) -> tuple[float, float]:
        return (self.width / 2.0, self.height / 2.0)

    @property
    def position(self) -> np.ndarray:
        """Camera center in world coordinates (solves R @ p + h = 0)."""
        return -self.rotation.T @ self.translation

    def to_json(self) -> dict:
        return {
            "pose_index": self.pose_index,
            "rotation": [float(v) for v in self.rotation.reshape(-1)],
            "translation": [float(v) for v in self.translation],
            "width": self.width,
            "height": self.height,
            "fov_deg": self.fov_deg,
        }

    @staticmethod
    def from_json(d: dict) -> "CameraPose":
        return CameraPose(
            rotation=np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3),
            translation=np.asarray(d["translation"], dtype=np.float64),
            pose_index=int(d["pose_index"]),
            width=int(d["width"]),
            height=int(d["height"]),
            fov_deg=float(d["fov_deg"]),
        )


def look_at_pose(position: np.ndarray, pose_index: int, resolution: int,
                 fov_deg: float) -> CameraPose:
    """Build a pose at ``position`` looking at the origin."""
    position = np.asarray(position, dtype=np.float64)
    forward = -position / np.linalg.norm(position)
    world_up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, world_up)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    translation = -rotation @ position
    return CameraPose(rotation=rotation, translation=translation,
                      pose_index=pose_index, width=resolution,
                      height=resolution, fov_deg=fov_deg)


def camera_rig(pose_index: int, resolution: int = 48,
               fov_deg: float = DEFAULT_FOV_DEG,
               radius: float = DEFAULT_RADIUS,
               elevation_deg: float = DEFAULT_ELEVATION_DEG) -> CameraPose:
    """Rig pose ``pose_index``: azimuth -180 + 10*i degrees, fixed elevation.

    Adjacency for prior-conditioning and the consistency metric follows
    pose-index order (the rig wraps around at the last index).
    """
    if not 0 <= pose_index < NUM_RIG_POSES:
        raise IndexError(f"pose_index {pose_index} out of range [0, {NUM_RIG_POSES})")
    azimuth = np.deg2rad(-180.0 + pose_index * (360.0 / NUM_RIG_POSES))
    elevation = np.deg2rad(elevation_deg)
    position = radius * np.array([
        np.cos(elevation) * np.cos(azimuth),
        np.sin(elevation),
        np.cos(elevation) * np.sin(azimuth),
    ])
    return look_at_pose(position, pose_index, resolution, fov_deg)


def pixel_rays(pose: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    """World-frame rays through all pixel centers.

    Returns (origin (3,), directions (H, W, 3) unit vectors).
    """
    h, w = pose.height, pose.width
    focal = pose.focal
    cx, cy = pose.principal_point
    js, is_ = np.meshgrid(np.arange(w), np.arange(h))
    x = (js + 0.5 - cx) / focal
    y = (is_ + 0.5 - cy) / focal
    d_cam = np.stack([x, y, np.ones_like(x)], axis=-1)
    d_world = d_cam @ pose.rotation  # = R^T @ d_cam, per pixel
    d_world = d_world / np.linalg.norm(d_world, axis=-1, keepdims=True)
    return pose.position, d_world.astype(np.float64)
