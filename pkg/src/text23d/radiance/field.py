"""Image-conditioned radiance field.

Per conditioning view i, a shared MLP maps the encoded camera-frame query
point, the camera-frame view direction and the bilinearly sampled image
feature to an intermediate vector U_i; the per-view vectors are aggregated
by average pooling and decoded into (sigma, color).

The density path is architecturally split from the direction: f1 produces
one block computed without the view direction (feeding the sigma head) and
one block with it (feeding the color head), so sigma is exactly invariant
to the query direction.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, nn, ops
from ..errors import ContractViolation
from ..scene.camera import CameraPose
from .geometry import ENCODING_WIDTH, pos_encode_into

FEATURE_STRIDE = 2


class FeatureExtractor(nn.Module):
    """Two-level conv encoder; output is spatially aligned at stride 2."""

    def __init__(self, feature_dim: int = 24, rng: np.random.Generator | None = None,
                 resolution: int = 48):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.resolution = resolution
        self.feature_dim = feature_dim
        self.conv1 = nn.Conv2d(3, 24, 3, rng, stride=1, padding=1)
        self.conv2 = nn.Conv2d(24, 48, 3, rng, stride=2, padding=1)
        self.conv3 = nn.Conv2d(48, feature_dim, 3, rng, stride=1, padding=1)

    def __call__(self, images: Tensor) -> Tensor:
        """(V, H, W, 3) -> (V, H/2, W/2, C)."""
        if images.shape[1] != self.resolution or images.shape[2] != self.resolution:
            raise ContractViolation(
                f"expected {self.resolution}px images, got {images.shape}")
        x = ops.relu(self.conv1(images))
        x = ops.relu(self.conv2(x))
        return self.conv3(x)


class RadianceField(nn.Module):
    """f1 (per view, sigma/color blocks) + mean pooling + f2 heads."""

    def __init__(self, feature_dim: int = 24, hidden: int = 48, block: int = 24,
                 seed: int = 0, resolution: int = 48):
        rng = np.random.default_rng([seed, 71])
        self.feature_dim = feature_dim
        self.block = block
        self.extractor = FeatureExtractor(feature_dim, rng, resolution)
        self.f1_sigma = nn.MLP([ENCODING_WIDTH + feature_dim, hidden, block], rng)
        self.f1_color = nn.MLP([ENCODING_WIDTH + 3 + feature_dim, hidden, block], rng)
        self.f2_sigma = nn.MLP([block, 32, 1], rng)
        self.f2_color = nn.MLP([2 * block, 32, 3], rng)

    def extract_features(self, images: np.ndarray | Tensor) -> Tensor:
        imgs = images if isinstance(images, Tensor) else Tensor(
            np.asarray(images, dtype=np.float32))
        if imgs.ndim == 3:
            imgs = ops.reshape(imgs, (1,) + imgs.shape)
        return self.extractor(imgs)

    def query(self, points: np.ndarray, dirs: np.ndarray,
              features: Tensor, poses: list[CameraPose]) -> tuple[Tensor, Tensor]:
        """Evaluate the field of one object at world points.

        ``points``/``dirs`` are (P, 3) with unit directions; ``features`` is
        (V, h, w, C), one entry per conditioning view, ``poses`` the matching
        cameras.  Out-of-frustum samples contribute a zero feature.  Returns
        (sigma (P,), color (P, 3)).
        """
        if len(poses) == 0 or features.shape[0] != len(poses):
            raise ContractViolation("query needs matching conditioning views and poses")
        v = features.shape[0]
        p = points.shape[0]
        dtype = features.dtype

        # project all views at once: cam = R_i y + h_i, d_cam = R_i d
        rot = np.stack([pose.rotation for pose in poses])          # (V, 3, 3)
        trans = np.stack([pose.translation for pose in poses])     # (V, 3)
        cam = np.einsum("pj,vij->vpi", points, rot) + trans[:, None, :]
        dcam = np.einsum("pj,vij->vpi", dirs, rot).astype(dtype)
        z = cam[..., 2]
        z_safe = np.where(np.abs(z) < 1e-4, 1e-4, z)
        focal = np.array([pose.focal for pose in poses])[:, None]
        width = poses[0].width
        height = poses[0].height
        u = focal * cam[..., 0] / z_safe + width / 2.0
        w_coords = focal * cam[..., 1] / z_safe + height / 2.0
        valids = (z > 1e-4) & (u >= 0) & (u <= width) & (w_coords >= 0) & (w_coords <= height)
        coords = np.stack([u, w_coords], axis=-1) / FEATURE_STRIDE - 0.5

        enc = np.empty((v, p, ENCODING_WIDTH), dtype=dtype)
        pos_encode_into(cam.astype(dtype), enc)
        sampled = ops.bilinear_sample(features, coords, valids)  # (V, P, C)

        enc_t = Tensor(enc)
        dir_t = Tensor(dcam)
        u_sigma = self.f1_sigma(ops.concat([enc_t, sampled], axis=-1))
        u_color = self.f1_color(ops.concat([enc_t, dir_t, sampled], axis=-1))

        pooled_sigma = ops.mean(u_sigma, axis=0)   # (P, block)
        pooled_color = ops.mean(u_color, axis=0)
        sigma = ops.softplus(self.f2_sigma(pooled_sigma))
        sigma = ops.reshape(sigma, (p,))
        color = ops.sigmoid(self.f2_color(
            ops.concat([pooled_sigma, pooled_color], axis=-1)))
        return sigma, color
