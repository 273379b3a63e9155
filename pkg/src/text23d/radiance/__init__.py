"""Views-to-3D: image-conditioned radiance field and volume renderer."""

from .field import FEATURE_STRIDE, FeatureExtractor, RadianceField
from .geometry import ENCODING_WIDTH, NUM_FREQUENCIES, pos_encode, project
from .render import composite, render_rays, render_view, sample_depths
from .train import (
    BBOX_FRACTION,
    COND_VIEWS,
    RAYS_PER_OBJECT,
    dilate_mask,
    evenly_spaced_views,
    mean_color_baseline_psnr,
    reconstruction_psnr,
    train_step,
    train_views_to_3d,
)

__all__ = [
    "BBOX_FRACTION",
    "COND_VIEWS",
    "ENCODING_WIDTH",
    "FEATURE_STRIDE",
    "FeatureExtractor",
    "NUM_FREQUENCIES",
    "RAYS_PER_OBJECT",
    "RadianceField",
    "composite",
    "dilate_mask",
    "evenly_spaced_views",
    "mean_color_baseline_psnr",
    "pos_encode",
    "project",
    "reconstruction_psnr",
    "render_rays",
    "render_view",
    "sample_depths",
    "train_step",
    "train_views_to_3d",
]
