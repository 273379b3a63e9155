"""Procedural scenes: objects, captions, camera rig, reference renderer."""

from .camera import (
    DEFAULT_ELEVATION_DEG,
    DEFAULT_FOV_DEG,
    DEFAULT_RADIUS,
    NUM_RIG_POSES,
    CameraPose,
    camera_rig,
    pixel_rays,
)
from .dataset import Dataset, ObjectRecord, generate_dataset, load_dataset
from .objects import ADJECTIVES, CATEGORIES, PALETTE, SceneSpec, caption_of, sample_scene
from .render import composite_white, render_reference

__all__ = [
    "ADJECTIVES",
    "CATEGORIES",
    "CameraPose",
    "DEFAULT_ELEVATION_DEG",
    "DEFAULT_FOV_DEG",
    "DEFAULT_RADIUS",
    "Dataset",
    "NUM_RIG_POSES",
    "ObjectRecord",
    "PALETTE",
    "SceneSpec",
    "camera_rig",
    "caption_of",
    "composite_white",
    "generate_dataset",
    "load_dataset",
    "pixel_rays",
    "render_reference",
]
