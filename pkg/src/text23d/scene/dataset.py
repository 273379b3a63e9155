"""Dataset generation and on-disk layout.

One directory per object holding 36 RGBA PNGs (view_00..view_35) plus a
JSON manifest with the caption and per-view extrinsics; a top-level
dataset.json records the master seed, rig configuration and split
assignment.  Generation is bit-reproducible from the master seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import ContractViolation
from .camera import NUM_RIG_POSES, CameraPose, camera_rig
from .objects import SceneSpec, caption_of, sample_scene
from .render import composite_white, render_reference

SPLIT_FRACTIONS = {"train": 0.75, "val": 0.125, "test": 0.125}


def object_seed(master_seed: int, index: int) -> int:
    return master_seed * 1_000_003 + index


def split_of_index(index: int, total: int) -> str:
    n_train = int(round(total * SPLIT_FRACTIONS["train"]))
    n_val = int(round(total * SPLIT_FRACTIONS["val"]))
    if index < n_train:
        return "train"
    if index < n_train + n_val:
        return "val"
    return "test"


@dataclass
class ObjectRecord:
    object_id: str
    seed: int
    caption: str
    category: str
    split: str
    images: np.ndarray          # (36, H, W, 4) float32
    poses: list[CameraPose]

    def white_view(self, pose_index: int) -> np.ndarray:
        return composite_white(self.images[pose_index])


@dataclass
class Dataset:
    root: Path
    master_seed: int
    resolution: int
    fov_deg: float
    camera_radius: float
    elevation_deg: float
    objects: list[ObjectRecord]

    def split(self, name: str) -> list[ObjectRecord]:
        return [o for o in self.objects if o.split == name]

    def captions(self, split: str | None = None) -> list[str]:
        objs = self.objects if split is None else self.split(split)
        return [o.caption for o in objs]


def _save_png(path: Path, rgba: np.ndarray) -> None:
    data = np.clip(np.rint(rgba * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGBA").save(path, format="PNG")


def _load_png(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGBA"), dtype=np.float32)
    return arr / 255.0


def generate_dataset(root: Path | str, num_objects: int, resolution: int = 48,
                     master_seed: int = 0, fov_deg: float = 40.0,
                     camera_radius: float = 2.7,
                     elevation_deg: float = -30.0) -> Path:
    """Render ``num_objects`` x 36 views to ``root``; idempotent per seed."""
    if num_objects < 1:
        raise ContractViolation("num_objects must be >= 1")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    poses = [camera_rig(i, resolution, fov_deg, camera_radius, elevation_deg)
             for i in range(NUM_RIG_POSES)]
    index = {
        "version": 1,
        "master_seed": master_seed,
        "num_objects": num_objects,
        "num_views": NUM_RIG_POSES,
        "resolution": resolution,
        "fov_deg": fov_deg,
        "camera_radius": camera_radius,
        "elevation_deg": elevation_deg,
        "objects": [],
    }
    for i in range(num_objects):
        seed = object_seed(master_seed, i)
        spec = sample_scene(seed)
        caption = caption_of(spec)
        obj_id = f"obj_{i:04d}"
        obj_dir = root / obj_id
        obj_dir.mkdir(exist_ok=True)
        for pose in poses:
            _save_png(obj_dir / f"view_{pose.pose_index:02d}.png",
                      render_reference(spec, pose))
        manifest = {
            "object_id": obj_id,
            "seed": seed,
            "caption": caption,
            "resolution": resolution,
            "fov_deg": fov_deg,
            "spec": spec.to_json(),
            "views": [p.to_json() for p in poses],
        }
        (obj_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=1, sort_keys=True))
        index["objects"].append({
            "id": obj_id,
            "seed": seed,
            "caption": caption,
            "category": spec.category,
            "split": split_of_index(i, num_objects),
        })
    (root / "dataset.json").write_text(json.dumps(index, indent=1, sort_keys=True))
    return root


def load_dataset(root: Path | str) -> Dataset:
    root = Path(root)
    index_path = root / "dataset.json"
    if not index_path.exists():
        raise FileNotFoundError(f"no dataset.json under {root}")
    index = json.loads(index_path.read_text())
    objects = []
    for entry in index["objects"]:
        obj_dir = root / entry["id"]
        manifest = json.loads((obj_dir / "manifest.json").read_text())
        poses = [CameraPose.from_json(v) for v in manifest["views"]]
        images = np.stack([
            _load_png(obj_dir / f"view_{i:02d}.png")
            for i in range(index["num_views"])
        ])
        objects.append(ObjectRecord(
            object_id=entry["id"], seed=entry["seed"], caption=entry["caption"],
            category=entry["category"], split=entry["split"],
            images=images, poses=poses))
    return Dataset(
        root=root, master_seed=index["master_seed"],
        resolution=index["resolution"], fov_deg=index["fov_deg"],
        camera_radius=index["camera_radius"], elevation_deg=index["elevation_deg"],
        objects=objects)
