"""Shared fixtures: a small rendered dataset reused across test modules."""

import numpy as np
import pytest

from text23d.scene import generate_dataset, load_dataset


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """8 objects x 36 views at 48px, master seed 7."""
    root = tmp_path_factory.mktemp("tiny_ds")
    generate_dataset(root, num_objects=8, resolution=48, master_seed=7)
    return load_dataset(root)


@pytest.fixture(scope="session")
def caption_corpus():
    from text23d.scene.objects import ADJECTIVES, CATEGORIES, PALETTE
    return sorted(
        f"{color.capitalize()} {adj} {cat.capitalize()}"
        for color in PALETTE for adj in ADJECTIVES for cat in CATEGORIES
    )
