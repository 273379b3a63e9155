"""Procedural object sampling and template captions.

Each object is a small set of analytic primitives assembled per category
from a bounded shape-parameter vector, then rescaled so the whole object
fits inside the unit-radius sphere at the origin.  The caption template is
"<Color> <ShapeAdjective> <Category>"; the adjective is a deterministic
function of the shape parameters and genuinely changes the geometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .primitives import Box, Cylinder, Sphere

CATEGORIES = ("chair", "sofa", "table", "lamp", "bed", "ottoman", "planter", "pillow")

PALETTE = {
    "red": (0.80, 0.15, 0.15),
    "blue": (0.18, 0.28, 0.80),
    "green": (0.15, 0.62, 0.22),
    "yellow": (0.86, 0.78, 0.15),
    "purple": (0.55, 0.20, 0.70),
    "orange": (0.90, 0.48, 0.12),
    "white": (0.92, 0.92, 0.92),
    "black": (0.10, 0.10, 0.12),
}

ADJECTIVES = ("Round", "Square", "Slender")

# shape_params layout: (aspect, bulk, roundness, detail), all in [0, 1]
PARAM_NAMES = ("aspect", "bulk", "roundness", "detail")


@dataclass(frozen=True)
class SceneSpec:
    category: str
    color_name: str
    rgb: np.ndarray
    shape_params: np.ndarray
    seed: int

    @property
    def adjective(self) -> str:
        aspect, _, roundness, _ = self.shape_params
        if roundness > 0.62:
            return "Round"
        if aspect < 0.38:
            return "Slender"
        return "Square"

    def to_json(self) -> dict:
        return {
            "category": self.category,
            "color": self.color_name,
            "shape_params": [float(v) for v in self.shape_params],
            "seed": self.seed,
        }


def sample_scene(seed: int) -> SceneSpec:
    """Deterministic draw of category, palette color and shape parameters."""
    rng = np.random.default_rng(seed)
    category = CATEGORIES[int(rng.integers(0, len(CATEGORIES)))]
    color_name = list(PALETTE)[int(rng.integers(0, len(PALETTE)))]
    params = rng.uniform(0.0, 1.0, size=4)
    return SceneSpec(category=category, color_name=color_name,
                     rgb=np.asarray(PALETTE[color_name], dtype=np.float64),
                     shape_params=params, seed=int(seed))


def caption_of(spec: SceneSpec) -> str:
    return f"{spec.color_name.capitalize()} {spec.adjective} {spec.category.capitalize()}"


# ---------------------------------------------------------------------------
# category builders
# ---------------------------------------------------------------------------


def _lerp(a: float, b: float, t: float) -> float:
    return a + (b - a) * t


def _box(cx, cy, cz, hx, hy, hz, color, shade=1.0) -> Box:
    c = np.array([cx, cy, cz])
    h = np.array([hx, hy, hz])
    return Box(c - h, c + h, color, shade)


def build_primitives(spec: SceneSpec) -> list:
    """Assemble primitives for a spec and normalize to the unit sphere."""
    aspect, bulk, roundness, detail = spec.shape_params
    slender = spec.adjective == "Slender"
    is_round = spec.adjective == "Round"
    color = spec.rgb
    width = _lerp(0.45, 1.0, aspect) * (0.55 if slender else 1.0)
    thick = _lerp(0.5, 1.0, bulk)
    prims: list = []

    if spec.category == "chair":
        seat_h = 0.08 * thick
        if is_round:
            prims.append(Cylinder(np.zeros(2), 0.45 * width + 0.12, 0.0, 2 * seat_h, color))
        else:
            prims.append(_box(0, seat_h, 0, 0.5 * width + 0.1, seat_h, 0.45, color))
        prims.append(_box(0, 0.45 + seat_h, -0.38, 0.5 * width + 0.1, 0.45, 0.06 * thick, color, 0.85))
        leg_r = 0.05 * thick
        for sx in (-1, 1):
            for sz in (-1, 1):
                prims.append(Cylinder(np.array([sx * 0.4 * width, sz * 0.34]),
                                      leg_r, -0.5, 0.0, color, 0.55))
    elif spec.category == "sofa":
        base_w = 0.65 * width + 0.35
        prims.append(_box(0, -0.1, 0, base_w, 0.22 * thick, 0.42, color))
        prims.append(_box(0, 0.25, -0.34, base_w, 0.3, 0.09 * thick, color, 0.85))
        for sx in (-1, 1):
            if is_round:
                prims.append(Cylinder(np.array([sx * base_w, 0.0]), 0.12 * thick + 0.04,
                                      -0.3, 0.28, color, 0.8))
            else:
                prims.append(_box(sx * base_w, 0.0, 0, 0.1 * thick + 0.03, 0.3, 0.42, color, 0.8))
    elif spec.category == "table":
        top_t = 0.05 * thick + 0.02
        if is_round:
            prims.append(Cylinder(np.zeros(2), 0.52 * width + 0.2, 0.25 - top_t, 0.25, color))
        else:
            prims.append(_box(0, 0.25 - top_t / 2, 0, 0.55 * width + 0.2, top_t / 2, 0.45, color))
        if detail > 0.5:
            prims.append(Cylinder(np.zeros(2), 0.07 * thick + 0.03, -0.45, 0.25, color, 0.6))
        else:
            for sx in (-1, 1):
                for sz in (-1, 1):
                    prims.append(Cylinder(np.array([sx * 0.42 * width, sz * 0.34]),
                                          0.04 * thick + 0.015, -0.45, 0.25, color, 0.6))
    elif spec.category == "lamp":
        prims.append(Cylinder(np.zeros(2), 0.26 * width + 0.1, -0.52, -0.45, color, 0.6))
        prims.append(Cylinder(np.zeros(2), 0.035 * thick + 0.015, -0.45, 0.28, color, 0.5))
        if is_round:
            prims.append(Sphere(np.array([0.0, 0.42, 0.0]), 0.22 * width + 0.12, color))
        else:
            prims.append(Cylinder(np.zeros(2), 0.24 * width + 0.1, 0.28, 0.58, color))
    elif spec.category == "bed":
        base_w = 0.5 * width + 0.3
        prims.append(_box(0, -0.25, 0.05, base_w, 0.12 * thick + 0.05, 0.62, color))
        prims.append(_box(0, 0.05, -0.55, base_w, 0.32, 0.05 * thick + 0.02, color, 0.8))
        if detail > 0.45:
            if is_round:
                prims.append(Sphere(np.array([0.0, -0.04, -0.38]), 0.16, color, 0.9))
            else:
                prims.append(_box(0, -0.05, -0.4, base_w * 0.55, 0.07, 0.12, color, 0.9))
    elif spec.category == "ottoman":
        if is_round:
            prims.append(Cylinder(np.zeros(2), 0.42 * width + 0.18, -0.3, 0.08 + 0.22 * thick, color))
        else:
            prims.append(_box(0, -0.08, 0, 0.45 * width + 0.18, 0.22 + 0.14 * thick, 0.4, color))
        if detail > 0.5:
            for sx in (-1, 1):
                for sz in (-1, 1):
                    prims.append(Sphere(np.array([sx * 0.32 * width, -0.38, sz * 0.28]),
                                        0.06, color, 0.55))
    elif spec.category == "planter":
        pot_r = 0.3 * width + 0.12
        if is_round:
            prims.append(Cylinder(np.zeros(2), pot_r, -0.5, 0.0, color))
        else:
            prims.append(_box(0, -0.25, 0, pot_r, 0.25, pot_r, color))
        prims.append(Sphere(np.array([0.0, 0.3, 0.0]), 0.3 * thick + 0.15,
                            np.array(PALETTE["green"]) if spec.color_name != "green"
                            else np.array(PALETTE["yellow"]), 0.95))
        if detail > 0.55:
            prims.append(Sphere(np.array([0.22, 0.45, 0.1]), 0.14, np.array(PALETTE["green"]), 0.8))
    else:  # pillow
        if is_round:
            prims.append(Sphere(np.zeros(3), 0.42 * width + 0.2, color))
        else:
            prims.append(_box(0, 0, 0, 0.5 * width + 0.22, 0.2 * thick + 0.08, 0.38, color))
        if detail > 0.5:
            prims.append(Sphere(np.array([0.0, 0.18 * thick + 0.1, 0.0]),
                                0.1, color, 0.8))

    radius = max(p.bounding_radius() for p in prims)
    scale = 0.95 / radius if radius > 0.95 else 1.0
    return [p.scaled(scale) for p in prims]
