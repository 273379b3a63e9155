"""Analytic ray-intersectable primitives: sphere, axis-aligned box, vertical
cylinder.  Intersection routines are vectorized over ray bundles and return
hit distance (inf on miss) plus the outward surface normal at the hit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EPS = 1e-9


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float
    color: np.ndarray
    shade: float = 1.0  # albedo multiplier for part-level variation

    def intersect(self, origin: np.ndarray, dirs: np.ndarray):
        oc = origin - self.center
        b = dirs @ oc
        c = oc @ oc - self.radius ** 2
        disc = b * b - c
        hit = disc > 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t0 = -b - sq
        t1 = -b + sq
        t = np.where(t0 > _EPS, t0, t1)
        t = np.where(hit & (t > _EPS), t, np.inf)
        t_safe = np.where(np.isfinite(t), t, 0.0)
        pts = origin + dirs * t_safe[..., None]
        normals = (pts - self.center) / self.radius
        return t, normals

    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.center) + self.radius)

    def scaled(self, s: float) -> "Sphere":
        return Sphere(self.center * s, self.radius * s, self.color, self.shade)


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray
    color: np.ndarray
    shade: float = 1.0

    def intersect(self, origin: np.ndarray, dirs: np.ndarray):
        inv = 1.0 / np.where(np.abs(dirs) < _EPS, np.copysign(_EPS, dirs), dirs)
        t_lo = (self.lo - origin) * inv
        t_hi = (self.hi - origin) * inv
        t_near_ax = np.minimum(t_lo, t_hi)
        t_far_ax = np.maximum(t_lo, t_hi)
        t_near = t_near_ax.max(axis=-1)
        t_far = t_far_ax.min(axis=-1)
        hit = (t_near <= t_far) & (t_far > _EPS)
        t = np.where(t_near > _EPS, t_near, t_far)
        t = np.where(hit, t, np.inf)
        # Normal along the axis that produced the entry time.
        entry_axis = np.argmax(t_near_ax, axis=-1)
        normals = np.zeros(dirs.shape)
        idx = np.indices(entry_axis.shape)
        normals[(*idx, entry_axis)] = -np.sign(dirs[(*idx, entry_axis)])
        return t, normals

    def bounding_radius(self) -> float:
        return float(max(np.linalg.norm(self.lo), np.linalg.norm(self.hi)))

    def scaled(self, s: float) -> "Box":
        return Box(self.lo * s, self.hi * s, self.color, self.shade)


@dataclass(frozen=True)
class Cylinder:
    """Vertical (y-axis aligned) capped cylinder."""

    center_xz: np.ndarray          # (2,): axis position in the xz plane
    radius: float
    y_min: float
    y_max: float
    color: np.ndarray
    shade: float = 1.0

    def intersect(self, origin: np.ndarray, dirs: np.ndarray):
        ox = origin[0] - self.center_xz[0]
        oz = origin[2] - self.center_xz[1]
        dx = dirs[..., 0]
        dz = dirs[..., 2]
        a = dx * dx + dz * dz
        b = ox * dx + oz * dz
        c = ox * ox + oz * oz - self.radius ** 2
        a_safe = np.where(a < _EPS, _EPS, a)
        disc = b * b - a_safe * c
        side_ok = (disc > 0) & (a >= _EPS)
        sq = np.sqrt(np.where(side_ok, disc, 0.0))
        t_side = np.where(side_ok, (-b - sq) / a_safe, np.inf)
        t_side2 = np.where(side_ok, (-b + sq) / a_safe, np.inf)
        t_side = np.where(t_side > _EPS, t_side, t_side2)
        y_hit = origin[1] + dirs[..., 1] * t_side
        t_side = np.where(
            side_ok & (t_side > _EPS) & (y_hit >= self.y_min) & (y_hit <= self.y_max),
            t_side, np.inf)

        # Caps: horizontal disks at y_min / y_max.
        dy = dirs[..., 1]
        dy_safe = np.where(np.abs(dy) < _EPS, np.copysign(_EPS, dy), dy)
        t_caps = []
        for y_plane in (self.y_min, self.y_max):
            t_cap = (y_plane - origin[1]) / dy_safe
            px = origin[0] + dx * t_cap - self.center_xz[0]
            pz = origin[2] + dz * t_cap - self.center_xz[1]
            inside = px * px + pz * pz <= self.radius ** 2
            t_caps.append(np.where((t_cap > _EPS) & inside & (np.abs(dy) >= _EPS),
                                   t_cap, np.inf))
        t_cap_min = np.minimum(t_caps[0], t_caps[1])
        cap_is_min = t_caps[1] < t_caps[0]

        t = np.minimum(t_side, t_cap_min)
        from_cap = t_cap_min < t_side
        pts = origin + dirs * np.where(np.isfinite(t), t, 0.0)[..., None]
        side_n = np.zeros(dirs.shape)
        side_n[..., 0] = (pts[..., 0] - self.center_xz[0]) / self.radius
        side_n[..., 2] = (pts[..., 2] - self.center_xz[1]) / self.radius
        cap_n = np.zeros(dirs.shape)
        cap_n[..., 1] = np.where(cap_is_min, 1.0, -1.0)
        normals = np.where(from_cap[..., None], cap_n, side_n)
        return np.where(t > _EPS, t, np.inf), normals

    def bounding_radius(self) -> float:
        r_xz = float(np.linalg.norm(self.center_xz) + self.radius)
        y = max(abs(self.y_min), abs(self.y_max))
        return float(np.sqrt(r_xz ** 2 + y ** 2))

    def scaled(self, s: float) -> "Cylinder":
        return Cylinder(self.center_xz * s, self.radius * s,
                        self.y_min * s, self.y_max * s, self.color, self.shade)
