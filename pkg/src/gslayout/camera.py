"""Per-entity camera roaming: size-aware distance adjustment around a tracked object."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .gscloud import OrientedBoundingBox


@dataclass
class CameraPose:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray = None
    fov: float = 60.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.look_at = np.asarray(self.look_at, dtype=float).reshape(3)
        self.up = np.array([0.0, 0.0, 1.0]) if self.up is None else np.asarray(self.up, dtype=float)
        view = self.look_at - self.position
        if np.linalg.norm(view) < 1e-12:
            raise ValueError("camera position coincides with its look-at point")
        if np.linalg.norm(np.cross(view / np.linalg.norm(view), self.up)) < 1e-9:
            raise ValueError("up vector is parallel to the view direction")

    def basis(self):
        """Unit forward, right and true-up vectors."""
        f = self.look_at - self.position
        f = f / np.linalg.norm(f)
        r = np.cross(f, self.up)
        r = r / np.linalg.norm(r)
        return f, r, np.cross(r, f)

    def to_dict(self):
        return {"position": self.position.tolist(), "look_at": self.look_at.tolist(),
                "up": self.up.tolist(), "fov": float(self.fov)}


@dataclass(frozen=True)
class RoamConfig:
    radius: tuple = (1.5, 4.0)
    azimuth: tuple = (-180.0, 180.0)
    elevation: tuple = (-10.0, 60.0)
    standard_size: float = 0.35
    views_per_object: int = 8
    fov: float = 60.0
    seed: int = 0

    def __post_init__(self):
        for name in ("radius", "azimuth", "elevation"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} range is empty")
        if self.radius[0] <= 0:
            raise ValueError("radii must be positive")
        if not (-90.0 < self.elevation[0] and self.elevation[1] < 90.0):
            raise ValueError("elevation must stay strictly between -90 and 90 degrees")
        if self.standard_size <= 0:
            raise ValueError("standard_size must be positive")
        if self.views_per_object < 1:
            raise ValueError("views_per_object must be >= 1")


def distance_factor(size, standard_size):
    """``max(size) / standard_size - 1``; zero for an object of the reference size."""
    size = np.asarray(size, dtype=float)
    if np.any(size <= 0) or standard_size <= 0:
        raise ValueError("sizes must be positive")
    return float(size.max() / standard_size - 1.0)


def adjust_camera(C, P_obj, alpha):
    """Shift a camera by the object position and back it off along the view ray.

    Returns ``C + P_obj - alpha * d`` with ``d`` the unit vector from ``C``
    toward ``P_obj``.
    """
    C = np.asarray(C, dtype=float)
    P_obj = np.asarray(P_obj, dtype=float)
    v = P_obj - C
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("camera sits on the object; view direction undefined")
    return C + P_obj - alpha * (v / n)


def _shell_samples(roam, n):
    rng = np.random.default_rng(roam.seed)
    r = rng.uniform(*roam.radius, n)
    az = np.radians(rng.uniform(*roam.azimuth, n))
    el = np.radians(rng.uniform(*roam.elevation, n))
    return np.stack([r * np.cos(el) * np.cos(az), r * np.cos(el) * np.sin(az), r * np.sin(el)], axis=1)


def roam_trajectory(config, roam=None, views=None):
    """Camera poses tracking one object.

    Static samples ``s`` on the configured shell around the origin are mapped
    to ``P + adjust_camera(s, 0, alpha)``: the depth change is applied along
    the shell ray before the shell is carried to the object, so every view
    keeps its sampled direction and sits exactly ``alpha`` further out.
    """
    roam = roam or RoamConfig()
    n = views or roam.views_per_object
    P = np.asarray(config.position, dtype=float)
    alpha = distance_factor(config.standard_size, roam.standard_size)
    poses = []
    for s in _shell_samples(roam, n):
        C = P + adjust_camera(s, np.zeros(3), alpha)
        poses.append(CameraPose(C, P.copy(), fov=roam.fov))
    return poses


def frustum_contains(camera, points, margin=0.0):
    """True when every point is in front of the camera and inside a square frustum of ``fov``."""
    f, r, u = camera.basis()
    rel = np.asarray(points, dtype=float).reshape(-1, 3) - camera.position
    depth = rel @ f
    if np.any(depth <= 0):
        return False
    t = np.tan(np.radians(camera.fov) / 2.0) * (1.0 - margin)
    return bool(np.all(np.abs(rel @ r) <= t * depth) and np.all(np.abs(rel @ u) <= t * depth))


def config_box(config):
    """Axis-aligned box of a configuration at its position."""
    return OrientedBoundingBox(np.asarray(config.position, dtype=float), np.eye(3),
                               np.asarray(config.standard_size, dtype=float) / 2.0)


def trajectory_to_json(poses):
    return json.dumps([p.to_dict() for p in poses], indent=2) + "\n"
