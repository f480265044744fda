"""Core containers: per-object Gaussian clouds and rigid poses."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .transforms import canonicalize_rotvec, rotvec_to_matrix


@dataclass(eq=False)
class GaussianCloud:
    """A labeled set of Gaussians stored in a centered local frame.

    Construction re-centers ``means`` so that their mean is the zero vector.
    ``extra`` holds any additional per-Gaussian properties read from a PLY
    file so they survive a round-trip.
    """

    means: np.ndarray
    scales: np.ndarray
    opacities: np.ndarray
    label: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        means = np.array(self.means, dtype=float).reshape(-1, 3)
        n = len(means)
        if n < 1:
            raise ValueError("a GaussianCloud needs at least one Gaussian")
        scales = np.array(self.scales, dtype=float)
        if scales.ndim == 1 and scales.shape[0] == n:
            scales = np.repeat(scales[:, None], 3, axis=1)
        scales = scales.reshape(n, 3)
        if np.any(scales <= 0) or not np.all(np.isfinite(scales)):
            raise ValueError("all Gaussian scales must be positive and finite")
        opac = np.array(self.opacities, dtype=float).reshape(n)
        if np.any(opac < 0) or np.any(opac > 1):
            raise ValueError("opacities must lie in [0, 1]")
        if not np.all(np.isfinite(means)):
            raise ValueError("non-finite Gaussian means")
        center = means.mean(axis=0)
        span = max(float(np.abs(means).max()), 1.0)
        # already-centered input is kept bit-for-bit so file round-trips are exact
        self.means = means - center if np.abs(center).max() > 1e-12 * span else means
        self.scales = scales
        self.opacities = opac
        for key, arr in self.extra.items():
            if len(arr) != n:
                raise ValueError(f"extra property {key!r} has wrong length")

    def __len__(self):
        return len(self.means)

    @classmethod
    def from_world(cls, means, scales, opacities, label="", extra=None):
        """Build a cloud from world-frame means.

        Returns the centered cloud and the offset that was removed, which is
        the translation of the pose placing it back where it was.
        """
        means = np.asarray(means, dtype=float).reshape(-1, 3)
        offset = means.mean(axis=0)
        cloud = cls(means, scales, opacities, label, dict(extra or {}))
        return cloud, offset

    def copy(self, **changes):
        kw = dict(
            means=self.means.copy(),
            scales=self.scales.copy(),
            opacities=self.opacities.copy(),
            label=self.label,
            extra={k: v.copy() for k, v in self.extra.items()},
        )
        kw.update(changes)
        return GaussianCloud(**kw)

    def weighted_center(self):
        """Opacity-weighted mean of the local means."""
        total = self.opacities.sum()
        if total <= 0:
            raise ValueError(f"cloud {self.label!r} has all-zero opacities")
        return (self.opacities[:, None] * self.means).sum(axis=0) / total

    def same_as(self, other):
        """Exact (bitwise) equality of all arrays and the label."""
        return (
            self.label == other.label
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.scales, other.scales)
            and np.array_equal(self.opacities, other.opacities)
            and self.extra.keys() == other.extra.keys()
            and all(np.array_equal(self.extra[k], other.extra[k]) for k in self.extra)
        )


@dataclass
class Pose:
    """Rigid pose: world point = R(rotation) @ local + translation."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.translation = np.array(self.translation, dtype=float).reshape(3)
        self.rotation = np.array(self.rotation, dtype=float).reshape(3)

    @property
    def matrix(self):
        return rotvec_to_matrix(self.rotation)

    @property
    def angle(self):
        return float(np.linalg.norm(self.rotation))

    def canonical(self):
        return Pose(self.translation.copy(), canonicalize_rotvec(self.rotation))

    def apply(self, points):
        points = np.asarray(points, dtype=float)
        return points @ self.matrix.T + self.translation

    def inverse_apply(self, points):
        points = np.asarray(points, dtype=float)
        return (points - self.translation) @ self.matrix

    def copy(self):
        return Pose(self.translation.copy(), self.rotation.copy())

    def to_dict(self):
        return {"translation": self.translation.tolist(), "rotation": self.rotation.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["translation"], d["rotation"])


def centroid_world(cloud, pose):
    """Opacity-weighted centroid of the posed means."""
    return pose.apply(cloud.weighted_center())


def opacity_binarization_penalty(cloud):
    """Mean of ``min(o, 1 - o)``; zero when every opacity is 0 or 1.

    A per-Gaussian stand-in for pushing rendered foreground transmittance
    toward 0 or 1.
    """
    o = cloud.opacities
    return float(np.minimum(o, 1.0 - o).mean())
