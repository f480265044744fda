"""PCA oriented bounding boxes with outlier trimming."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

TRIM_FRACTION = 0.01
_DEGENERATE = 1e-12
_NEAR_DEGENERATE = 0.05
_MIN_HALF = 1e-9

# vertex sign patterns for a unit box, ordered so faces are easy to pick
_CORNERS = np.array(
    [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float
)


class GeometryWarning(UserWarning):
    """Emitted when a fit falls back to a degraded method."""


@dataclass
class OrientedBoundingBox:
    center: np.ndarray
    axes: np.ndarray  # rows are unit axes
    half_extents: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        self.axes = np.asarray(self.axes, dtype=float).reshape(3, 3)
        self.half_extents = np.asarray(self.half_extents, dtype=float).reshape(3)

    @property
    def extents(self):
        return 2.0 * self.half_extents

    def vertices(self):
        """All 8 corners, shape (8, 3)."""
        return self.center + (_CORNERS * self.half_extents) @ self.axes

    def transformed(self, pose):
        R = pose.matrix
        return OrientedBoundingBox(pose.apply(self.center), self.axes @ R.T, self.half_extents.copy())

    def contains(self, points, tol=0.0):
        """Boolean mask of points inside the box (inclusive, with slack ``tol``)."""
        local = (np.atleast_2d(points) - self.center) @ self.axes.T
        return np.all(np.abs(local) <= self.half_extents + tol, axis=1)

    def face(self, direction):
        """Indices into :meth:`vertices` of the face whose normal best matches ``direction``."""
        dots = self.axes @ np.asarray(direction, dtype=float)
        a = int(np.argmax(np.abs(dots)))
        s = 1.0 if dots[a] > 0 else -1.0
        return np.nonzero(_CORNERS[:, a] == s)[0], a, s

    def to_dict(self):
        return {
            "center": self.center.tolist(),
            "axes": self.axes.tolist(),
            "half_extents": self.half_extents.tolist(),
        }


def _min_area_angle(p2):
    """Angle in [0, pi/2) minimizing the bounding-rectangle area of 2D points."""

    def area(t):
        c, s = np.cos(t), np.sin(t)
        u = p2[:, 0] * c + p2[:, 1] * s
        v = -p2[:, 0] * s + p2[:, 1] * c
        return np.ptp(u) * np.ptp(v)

    grid = np.linspace(0, np.pi / 2, 91)[:-1]
    vals = [area(t) for t in grid]
    i = int(np.argmin(vals))
    lo, hi = grid[i] - np.pi / 180, grid[i] + np.pi / 180
    g = (np.sqrt(5) - 1) / 2
    for _ in range(40):
        a = hi - g * (hi - lo)
        b = lo + g * (hi - lo)
        if area(a) < area(b):
            hi = b
        else:
            lo = a
    return 0.5 * (lo + hi)


def _refine_degenerate(points, axes, evals):
    """Rotate axes within near-degenerate eigen-planes to tighten the box."""
    order = [(0, 1), (1, 2), (0, 2)]
    scale = max(evals.max(), _DEGENERATE)
    for i, j in order:
        if abs(evals[i] - evals[j]) <= _NEAR_DEGENERATE * scale:
            p2 = points @ axes[[i, j]].T
            t = _min_area_angle(p2)
            c, s = np.cos(t), np.sin(t)
            ai, aj = axes[i].copy(), axes[j].copy()
            axes[i] = c * ai + s * aj
            axes[j] = -s * ai + c * aj
    return axes


def fit_obb(points, trim=TRIM_FRACTION):
    """Fit a PCA box to raw points, dropping the ``trim`` fraction farthest from the mean."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(points)
    mean = points.mean(axis=0)
    if n > 1 and trim > 0:
        d = np.linalg.norm(points - mean, axis=1)
        keep = n - int(np.floor(trim * n))
        idx = np.argsort(d, kind="stable")[:keep]
        kept = points[idx]
    else:
        kept = points
    mean = kept.mean(axis=0)
    centered = kept - mean
    cov = centered.T @ centered / max(len(kept), 1)
    evals, evecs = np.linalg.eigh(cov)
    if len(kept) < 4 or evals[0] <= _DEGENERATE * max(evals[-1], _DEGENERATE):
        warnings.warn("degenerate covariance; using an axis-aligned box", GeometryWarning, stacklevel=2)
        lo, hi = kept.min(axis=0), kept.max(axis=0)
        return OrientedBoundingBox((lo + hi) / 2, np.eye(3), np.maximum((hi - lo) / 2, _MIN_HALF))
    # descending variance, right-handed
    evals = evals[::-1]
    axes = evecs[:, ::-1].T.copy()
    if np.linalg.det(axes) < 0:
        axes[2] = -axes[2]
    axes = _refine_degenerate(centered, axes, evals)
    proj = centered @ axes.T
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    center = mean + ((lo + hi) / 2) @ axes
    return OrientedBoundingBox(center, axes, np.maximum((hi - lo) / 2, _MIN_HALF))


def oriented_bounding_box(cloud, pose=None):
    """PCA box of the cloud's means under ``pose`` (identity when omitted)."""
    pts = cloud.means if pose is None else pose.apply(cloud.means)
    return fit_obb(pts)


def bottom_vertices_z(obb):
    """Heights of the 4 vertices of the downward-facing face."""
    idx, _, _ = obb.face((0.0, 0.0, -1.0))
    return obb.vertices()[idx, 2]


def top_height(obb):
    """Height of the center of the upward-facing face."""
    idx, _, _ = obb.face((0.0, 0.0, 1.0))
    return float(obb.vertices()[idx, 2].mean())
