"""Synthetic surface-sampled primitives used in place of learned geometry."""
from __future__ import annotations

import numpy as np

from .cloud import GaussianCloud

SHAPES = ("box", "sphere", "cylinder", "ell")
MIN_COUNT = 8

# the 8 axis reflections; box, ellipsoid and cylinder surfaces are invariant
_REFLECTIONS = np.array(
    [[sx, sy, sz] for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)], dtype=float
)


def _sample_box(rng, half, n):
    hx, hy, hz = half
    areas = np.array([hy * hz, hx * hz, hx * hy])
    face = rng.choice(3, size=n, p=areas / areas.sum())
    u = rng.uniform(-1.0, 1.0, size=(n, 3)) * half
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    u[np.arange(n), face] = sign * half[face]
    return u


def _sample_ellipsoid(rng, half, n):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * half


def _sample_cylinder(rng, half, n):
    rx, ry, hz = half
    # side area via Ramanujan's ellipse perimeter; caps are ellipses
    h = ((rx - ry) / (rx + ry)) ** 2
    perim = np.pi * (rx + ry) * (1 + 3 * h / (10 + np.sqrt(4 - 3 * h)))
    side = perim * 2 * hz
    cap = np.pi * rx * ry
    on_side = rng.random(n) < side / (side + 2 * cap)
    phi = rng.uniform(0, 2 * np.pi, n)
    out = np.empty((n, 3))
    out[:, 0] = rx * np.cos(phi)
    out[:, 1] = ry * np.sin(phi)
    out[:, 2] = rng.uniform(-hz, hz, n)
    caps = ~on_side
    r = np.sqrt(rng.random(caps.sum()))
    out[caps, 0] *= r
    out[caps, 1] *= r
    out[caps, 2] = np.where(rng.random(caps.sum()) < 0.5, -hz, hz)
    return out


def _sample_ell(rng, size, n):
    """L-shaped solid: a base slab plus an upright slab along the back."""
    w, d, h = size
    lo = -np.asarray(size) / 2
    base = (lo, lo + np.array([w, d, h / 3]))
    back = (lo + np.array([0, 2 * d / 3, 0]), lo + np.array([w, d, h]))

    def surface(box, m):
        c = (box[0] + box[1]) / 2
        return _sample_box(rng, (box[1] - box[0]) / 2, m) + c

    def strictly_inside(p, box, eps=1e-12):
        return np.all((p > box[0] + eps) & (p < box[1] - eps), axis=1)

    pts = []
    total = 0
    areas = []
    for b in (base, back):
        e = b[1] - b[0]
        areas.append(e[0] * e[1] + e[0] * e[2] + e[1] * e[2])
    frac = np.array(areas) / sum(areas)
    while total < n:
        m = 2 * (n - total) + 16
        for b, other, f in ((base, back, frac[0]), (back, base, frac[1])):
            p = surface(b, max(1, int(m * f)))
            p = p[~strictly_inside(p, other)]
            pts.append(p)
            total += len(p)
    pts = np.concatenate(pts)
    return pts[rng.permutation(len(pts))[:n]]


def generate_primitive(shape, size, count, seed=0, opacity=1.0):
    """Uniformly surface-sample a primitive scaled to ``size``.

    Parameters
    ----------
    shape : {"box", "sphere", "cylinder", "ell"}
        Sphere and cylinder take per-axis semi-extents from ``size``, so a
        non-cubic size gives an ellipsoid or an elliptic cylinder.
    size : array_like, shape (3,)
        Full extents (width, depth, height) in meters.
    count : int
        Exact number of Gaussians, at least 8.
    seed : int or sequence of int
        Seed for :func:`numpy.random.default_rng`.

    Returns
    -------
    GaussianCloud
        Centered at the origin, isotropic scales matched to sample spacing.

    Notes
    -----
    Symmetric shapes are sampled in orbits of the eight axis reflections,
    which keeps the sample covariance diagonal so the PCA box lines up with
    the primitive's own axes.
    """
    if shape not in SHAPES:
        raise ValueError(f"invalid shape {shape!r}; expected one of {SHAPES}")
    count = int(count)
    if count < MIN_COUNT:
        raise ValueError(f"count must be >= {MIN_COUNT}, got {count}")
    size = np.asarray(size, dtype=float).reshape(3)
    if np.any(size <= 0):
        raise ValueError("size must be strictly positive")
    rng = np.random.default_rng(seed)
    half = size / 2

    if shape == "ell":
        pts = _sample_ell(rng, size, count)
    else:
        sampler = {"box": _sample_box, "sphere": _sample_ellipsoid, "cylinder": _sample_cylinder}[shape]
        n_orbits = -(-count // 8)
        base = np.abs(sampler(rng, half, n_orbits))
        pts = (base[:, None, :] * _REFLECTIONS[None, :, :]).reshape(-1, 3)[:count]

    if shape == "box":
        area = 2 * (size[0] * size[1] + size[0] * size[2] + size[1] * size[2])
    elif shape == "sphere":
        a, b, c = half
        p = 1.6075
        area = 4 * np.pi * (((a * b) ** p + (a * c) ** p + (b * c) ** p) / 3) ** (1 / p)
    elif shape == "cylinder":
        area = np.pi * half[0] * half[1] * 2 + np.pi * (half[0] + half[1]) * size[2]
    else:
        area = 2 * (size[0] * size[1] + size[0] * size[2] + size[1] * size[2])
    spacing = np.sqrt(area / count)
    scales = np.full((count, 3), 0.5 * spacing)
    return GaussianCloud(pts, scales, np.full(count, float(opacity)))
