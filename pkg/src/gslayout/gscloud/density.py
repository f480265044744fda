"""Scale-aware density adjustment: rescale a cloud while keeping points per m^3."""
from __future__ import annotations

import warnings

import numpy as np
from scipy.spatial import cKDTree

from .cloud import GaussianCloud
from .obb import GeometryWarning, TRIM_FRACTION

FEATURE_K = 16
UPSAMPLE_K = 6
# share of the downsampled budget filled by the voxel grid; the rest are
# high-curvature points put back after voxel reduction
VOXEL_SHARE = 0.8
_IDENTITY_TOL = 1e-9


def curvature_score(cloud, k_neighbors=FEATURE_K):
    """Surface variation ``l0 / (l0 + l1 + l2)`` of each point's k-NN covariance.

    Scores lie in [0, 1/3]: 0 on a flat patch, larger at edges and corners.
    The neighborhood includes the point itself.
    """
    pts = cloud.means if isinstance(cloud, GaussianCloud) else np.asarray(cloud, dtype=float)
    n = len(pts)
    if k_neighbors < 4:
        raise ValueError("k_neighbors must be >= 4")
    if n <= k_neighbors:
        raise ValueError(f"need more than k_neighbors={k_neighbors} points, got {n}")
    _, idx = cKDTree(pts).query(pts, k=k_neighbors)
    nb = pts[idx]
    nb = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", nb, nb) / k_neighbors
    ev = np.clip(np.linalg.eigvalsh(cov), 0.0, None)
    tot = ev.sum(axis=1)
    out = np.zeros(n)
    ok = tot > 0
    out[ok] = ev[ok, 0] / tot[ok]
    return out


def trimmed_extents(points, trim=TRIM_FRACTION):
    """Axis-aligned extents of the points after dropping the farthest ``trim`` share."""
    points = np.asarray(points, dtype=float)
    d = np.linalg.norm(points - points.mean(axis=0), axis=1)
    keep = len(points) - int(np.floor(trim * len(points)))
    kept = points[np.argsort(d, kind="stable")[:keep]]
    return kept.max(axis=0) - kept.min(axis=0)


def _is_degenerate(points):
    c = points - points.mean(axis=0)
    ev = np.linalg.eigvalsh(c.T @ c / len(points))
    return ev[0] <= 1e-10 * max(ev[-1], 1e-300)


def _upsample(means, scales, opac, n_target, rng):
    """Midpoints of random nearest-neighbor pairs, at most doubling per pass."""
    while len(means) < n_target:
        n = len(means)
        k = min(UPSAMPLE_K, n - 1)
        _, nb = cKDTree(means).query(means, k=k + 1)
        m = min(n_target - n, n)
        src = rng.choice(n, size=m, replace=False)
        dst = nb[src, rng.integers(1, k + 1, size=m)]
        means = np.concatenate([means, 0.5 * (means[src] + means[dst])])
        scales = np.concatenate([scales, 0.5 * (scales[src] + scales[dst])])
        opac = np.concatenate([opac, 0.5 * (opac[src] + opac[dst])])
    return means, scales, opac, None


def _voxel_representatives(points, voxel):
    """Index of the point nearest each occupied voxel's centroid."""
    keys = np.floor(points / voxel).astype(np.int64)
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    n_vox = inv.max() + 1
    cent = np.zeros((n_vox, 3))
    np.add.at(cent, inv, points)
    cent /= np.bincount(inv, minlength=n_vox)[:, None]
    d = np.linalg.norm(points - cent[inv], axis=1)
    order = np.lexsort((np.arange(len(points)), d, inv))
    first = np.ones(len(order), dtype=bool)
    first[1:] = inv[order[1:]] != inv[order[:-1]]
    return np.sort(order[first])


def voxel_downsample(points, n_max):
    """Largest voxel reduction keeping at most ``n_max`` points (bisection on voxel size)."""
    span = float(np.ptp(points, axis=0).max()) or 1.0
    lo, hi = span * 1e-6, span * 2.0
    best = _voxel_representatives(points, hi)
    for _ in range(40):
        mid = np.sqrt(lo * hi)
        rep = _voxel_representatives(points, mid)
        if len(rep) <= n_max:
            best, hi = rep, mid
        else:
            lo = mid
        if len(best) == n_max:
            break
    return best


def _downsample(means, scales, opac, n_target, k):
    # per-axis extreme points are always kept, so the shrunk cloud keeps its extent
    ext = np.unique(np.concatenate([means.argmin(axis=0), means.argmax(axis=0)]))
    n_vox = max(1, int(round(VOXEL_SHARE * n_target)) - len(ext))
    keep_vox = np.union1d(voxel_downsample(means, n_vox), ext)[:max(n_target, 1)]
    score = curvature_score(means, min(k, len(means) - 1))
    removed = np.setdiff1d(np.arange(len(means)), keep_vox)
    extra = removed[np.argsort(-score[removed], kind="stable")][: n_target - len(keep_vox)]
    keep = np.sort(np.concatenate([keep_vox, extra]))
    return means[keep], scales[keep], opac[keep], keep


def rescale_to(cloud, target, seed=0, k_neighbors=FEATURE_K):
    """Scale a cloud to ``target`` extents while holding its volumetric density.

    The per-axis ratio is taken against the cloud's trimmed local extents.
    The count moves toward ``N * V_new / V_old``: growth interpolates
    midpoints between nearby Gaussians, shrinkage keeps one point per voxel
    and then re-adds the highest-curvature points it dropped.

    Returns
    -------
    GaussianCloud
    """
    target = np.asarray(target, dtype=float).reshape(3)
    if np.any(target <= 0):
        raise ValueError("target size must be positive")
    cur = trimmed_extents(cloud.means)
    cur = np.where(cur > 0, cur, target)
    ratio = target / cur
    if np.all(np.abs(ratio - 1.0) < _IDENTITY_TOL):
        return cloud.copy()
    rng = np.random.default_rng(seed)
    n = len(cloud)
    n_target = max(1, int(round(n * float(np.prod(ratio)))))
    means = cloud.means * ratio
    scales = cloud.scales * ratio
    opac = cloud.opacities.copy()
    extra = dict(cloud.extra)

    if n_target == n:
        keep = np.arange(n)
    elif n < 8 or _is_degenerate(means) or (n_target < n and n <= max(k_neighbors, 4)):
        warnings.warn(
            "degenerate cloud; density adjustment falls back to uniform resampling",
            GeometryWarning,
            stacklevel=2,
        )
        keep = np.sort(rng.choice(n, size=n_target, replace=n_target > n))
        means, scales, opac = means[keep], scales[keep], opac[keep]
    elif n_target > n:
        means, scales, opac, keep = _upsample(means, scales, opac, n_target, rng)
    else:
        means, scales, opac, keep = _downsample(means, scales, opac, n_target, k_neighbors)

    if keep is None:
        # interpolated points have no source row for opaque extra properties
        extra = {}
    else:
        extra = {k: v[keep] for k, v in extra.items()}
    return GaussianCloud(means, scales, opac, cloud.label, extra)
