"""Exact nearest-neighbor queries over posed clouds."""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .cloud import Pose


class SpatialIndex:
    """KD-tree over a cloud's means, queried in world coordinates.

    The tree is built once in the cloud's local frame and world queries are
    mapped through the inverse pose, so re-posing never rebuilds it.
    Ties are broken toward the smallest Gaussian id.
    """

    def __init__(self, points, pose=None):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.points.size == 0:
            raise ValueError("cannot index an empty point set")
        self.pose = pose if pose is not None else Pose()
        self.tree = cKDTree(self.points)

    @classmethod
    def from_cloud(cls, cloud, pose=None):
        return cls(cloud.means, pose)

    def __len__(self):
        return len(self.points)

    def with_pose(self, pose):
        """Share the tree under a different pose."""
        other = object.__new__(SpatialIndex)
        other.points, other.tree, other.pose = self.points, self.tree, pose
        return other

    def world_points(self):
        return self.pose.apply(self.points)

    def query(self, queries, local=False):
        """Nearest ids and distances for an (m, 3) array of queries."""
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        if not local:
            q = self.pose.inverse_apply(q)
        n = len(self.points)
        k = min(2, n)
        d, i = self.tree.query(q, k=k)
        if k == 1:
            return np.atleast_1d(i).astype(np.intp), np.atleast_1d(d)
        ids, dist = i[:, 0].copy(), d[:, 0].copy()
        tied = np.nonzero(d[:, 1] == d[:, 0])[0]
        for r in tied:
            # widen until the tie group is fully enumerated
            kk = 4
            while True:
                kk = min(kk, n)
                dd, ii = self.tree.query(q[r], k=kk)
                if kk == n or dd[-1] > dd[0]:
                    break
                kk *= 2
            ids[r] = ii[dd == dd[0]].min()
        return ids, dist


def nearest_in(index, query):
    """Nearest Gaussian to a single world point: ``(id, distance)``."""
    ids, dist = index.query(np.asarray(query, dtype=float).reshape(1, 3))
    return int(ids[0]), float(dist[0])


def nearest_brute_force(points, queries):
    """O(n m) reference; ties resolved to the smallest id."""
    points = np.atleast_2d(points)
    queries = np.atleast_2d(queries)
    d = np.linalg.norm(queries[:, None, :] - points[None, :, :], axis=2)
    ids = np.argmin(d, axis=1)  # argmin already returns the first minimum
    return ids, d[np.arange(len(queries)), ids]


def min_pair_distance(cloud_a, pose_a, cloud_b, pose_b, index_b=None):
    """Closest pair of posed means across two clouds: ``(id_a, id_b, distance)``."""
    if len(cloud_a) == 0 or len(cloud_b) == 0:
        raise ValueError("empty cloud")
    if index_b is None:
        index_b = SpatialIndex.from_cloud(cloud_b, pose_b)
    else:
        index_b = index_b.with_pose(pose_b)
    ids, dist = index_b.query(pose_a.apply(cloud_a.means))
    ia = int(np.argmin(dist))
    return ia, int(ids[ia]), float(dist[ia])
