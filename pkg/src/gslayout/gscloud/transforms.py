"""Axis-angle rotation helpers and pose-gradient plumbing."""
from __future__ import annotations

import numpy as np

_SMALL = 1e-8


def skew(w):
    """Cross-product matrix ``[w]x`` so that ``skew(w) @ v == np.cross(w, v)``."""
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def rotvec_to_matrix(w):
    """Rodrigues formula for an axis-angle vector (angle = norm)."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    K = skew(w)
    if theta < _SMALL:
        return np.eye(3) + K + 0.5 * K @ K
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * K + b * K @ K


def right_jacobian(w):
    """Right Jacobian of SO(3): ``R(w + d) ~= R(w) Exp(J_r(w) d)``."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    K = skew(w)
    if theta < _SMALL:
        return np.eye(3) - 0.5 * K + K @ K / 6.0
    return (
        np.eye(3)
        - (1.0 - np.cos(theta)) / theta**2 * K
        + (theta - np.sin(theta)) / theta**3 * K @ K
    )


def canonicalize_rotvec(w):
    """Return an equivalent axis-angle vector whose angle lies in [0, pi]."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    if theta <= np.pi:
        return w.copy()
    axis = w / theta
    theta = np.mod(theta, 2.0 * np.pi)
    if theta > np.pi:
        theta = 2.0 * np.pi - theta
        axis = -axis
    return axis * theta


def point_grads_to_pose(local_points, grads, rotvec, R=None, translate=True):
    """Chain-rule world-point gradients back to (translation, rotvec).

    Parameters
    ----------
    local_points : array, shape (n, 3)
        Points ``v`` in the object frame; world point is ``R v + t``.
    grads : array, shape (n, 3)
        ``dE/dp`` for each world point.
    rotvec : array, shape (3,)
        Current axis-angle rotation.
    translate : bool
        False for direction vectors, which do not move with translation.

    Returns
    -------
    g : array, shape (6,)
        ``[dE/dt, dE/dw]``.
    """
    local_points = np.atleast_2d(local_points)
    grads = np.atleast_2d(grads)
    if R is None:
        R = rotvec_to_matrix(rotvec)
    g = np.zeros(6)
    if translate:
        g[:3] = grads.sum(axis=0)
    # d(Rv)/dw = -R [v]x J_r  =>  grad_w = J_r^T sum(v x R^T g)
    torque = np.cross(local_points, grads @ R).sum(axis=0)
    g[3:] = right_jacobian(rotvec).T @ torque
    return g
