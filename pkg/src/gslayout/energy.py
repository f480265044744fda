"""Physical and layout energy terms and their per-scene assembly.

Each term has a plain value function.  :func:`assemble` evaluates the terms a
scene graph switches on (per edge from the layout pool, per node from
``node_terms``), returns an :class:`EnergyBreakdown` and, on request, the
gradients of the physical and layout totals with respect to every pose.

Pose gradients are ``[dE/dt, dE/dw]`` with ``w`` the axis-angle vector
itself.  Terms whose value depends on a discrete choice (nearest neighbor,
closest pair, best axis pair, bottom face) are differentiated with that
choice held fixed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gscloud import SpatialIndex, bottom_vertices_z, fit_obb, top_height
from .gscloud.obb import _CORNERS
from .gscloud.transforms import point_grads_to_pose
from .pools import LAYOUT_TERMS, PHYSICAL_TERMS, lookup_layout

_EPS = 1e-9
GROUP = {**{t: "physical" for t in PHYSICAL_TERMS}, **{t: "layout" for t in LAYOUT_TERMS}}


class EnergyError(ValueError):
    pass


@dataclass
class EnergyHyper:
    lambda_ground: float = 1.0
    k_rep: float = 1.0
    k_spring: float = 10.0
    d_anchor: float = 0.02
    contact_gap: float = 0.005
    contact_tol: float = 0.01  # closest-pair distance that counts as touching for the anchor latch

    def __post_init__(self):
        for name in ("lambda_ground", "k_rep", "k_spring"):
            if getattr(self, name) <= 0:
                raise EnergyError(f"{name} must be positive")
        if self.d_anchor < 0 or self.contact_gap < 0 or self.contact_tol < 0:
            raise EnergyError("d_anchor, contact_gap and contact_tol must be >= 0")

    @classmethod
    def from_pools(cls, pools, **overrides):
        kw = {k: v for k, v in pools.hyper.items() if k in cls.__dataclass_fields__}
        kw.update(overrides)
        return cls(**kw)


# ---------------------------------------------------------------------------
# individual terms


def gravity_energy(z, lambda_ground):
    """``mean(z)^2 + lambda * max(0, -min(z))`` over bottom-vertex heights."""
    z = np.asarray(z, dtype=float)
    return float(z.mean() ** 2 + lambda_ground * max(0.0, -z.min()))


def _gravity_dz(z, lambda_ground):
    g = np.full(len(z), 2.0 * z.mean() / len(z))
    zmin = z.min()
    if zmin < 0:
        # subgradient shared over vertices tied for lowest, so a level face gets no torque
        tied = z <= zmin + 1e-9 * max(1.0, abs(zmin))
        g[tied] -= lambda_ground / tied.sum()
    return g


def anchor_energy(a1, a2, d_anchor, k_spring):
    """Elastic potential ``k/2 (|a2 - a1| - d)^2``."""
    dist = float(np.linalg.norm(np.asarray(a2, dtype=float) - np.asarray(a1, dtype=float)))
    return 0.5 * k_spring * (dist - d_anchor) ** 2


def centroid_energy(c_z, c_z_ref):
    return float((c_z - c_z_ref) ** 2)


def proximity_energy(d_min, d_prox):
    return float(max(0.0, d_min - d_prox) ** 2)


def attachment_energy(d_min, d_ideal):
    return float((d_min - d_ideal) ** 2)


def rotation_energy(rotation, theta_max):
    theta = float(np.linalg.norm(rotation))
    return float(max(0.0, theta - theta_max) ** 2)


def _axis_pair(axes_i, axes_j):
    """``(a, b, value)`` of the worst axis of ``i`` measured against its nearest axis of ``j``."""
    dots = np.abs(axes_i @ axes_j.T)
    b_of_a = np.argmax(dots, axis=1)
    per_axis = 1.0 - dots[np.arange(3), b_of_a]
    a = int(np.argmax(per_axis))
    return a, int(b_of_a[a]), float(per_axis[a])


def _projector(target_axis, free_axes=()):
    P = np.eye(3)
    for ax in (target_axis, *free_axes):
        ax = np.asarray(ax, dtype=float)
        n = np.linalg.norm(ax)
        if n < _EPS:
            continue
        ax = P @ (ax / n)
        n = np.linalg.norm(ax)
        if n > _EPS:
            ax = ax / n
            P = P - np.outer(ax, ax)
    return P


def alignment_energy(obb_i, obb_j, target_axis, free_axes=()):
    """Axis misalignment plus the squared center offset off the relation direction.

    The axis part takes every principal axis of ``obb_i``, finds the closest
    axis of ``obb_j`` (``1 - |a.b|``) and keeps the worst of the three.  The
    offset part removes the components of ``center_i - center_j`` along
    ``target_axis`` and along any ``free_axes``; a zero target axis removes
    nothing.
    """
    _, _, axis_part = _axis_pair(obb_i.axes, obb_j.axes)
    r = _projector(target_axis, free_axes) @ (obb_i.center - obb_j.center)
    return float(axis_part + r @ r)


def _cos_terms(mu, q, nn):
    v1 = mu - q
    v2 = nn - mu
    n1 = np.linalg.norm(v1, axis=1)
    n2 = np.linalg.norm(v2, axis=1)
    ok = (n1 >= _EPS) & (n2 >= _EPS)
    cos = np.zeros(len(mu))
    cos[ok] = np.einsum("ij,ij->i", v1[ok], v2[ok]) / (n1[ok] * n2[ok])
    return v1, v2, n1, n2, ok, cos


def penetration_energy(cloud1, pose1, cloud2, pose2, k_rep=1.0, gated=True,
                       index1=None, obb1=None, center2=None):
    """Negative-cosine penetration penalty of ``O2``'s Gaussians against ``O1``.

    For every mean ``mu`` of ``O2`` with nearest ``O1`` mean ``nn``, the angle
    between ``mu - q2`` (``q2`` the center of ``O2``) and ``nn - mu`` is
    penalized by ``max(0, -cos)``; the sum is scaled by ``k_rep / N2``.

    With ``gated`` only means of ``O2`` lying inside ``O1``'s bounding box
    contribute.  Ungated, the outward-facing side of any separated object is
    penalized as well, since its nearest ``O1`` point lies behind it.
    ``center2`` replaces ``q2`` by a fixed world point.
    """
    return _penetration(cloud1, pose1, cloud2, pose2, k_rep, gated, index1, obb1, center2=center2)[0]


def _penetration(cloud1, pose1, cloud2, pose2, k_rep, gated, index1=None, obb1=None,
                 grad=None, center2=None):
    """Value and optional ``(g1, g2)`` pose gradients.

    ``grad="pushout"`` returns the gradient of ``sum c_i depth_i`` with the
    per-point penalty ``c_i`` held fixed and ``depth_i`` the distance from
    the Gaussian to the nearest face of ``O1``'s box, which drives each
    offending Gaussian out through that face.  The angle-only expression is
    nearly constant along the contact normal and gives no separating
    direction.
    ``grad="exact"`` differentiates the angle expression with fixed
    neighbors.
    """
    if len(cloud1) == 0 or len(cloud2) == 0:
        raise EnergyError("empty cloud")
    R2 = pose2.matrix
    mu_all = cloud2.means @ R2.T + pose2.translation
    q_local = cloud2.means.mean(axis=0)
    q2 = R2 @ q_local + pose2.translation if center2 is None else np.asarray(center2, dtype=float)
    N = len(cloud2)
    if gated:
        if obb1 is None:
            obb1 = fit_obb(cloud1.means).transformed(pose1)
        sel = np.nonzero(obb1.contains(mu_all))[0]
    else:
        sel = np.arange(N)
    g1, g2 = np.zeros(6), np.zeros(6)
    if len(sel) == 0:
        return 0.0, g1, g2
    index1 = SpatialIndex.from_cloud(cloud1, pose1) if index1 is None else index1.with_pose(pose1)
    mu = mu_all[sel]
    ids, _ = index1.query(mu)
    R1 = pose1.matrix
    nn = cloud1.means[ids] @ R1.T + pose1.translation
    v1, v2, n1, n2, ok, cos = _cos_terms(mu, q2, nn)
    pen = np.maximum(0.0, -cos)
    value = float(k_rep / N * pen.sum())
    if grad is None:
        return value, g1, g2
    act = ok & (pen > 0)
    if not np.any(act):
        return value, g1, g2
    s = k_rep / N
    if grad == "pushout":
        if obb1 is None:
            obb1 = fit_obb(cloud1.means).transformed(pose1)
        loc = (mu[act] - obb1.center) @ obb1.axes.T
        margin = obb1.half_extents - np.abs(loc)
        ax = np.argmin(margin, axis=1)
        inside = margin[np.arange(len(ax)), ax] >= 0
        normal = np.sign(loc[np.arange(len(ax)), ax])[:, None] * obb1.axes[ax]
        c = (pen[act] * inside)[:, None]
        # gradient of c * depth, depth = distance to the nearest face of O1's box
        g_mu = -s * c * normal
        g2 = point_grads_to_pose(cloud2.means[sel[act]], g_mu, pose2.rotation, R2)
        g1 = point_grads_to_pose(pose1.inverse_apply(mu[act]), -g_mu, pose1.rotation, R1)
        return value, g1, g2
    if grad == "exact":
        u1 = v1[act] / n1[act, None]
        u2 = v2[act] / n2[act, None]
        cs = cos[act, None]
        dc_dv1 = (u2 - cs * u1) / n1[act, None]
        dc_dv2 = (u1 - cs * u2) / n2[act, None]
        # energy is -cos on the active set
        g_mu = -s * (dc_dv1 - dc_dv2)
        g_nn = -s * dc_dv2
        g_q = s * dc_dv1.sum(axis=0)
    else:
        raise ValueError(f"unknown gradient mode {grad!r}")
    loc2 = cloud2.means[sel[act]]
    g2 = point_grads_to_pose(loc2, g_mu, pose2.rotation, R2)
    if center2 is None:
        g2 = g2 + point_grads_to_pose(q_local[None], g_q[None], pose2.rotation, R2)
    g1 = point_grads_to_pose(cloud1.means[ids[act]], g_nn, pose1.rotation, R1)
    return value, g1, g2


# ---------------------------------------------------------------------------
# scene assembly


@dataclass
class TermRecord:
    name: str
    group: str
    nodes: tuple  # labels involved: (label,) or (source, target)
    weight: float
    value: float
    active: bool = True

    @property
    def contribution(self):
        return self.weight * self.value

    def to_dict(self):
        return {"name": self.name, "group": self.group, "nodes": list(self.nodes),
                "weight": self.weight, "value": self.value, "active": self.active}


@dataclass
class EnergyBreakdown:
    terms: list = field(default_factory=list)
    grad_p: dict = field(default_factory=dict)
    grad_l: dict = field(default_factory=dict)

    @property
    def E_p(self):
        return float(sum(t.contribution for t in self.terms if t.group == "physical"))

    @property
    def E_l(self):
        return float(sum(t.contribution for t in self.terms if t.group == "layout"))

    def total(self, name, weighted=False):
        """Sum of one term over the scene (unweighted by default)."""
        return float(sum(t.contribution if weighted else t.value for t in self.terms if t.name == name))

    def by_name(self):
        out = {}
        for t in self.terms:
            out[t.name] = out.get(t.name, 0.0) + t.contribution
        return out

    def to_dict(self):
        return {"E_p": self.E_p, "E_l": self.E_l, "per_term": self.by_name(),
                "terms": [t.to_dict() for t in self.terms]}


class Scene:
    """A scene graph bound to clouds, poses, pools and hyperparameters.

    Local boxes, KD-trees and weighted centers are computed once per cloud;
    poses are the only thing that changes between evaluations.
    """

    def __init__(self, graph, clouds, poses, pools, hyper=None, penetration_grad="pushout"):
        labels = graph.labels
        for lab in labels:
            if lab not in clouds:
                raise EnergyError(f"no cloud for label {lab!r}")
            if lab not in poses:
                raise EnergyError(f"no pose for label {lab!r}")
        self.graph = graph
        self.pools = pools
        self.hyper = hyper or EnergyHyper.from_pools(pools)
        self.clouds = dict(clouds)
        self.poses = {lab: poses[lab].copy() for lab in labels}
        self.penetration_grad = penetration_grad
        self.obb_local = {lab: fit_obb(self.clouds[lab].means) for lab in labels}
        self.index = {lab: SpatialIndex.from_cloud(self.clouds[lab]) for lab in labels}
        self.center_local = {lab: self.clouds[lab].weighted_center() for lab in labels}
        self.centroid_ref = {}
        # (source id, target id) -> (point on source, point on target), local frames
        self.anchors = {k: (np.asarray(a, float), np.asarray(b, float)) for k, (a, b) in graph.anchors.items()}
        self._layouts = [lookup_layout(e.relation, pools) for e in graph.edges]

    # -- geometry under the current poses
    def world_obb(self, label, poses=None):
        poses = poses or self.poses
        return self.obb_local[label].transformed(poses[label])

    def centroid(self, label, poses=None):
        poses = poses or self.poses
        return poses[label].apply(self.center_local[label])

    def label(self, node_id):
        return self.graph.nodes[node_id].label

    def gravity_mode(self, node_id):
        """``("support", [target ids])``, ``("none", [])`` or ``("ground", [])``."""
        modes = [(lay.gravity, e.target) for e, lay in zip(self.graph.edges, self._layouts)
                 if e.source == node_id]
        support = [t for m, t in modes if m == "support"]
        if support:
            return "support", support
        if any(m == "none" for m, _ in modes):
            return "none", []
        return "ground", []

    def theta_max(self, node_id):
        caps = [lay.theta_max for e, lay in zip(self.graph.edges, self._layouts) if e.source == node_id]
        return min(caps) if caps else self.pools.node_terms["theta_max"]

    def edge_axis(self, k):
        """Relation direction for edge ``k`` scaled by the two objects' half-extent sums."""
        e, lay = self.graph.edges[k], self._layouts[k]
        E = self.axis_extent(self.label(e.source)) + self.axis_extent(self.label(e.target))
        return lay.scale * lay.direction * E

    def axis_extent(self, label):
        """Half-extent of the local OBB along the local x, y and z axes."""
        obb = self.obb_local[label]
        return np.abs(obb.axes).T @ obb.half_extents

    def closest_pair(self, k, poses=None):
        poses = poses or self.poses
        e = self.graph.edges[k]
        a, b = self.label(e.source), self.label(e.target)
        pa, pb = poses[a], poses[b]
        ids, dist = self.index[b].with_pose(pb).query(pa.apply(self.clouds[a].means))
        ia = int(np.argmin(dist))
        return ia, int(ids[ia]), float(dist[ia])

    def pair_penetration(self, k, poses=None, grad=None):
        """Penetration evaluated both ways across edge ``k``: value, grad source, grad target."""
        poses = poses or self.poses
        e = self.graph.edges[k]
        a, b = self.label(e.source), self.label(e.target)
        ca, cb = self.clouds[a], self.clouds[b]
        pa, pb = poses[a], poses[b]
        k_rep = self.hyper.k_rep
        v1, gb1, ga1 = _penetration(cb, pb, ca, pa, k_rep, True, self.index[b],
                                    self.world_obb(b, poses), grad)
        v2, ga2, gb2 = _penetration(ca, pa, cb, pb, k_rep, True, self.index[a],
                                    self.world_obb(a, poses), grad)
        return v1 + v2, ga1 + ga2, gb1 + gb2

    def latch_anchors(self, poses=None):
        """Fix anchor pairs for anchor-requiring edges that just came into contact."""
        poses = poses or self.poses
        new = []
        for k, (e, lay) in enumerate(zip(self.graph.edges, self._layouts)):
            key = (e.source, e.target)
            if not lay.anchor_required or key in self.anchors:
                continue
            ia, ib, d = self.closest_pair(k, poses)
            if d <= self.hyper.contact_tol or self.pair_penetration(k, poses)[0] > 0:
                a, b = self.label(e.source), self.label(e.target)
                self.anchors[key] = (self.clouds[a].means[ia].copy(), self.clouds[b].means[ib].copy())
                new.append(key)
        return new

    def capture_centroid_refs(self, poses=None):
        poses = poses or self.poses
        self.centroid_ref = {lab: float(self.centroid(lab, poses)[2]) for lab in self.graph.labels}


def _add(grads, label, g, w):
    if w != 0:
        grads[label] = grads[label] + w * g


def assemble(scene, poses=None, with_grad=False, require_anchors=False):
    """Evaluate every switched-on term of the scene.

    Returns an :class:`EnergyBreakdown`; with ``with_grad`` its ``grad_p``
    and ``grad_l`` map each label to the 6-vector gradient of ``E_p`` and
    ``E_l``.  Unlatched anchor terms are listed with ``active=False`` and
    value 0 unless ``require_anchors`` is set, which raises instead.
    """
    poses = poses or scene.poses
    graph, hyper, nt = scene.graph, scene.hyper, scene.pools.node_terms
    labels = graph.labels
    for lab in labels:
        if lab not in poses:
            raise EnergyError(f"no pose for label {lab!r}")
    out = EnergyBreakdown()
    gp = {lab: np.zeros(6) for lab in labels}
    gl = {lab: np.zeros(6) for lab in labels}
    obbs = {lab: scene.obb_local[lab].transformed(poses[lab]) for lab in labels}
    mats = {lab: poses[lab].matrix for lab in labels}
    pen_mode = scene.penetration_grad if with_grad else None

    for k, (e, lay) in enumerate(zip(graph.edges, scene._layouts)):
        a, b = scene.label(e.source), scene.label(e.target)
        pair = (a, b)
        w = lay.weight
        if w("penetration") > 0:
            v, ga, gb = scene.pair_penetration(k, poses, pen_mode)
            out.terms.append(TermRecord("penetration", "physical", pair, w("penetration"), v))
            if with_grad:
                _add(gp, a, ga, w("penetration"))
                _add(gp, b, gb, w("penetration"))
        if w("anchor") > 0:
            anc = scene.anchors.get((e.source, e.target))
            if anc is None:
                if require_anchors:
                    raise EnergyError(f"anchor for {a} {e.relation.value} {b} is unresolved")
                out.terms.append(TermRecord("anchor", "physical", pair, w("anchor"), 0.0, False))
            else:
                A1 = poses[a].apply(anc[0])
                A2 = poses[b].apply(anc[1])
                v = anchor_energy(A1, A2, hyper.d_anchor, hyper.k_spring)
                out.terms.append(TermRecord("anchor", "physical", pair, w("anchor"), v))
                if with_grad:
                    diff = A2 - A1
                    dist = np.linalg.norm(diff)
                    if dist > _EPS:
                        g = hyper.k_spring * (dist - hyper.d_anchor) * diff / dist
                        _add(gp, a, point_grads_to_pose(anc[0][None], -g[None], poses[a].rotation, mats[a]), w("anchor"))
                        _add(gp, b, point_grads_to_pose(anc[1][None], g[None], poses[b].rotation, mats[b]), w("anchor"))
        if w("alignment") > 0:
            axis = scene.edge_axis(k)
            free = ((0.0, 0.0, 1.0),) if abs(axis[2]) < _EPS and np.linalg.norm(axis) > _EPS else ()
            oa, ob = obbs[a], obbs[b]
            v = alignment_energy(oa, ob, axis, free)
            out.terms.append(TermRecord("alignment", "layout", pair, w("alignment"), v))
            if with_grad:
                ia, ib, _ = _axis_pair(oa.axes, ob.axes)
                sgn = np.sign(oa.axes[ia] @ ob.axes[ib]) or 1.0
                # d(1 - |a.b|) = -sgn (b.da + a.db)
                ga = point_grads_to_pose(scene.obb_local[a].axes[ia][None], (-sgn * ob.axes[ib])[None],
                                         poses[a].rotation, mats[a], translate=False)
                gb = point_grads_to_pose(scene.obb_local[b].axes[ib][None], (-sgn * oa.axes[ia])[None],
                                         poses[b].rotation, mats[b], translate=False)
                P = _projector(axis, free)
                r = P @ (oa.center - ob.center)
                gc = 2.0 * P @ r
                ga = ga + point_grads_to_pose(scene.obb_local[a].center[None], gc[None], poses[a].rotation, mats[a])
                gb = gb + point_grads_to_pose(scene.obb_local[b].center[None], -gc[None], poses[b].rotation, mats[b])
                _add(gl, a, ga, w("alignment"))
                _add(gl, b, gb, w("alignment"))
        if w("proximity") > 0 or w("attachment") > 0:
            ia, ib, d = scene.closest_pair(k, poses)
            pa_loc, pb_loc = scene.clouds[a].means[ia], scene.clouds[b].means[ib]
            diff = poses[b].apply(pb_loc) - poses[a].apply(pa_loc)
            u = diff / d if d > _EPS else np.zeros(3)
            for name, val, slope in (
                ("proximity", proximity_energy(d, lay.d_prox), 2.0 * max(0.0, d - lay.d_prox)),
                ("attachment", attachment_energy(d, lay.d_ideal), 2.0 * (d - lay.d_ideal)),
            ):
                if w(name) <= 0:
                    continue
                out.terms.append(TermRecord(name, "layout", pair, w(name), val))
                if with_grad and slope != 0:
                    g = slope * u
                    _add(gl, a, point_grads_to_pose(pa_loc[None], -g[None], poses[a].rotation, mats[a]), w(name))
                    _add(gl, b, point_grads_to_pose(pb_loc[None], g[None], poses[b].rotation, mats[b]), w(name))

    for node in graph.nodes:
        lab = node.label
        pose, R = poses[lab], mats[lab]
        mode, supports = scene.gravity_mode(node.id)
        if nt["gravity"] > 0 and mode != "none":
            ref = 0.0
            if mode == "support":
                ref = max(top_height(obbs[scene.label(t)]) for t in supports) + hyper.contact_gap
            obb = obbs[lab]
            z = bottom_vertices_z(obb) - ref
            out.terms.append(TermRecord("gravity", "physical", (lab,), nt["gravity"],
                                        gravity_energy(z, hyper.lambda_ground)))
            if with_grad:
                idx, _, _ = obb.face((0.0, 0.0, -1.0))
                loc = scene.obb_local[lab].center + (_CORNERS[idx] * scene.obb_local[lab].half_extents) @ scene.obb_local[lab].axes
                g = np.zeros((4, 3))
                g[:, 2] = _gravity_dz(z, hyper.lambda_ground)
                _add(gp, lab, point_grads_to_pose(loc, g, pose.rotation, R), nt["gravity"])
        if nt["centroid"] > 0:
            ref = scene.centroid_ref.get(lab)
            if ref is None:
                out.terms.append(TermRecord("centroid", "physical", (lab,), nt["centroid"], 0.0, False))
            else:
                cz = float(pose.apply(scene.center_local[lab])[2])
                out.terms.append(TermRecord("centroid", "physical", (lab,), nt["centroid"],
                                            centroid_energy(cz, ref)))
                if with_grad:
                    g = np.array([[0.0, 0.0, 2.0 * (cz - ref)]])
                    _add(gp, lab, point_grads_to_pose(scene.center_local[lab][None], g, pose.rotation, R),
                         nt["centroid"])
        if nt["rotation"] > 0:
            th = scene.theta_max(node.id)
            out.terms.append(TermRecord("rotation", "layout", (lab,), nt["rotation"],
                                        rotation_energy(pose.rotation, th)))
            if with_grad:
                ang = np.linalg.norm(pose.rotation)
                if ang > th:
                    g = np.zeros(6)
                    g[3:] = 2.0 * (ang - th) * pose.rotation / ang
                    _add(gl, lab, g, nt["rotation"])

    if with_grad:
        out.grad_p, out.grad_l = gp, gl
    return out
