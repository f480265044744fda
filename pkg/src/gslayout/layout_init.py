"""Chain-based position initialization and per-object scene configurations."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .gscloud import Pose
from .pools import lookup_layout, lookup_size
from .scenegraph import topological_order

MODES = ("mean", "sum")


@dataclass(frozen=True)
class SceneConfig:
    """Per-object record: object id, label, initial position and standard size."""

    id: int
    label: str
    position: tuple
    standard_size: tuple

    def to_dict(self):
        return {"id": self.id, "label": self.label,
                "position": [float(v) for v in self.position],
                "standard_size": [float(v) for v in self.standard_size]}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["id"]), d["label"], tuple(float(v) for v in d["position"]),
                   tuple(float(v) for v in d["standard_size"]))


def configs_to_json(configs):
    return json.dumps([c.to_dict() for c in configs], indent=2, sort_keys=True) + "\n"


def configs_from_json(text):
    return [SceneConfig.from_dict(d) for d in json.loads(text)]


def offset_world(entry, size_source, size_target):
    """``dd * (dx Ex, dy Ey, dz Ez)`` where E sums the two objects' half-extents per axis."""
    return entry.offset(size_source, size_target)


def standard_sizes(graph, pools, overrides=None):
    """Standard size per node id; ``overrides`` maps id -> size (e.g. measured from a PLY)."""
    overrides = overrides or {}
    return {n.id: np.asarray(overrides.get(n.id, lookup_size(n.category, pools).size), dtype=float)
            for n in graph.nodes}


def _components(graph):
    parent = list(range(len(graph.nodes)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for e in graph.edges:
        a, b = find(e.source), find(e.target)
        if a != b:
            parent[max(a, b)] = min(a, b)
    return [find(i) for i in range(len(graph.nodes))]


def initialize_positions(graph, pools, mode="mean", sizes=None, root_positions=None, fixed=None):
    """Initial position of every node, supporters first.

    A node with no outgoing dependency edge is a root.  The first root sits at
    the origin and every further root is pushed along +x until its box clears
    everything placed so far, so disconnected pieces start side by side.  A
    dependent takes the mean (``mode="mean"``) or the plain sum
    (``mode="sum"``) of ``P(supporter) + offset`` over its edges.

    ``root_positions`` pins chosen roots (id -> position) and ``fixed`` pins
    arbitrary nodes, bypassing the chain rule; both are used when a scene is
    extended in place.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    order = topological_order(graph)
    if sizes is None:
        sizes = standard_sizes(graph, pools)
    root_positions = dict(root_positions or {})
    fixed = dict(fixed or {})
    comp = _components(graph)
    half = {i: np.asarray(sizes[i], dtype=float) / 2.0 for i in sizes}

    pos = {}
    # per component: which roots were auto-placed, so whole components can be shifted later
    for i in order:
        deps = graph.dependencies(i)
        if i in fixed:
            pos[i] = np.asarray(fixed[i], dtype=float).copy()
        elif not deps:
            if i in root_positions:
                pos[i] = np.asarray(root_positions[i], dtype=float).copy()
            else:
                pos[i] = np.zeros(3)
                same = [j for j in pos if comp[j] == comp[i] and j != i]
                if same:
                    # second root of one component: put it beside what that component has so far
                    right = max(pos[j][0] + half[j][0] for j in same)
                    pos[i][0] = right + half[i][0]
        else:
            terms = []
            for e in deps:
                entry = lookup_layout(e.relation, pools)
                terms.append(pos[e.target] + offset_world(entry, sizes[i], sizes[e.target]))
            terms = np.array(terms)
            pos[i] = terms.mean(axis=0) if mode == "mean" else terms.sum(axis=0)

    # shift later components so their boxes start where earlier ones end
    pinned = set(root_positions) | set(fixed)
    right = None
    for c in sorted(set(comp)):
        members = [i for i in range(len(comp)) if comp[i] == c]
        if right is not None and not pinned.intersection(members):
            left = min(pos[i][0] - half[i][0] for i in members)
            shift = right - left
            for i in members:
                pos[i] = pos[i] + np.array([shift, 0.0, 0.0])
        r = max(pos[i][0] + half[i][0] for i in members)
        right = r if right is None else max(right, r)
    return {i: pos[i] for i in range(len(graph.nodes))}


def build_configs(graph, pools, positions, sizes=None):
    if sizes is None:
        sizes = standard_sizes(graph, pools)
    return [SceneConfig(n.id, n.label, tuple(float(v) for v in positions[n.id]),
                        tuple(float(v) for v in sizes[n.id]))
            for n in graph.nodes]


def place_clouds(configs, clouds):
    """Initial pose per label: the configured position with no rotation."""
    poses = {}
    for c in configs:
        if c.label not in clouds:
            raise KeyError(f"no cloud for label {c.label!r}")
        poses[c.label] = Pose(np.array(c.position, dtype=float), np.zeros(3))
    return poses
