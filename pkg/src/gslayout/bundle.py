"""On-disk scene bundles and per-object edits.

A bundle is a directory::

    graph.json           nodes, edges, user anchor overrides
    configs.json         per-object initial position and standard size
    poses.json           label -> current translation and rotation
    clouds/<label>.ply   local-frame Gaussians, one file per object
    meta.json            format, version, seed, latched anchors and the pools used

Every file goes through a temporary file and ``os.replace``, and a file whose
bytes would not change is left alone, so an edit rewrites only the touched
object's cloud plus the shared metadata files.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from . import __version__
from .energy import EnergyHyper, Scene
from .gscloud import Pose, read_ply, rescale_to, write_ply
from .layout_init import SceneConfig, configs_from_json, initialize_positions, standard_sizes
from .pipeline import DEFAULT_POINTS, build_layout, make_cloud, node_seed
from .pools import load_pools, pools_from_dict
from .scenegraph import SceneEdge, SceneGraph, SceneNode, parse_scene_file, singularize

FORMAT = 1


class BundleError(ValueError):
    pass


def _dumps(obj):
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


def write_atomic(path, data):
    """Write ``data`` (bytes) to ``path`` unless the file already holds exactly it.

    Returns True when the file was (re)written.
    """
    path = Path(path)
    if path.exists() and path.read_bytes() == data:
        return False
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return True


def _ply_bytes(cloud):
    fd, tmp = tempfile.mkstemp(suffix=".ply")
    os.close(fd)
    try:
        write_ply(tmp, cloud)
        return Path(tmp).read_bytes()
    finally:
        os.unlink(tmp)


def _pose_dict(p):
    return {"translation": [float(v) for v in p.translation], "rotation": [float(v) for v in p.rotation]}


@dataclass
class SceneBundle:
    graph: SceneGraph
    configs: dict  # label -> SceneConfig
    clouds: dict  # label -> GaussianCloud
    poses: dict  # label -> Pose
    pools: object
    anchors: dict = field(default_factory=dict)  # (source label, target label) -> (a1, a2)
    seed: int = 0
    centroid_ref: dict = field(default_factory=dict)  # label -> reference height from the last run

    # -- construction
    @classmethod
    def build(cls, graph, pools=None, seed=0, points=DEFAULT_POINTS, base_dir=None):
        pools = pools or load_pools()
        configs, clouds, poses = build_layout(graph, pools, seed, points, base_dir)
        bundle = cls(graph, {c.label: c for c in configs}, clouds, poses, pools, {}, seed)
        # clouds are kept as they will read back from disk
        bundle.clouds = {lab: _roundtrip(c) for lab, c in clouds.items()}
        return bundle

    def scene(self, hyper=None, **kw):
        """Energy :class:`Scene` over the current poses with stored anchors restored."""
        sc = Scene(self.graph, self.clouds, self.poses, self.pools,
                   hyper or EnergyHyper.from_pools(self.pools), **kw)
        ids = {n.label: n.id for n in self.graph.nodes}
        for (a, b), pts in self.anchors.items():
            sc.anchors.setdefault((ids[a], ids[b]), tuple(np.asarray(p, float) for p in pts))
        sc.centroid_ref.update({lab: z for lab, z in self.centroid_ref.items() if lab in ids})
        return sc

    def absorb(self, scene, poses):
        """Take optimized poses and any anchors latched during the run."""
        for lab, p in poses.items():
            self.poses[lab] = p.copy()
        self.centroid_ref.update({lab: float(z) for lab, z in scene.centroid_ref.items()})
        for (s, t), (a, b) in scene.anchors.items():
            self.anchors[(scene.label(s), scene.label(t))] = (np.asarray(a, float), np.asarray(b, float))

    # -- disk
    def save(self, path):
        """Write the bundle; returns the relative paths actually rewritten or removed."""
        root = Path(path)
        changed = []

        def put(rel, data):
            if write_atomic(root / rel, data):
                changed.append(rel)

        anchors = [{"source": a, "target": b, "source_point": [float(v) for v in p],
                    "target_point": [float(v) for v in q]}
                   for (a, b), (p, q) in sorted(self.anchors.items())]
        put("graph.json", _dumps(self.graph.to_dict()))
        put("configs.json", _dumps([self.configs[lab].to_dict() for lab in self.graph.labels]))
        put("poses.json", _dumps({lab: _pose_dict(self.poses[lab]) for lab in self.graph.labels}))
        for lab in self.graph.labels:
            put(f"clouds/{lab}.ply", _ply_bytes(self.clouds[lab]))
        put("meta.json", _dumps({"format": FORMAT, "version": __version__, "seed": self.seed,
                                 "anchors": anchors, "pools": self.pools.to_dict(),
                                 "centroid_ref": {k: float(v) for k, v in sorted(self.centroid_ref.items())}}))
        cdir = root / "clouds"
        for f in sorted(cdir.glob("*.ply")):
            if f.stem not in self.graph.labels:
                f.unlink()
                changed.append(f"clouds/{f.name}")
        return changed

    @classmethod
    def load(cls, path):
        root = Path(path)
        if not (root / "graph.json").is_file():
            raise BundleError(f"{root} is not a scene bundle (no graph.json)")
        graph = SceneGraph.from_json((root / "graph.json").read_text())
        meta = json.loads((root / "meta.json").read_text())
        if meta.get("format") != FORMAT:
            raise BundleError(f"unsupported bundle format {meta.get('format')!r}")
        pools = pools_from_dict(meta["pools"])
        configs = {c.label: c for c in configs_from_json((root / "configs.json").read_text())}
        raw = json.loads((root / "poses.json").read_text())
        if set(configs) != set(graph.labels) or set(raw) != set(graph.labels):
            raise BundleError("graph, configs and poses disagree on the labels")
        poses = {lab: Pose(raw[lab]["translation"], raw[lab]["rotation"]) for lab in graph.labels}
        clouds = {}
        for lab in graph.labels:
            f = root / "clouds" / f"{lab}.ply"
            if not f.is_file():
                raise BundleError(f"missing cloud {f}")
            clouds[lab] = read_ply(f, label=lab)[0]
        anchors = {(a["source"], a["target"]): (np.asarray(a["source_point"], float),
                                                np.asarray(a["target_point"], float))
                   for a in meta.get("anchors", [])}
        cref = {k: float(v) for k, v in meta.get("centroid_ref", {}).items()}
        return cls(graph, configs, clouds, poses, pools, anchors, int(meta.get("seed", 0)), cref)

    # -- edits
    def node(self, label):
        try:
            return self.graph.node(label)
        except KeyError:
            raise BundleError(f"unknown label {label!r}") from None

    def remove(self, label):
        """Drop an object and every relation touching it; other ids are compacted."""
        node = self.node(label)
        keep = [n for n in self.graph.nodes if n.id != node.id]
        new_id = {n.id: i for i, n in enumerate(keep)}
        nodes = [SceneNode(new_id[n.id], n.category, n.label, n.attributes, n.source) for n in keep]
        edges = [SceneEdge(new_id[e.source], new_id[e.target], e.relation) for e in self.graph.edges
                 if node.id not in (e.source, e.target)]
        overrides = {(new_id[s], new_id[t]): v for (s, t), v in self.graph.anchors.items()
                     if node.id not in (s, t)}
        self.graph = SceneGraph(nodes, edges, overrides)
        for d in (self.configs, self.clouds, self.poses):
            d.pop(label)
        self.configs = {lab: SceneConfig(self.graph.node(lab).id, lab, c.position, c.standard_size)
                        for lab, c in self.configs.items()}
        self.anchors = {k: v for k, v in self.anchors.items() if label not in k}
        self.centroid_ref.pop(label, None)

    def move(self, label, by=None, rotate=None, to=None):
        """Shift a pose by ``by``, or set its translation ``to``; ``rotate`` (rotvec) is applied on top."""
        self.node(label)
        p = self.poses[label]
        t = p.translation.copy() if to is None else np.asarray(to, float).copy()
        if by is not None:
            t = t + np.asarray(by, float)
        r = p.rotation.copy()
        if rotate is not None:
            r = (Rotation.from_rotvec(rotate) * Rotation.from_rotvec(r)).as_rotvec()
        self.poses[label] = Pose(t, r)

    def add(self, fragment, points=DEFAULT_POINTS, base_dir=None):
        """Extend the scene with a scene-file fragment; returns the new labels.

        A relation line may name a new category directly (``chair in_front_of
        table``); it is declared on the fly.  New objects start at the chain
        position computed from the current poses of what they depend on, and
        nothing that already exists moves.
        """
        old = self.graph
        graph = parse_scene_file(_declare_new(fragment, old), base=old)
        new = graph.nodes[len(old.nodes):]
        if not new and len(graph.edges) == len(old.edges):
            raise BundleError("fragment adds nothing")
        sizes = standard_sizes(graph, self.pools)
        for n in old.nodes:
            sizes[n.id] = np.asarray(self.configs[n.label].standard_size, float)
        fixed = {n.id: self.poses[n.label].translation for n in old.nodes}
        pos = initialize_positions(graph, self.pools, sizes=sizes, fixed=fixed)
        self.graph = graph
        for n in new:
            cloud = make_cloud(n, self.pools, self.seed, points, base_dir)
            self.clouds[n.label] = _roundtrip(cloud)
            self.configs[n.label] = SceneConfig(n.id, n.label, tuple(float(v) for v in pos[n.id]),
                                                tuple(float(v) for v in sizes[n.id]))
            self.poses[n.label] = Pose(pos[n.id], np.zeros(3))
        return [n.label for n in new]

    def new_edge_labels(self, n_edges_before, new_labels=()):
        """Labels to re-optimize after edges were appended past ``n_edges_before``.

        An edge with a newly added endpoint only moves that endpoint, so an
        existing support is not shifted under the objects already resting on
        it.  An edge between two existing objects moves both.
        """
        new_labels = set(new_labels)
        out = set(new_labels)
        for e in self.graph.edges[n_edges_before:]:
            ends = {self.graph.nodes[e.source].label, self.graph.nodes[e.target].label}
            out |= ends if not ends & new_labels else ends & new_labels
        return out

    def restyle(self, label, ply_path):
        """Swap an object's Gaussians for a PLY, rescaled to its standard size; the pose is kept."""
        node = self.node(label)
        cloud, _ = read_ply(ply_path)
        cloud = rescale_to(cloud, self.configs[label].standard_size, seed=node_seed(self.seed, node.id))
        cloud.label = label
        self.clouds[label] = _roundtrip(cloud)
        self.anchors = {k: v for k, v in self.anchors.items() if label not in k}

    def incident_labels(self, label):
        """The label plus every label sharing an edge with it."""
        nid = self.graph.node(label).id
        out = {label}
        for e in self.graph.edges:
            if nid in (e.source, e.target):
                out |= {self.graph.nodes[e.source].label, self.graph.nodes[e.target].label}
        return out


def _roundtrip(cloud):
    """The cloud exactly as it reads back from its PLY bytes."""
    fd, tmp = tempfile.mkstemp(suffix=".ply")
    os.close(fd)
    try:
        write_ply(tmp, cloud)
        back, _ = read_ply(tmp, label=cloud.label)
    finally:
        os.unlink(tmp)
    return back


def _declare_new(fragment, graph):
    """Prefix ``object`` declarations for relation sources that name no existing object."""
    known = set(graph.labels) | {n.category for n in graph.nodes}
    decl = []
    for raw in fragment.splitlines():
        line = raw.split("#", 1)[0].strip()
        words = line.split()
        if not words:
            continue
        if words[0].lower() == "object":
            m = line.split(" as ")
            known.add(m[1].split()[0] if len(m) > 1 else words[1].lower())
            continue
        if words[0].lower() == "anchor" or len(words) < 3:
            continue
        src = words[0]
        if src not in known and singularize(src.lower().replace("_", " ")) not in known:
            decl.append(f"object {src.lower().replace('_', ' ')}")
            known.add(src.lower())
    return "\n".join(decl + [fragment])
