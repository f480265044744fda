"""From a scene graph to posed, correctly sized clouds."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .energy import EnergyHyper, Scene
from .gscloud import generate_primitive, read_ply, rescale_to
from .layout_init import build_configs, initialize_positions, place_clouds, standard_sizes
from .pools import lookup_size

DEFAULT_POINTS = 1000


def node_seed(seed, node_id):
    """Per-object seed, so one object's cloud never depends on the others."""
    return [int(seed), int(node_id)]


def make_cloud(node, pools, seed=0, points=DEFAULT_POINTS, base_dir=None):
    """Cloud for one node: its PLY rescaled to the standard size, or a primitive generated at it."""
    entry = lookup_size(node.category, pools)
    if node.source:
        path = Path(node.source)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        cloud, _ = read_ply(path)
        cloud = rescale_to(cloud, entry.size, seed=node_seed(seed, node.id))
    else:
        cloud = generate_primitive(entry.shape, entry.size, points, seed=node_seed(seed, node.id))
    cloud.label = node.label
    return cloud


def build_layout(graph, pools, seed=0, points=DEFAULT_POINTS, base_dir=None, mode="mean"):
    """Clouds, initial configurations and poses for every node.

    Returns
    -------
    configs : list of SceneConfig
    clouds : dict
        label -> GaussianCloud in its local frame
    poses : dict
        label -> Pose at the chained initial position
    """
    sizes = standard_sizes(graph, pools)
    positions = initialize_positions(graph, pools, mode=mode, sizes=sizes)
    configs = build_configs(graph, pools, positions, sizes)
    clouds = {n.label: make_cloud(n, pools, seed, points, base_dir) for n in graph.nodes}
    return configs, clouds, place_clouds(configs, clouds)


def scene_from_prompt(text, pools, seed=0, points=DEFAULT_POINTS, structured=False, hyper=None):
    """Convenience: parse a prompt (or scene file text) and build an energy :class:`Scene`."""
    from .scenegraph import extract_relations, parse_scene_file

    graph = parse_scene_file(text) if structured else extract_relations(text)
    configs, clouds, poses = build_layout(graph, pools, seed, points)
    return Scene(graph, clouds, poses, pools, hyper or EnergyHyper.from_pools(pools)), configs


def supported_heights(scene, poses):
    """Per label: lowest bottom-vertex height above its support (top face or ground)."""
    from .gscloud import bottom_vertices_z, top_height

    out = {}
    for node in scene.graph.nodes:
        mode, supports = scene.gravity_mode(node.id)
        z = bottom_vertices_z(scene.world_obb(node.label, poses))
        if mode == "support":
            ref = max(top_height(scene.world_obb(scene.label(t), poses)) for t in supports)
        elif mode == "ground":
            ref = 0.0
        else:
            continue
        out[node.label] = float(np.min(z) - ref)
    return out
