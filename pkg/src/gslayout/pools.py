"""Size pool and layout pool.

The size pool maps object categories to standard dimensions; the layout pool
gives each canonical relation its placement offset, the energy terms it
switches on and their weights.  Both live in one JSON document, documented in
``docs/pools-schema.md``; the bundled copy is ``data/default_pools.json``.
"""
from __future__ import annotations

import copy
import json
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .gscloud.primitives import SHAPES
from .scenegraph import Relation, normalize_relation, singularize

SIZE_LEVELS = ("tiny", "small", "medium", "large", "huge")
PHYSICAL_TERMS = ("gravity", "penetration", "anchor", "centroid")
LAYOUT_TERMS = ("alignment", "proximity", "attachment", "rotation")
ENERGY_TERMS = PHYSICAL_TERMS + LAYOUT_TERMS
EDGE_TERMS = ("penetration", "anchor", "alignment", "proximity", "attachment")
NODE_TERMS = ("gravity", "centroid", "rotation")
GRAVITY_MODES = ("ground", "support", "none")


class PoolsError(ValueError):
    pass


class PoolsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SizeEntry:
    category: str
    size_level: str
    size: tuple
    aliases: tuple = ()
    shape: str = "box"

    @property
    def half(self):
        return np.asarray(self.size, dtype=float) / 2.0

    def to_dict(self):
        return {"category": self.category, "size_level": self.size_level,
                "size": list(self.size), "aliases": list(self.aliases), "shape": self.shape}


@dataclass(frozen=True)
class LayoutEntry:
    relation: Relation
    delta: tuple
    weights: dict
    anchor_required: bool
    theta_max: float
    d_ideal: float
    d_prox: float
    gravity: str = "ground"

    def weight(self, term):
        return float(self.weights.get(term, 0.0))

    @property
    def direction(self):
        return np.asarray(self.delta[:3], dtype=float)

    @property
    def scale(self):
        return float(self.delta[3])

    def offset(self, size_source, size_target):
        """World offset of the dependent: ``dd * (dx Ex, dy Ey, dz Ez)`` with E the summed half-extents."""
        E = (np.asarray(size_source, dtype=float) + np.asarray(size_target, dtype=float)) / 2.0
        return self.scale * self.direction * E

    def to_dict(self):
        return {"relation": self.relation.value, "delta": list(self.delta),
                "weights": dict(self.weights), "anchor_required": self.anchor_required,
                "theta_max": self.theta_max, "d_ideal": self.d_ideal, "d_prox": self.d_prox,
                "gravity": self.gravity}


@dataclass
class Pools:
    sizes: list
    layouts: list
    default_size: SizeEntry
    size_levels: dict
    node_terms: dict
    hyper: dict
    meta: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self._by_cat = {s.category: s for s in self.sizes}
        self._by_alias = {}
        for s in self.sizes:
            for a in s.aliases:
                self._by_alias.setdefault(a, s)
        self._by_rel = {l.relation: l for l in self.layouts}

    def to_dict(self):
        d = dict(copy.deepcopy(self.meta))
        d.update({
            "size_levels": {k: list(v) for k, v in self.size_levels.items()},
            "default_size": self.default_size.to_dict(),
            "sizes": [s.to_dict() for s in self.sizes],
            "node_terms": dict(self.node_terms),
            "hyper": dict(self.hyper),
            "layouts": [l.to_dict() for l in self.layouts],
        })
        return d


def _num(v, what):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise PoolsError(f"{what} must be a number, got {v!r}")
    return float(v)


def _size_entry(d, levels, where):
    try:
        cat = d["category"].lower()
        level = d["size_level"]
        size = tuple(_num(x, f"{where}.size") for x in d["size"])
    except (KeyError, TypeError, AttributeError) as exc:
        raise PoolsError(f"{where}: malformed size entry ({exc})") from None
    if len(size) != 3:
        raise PoolsError(f"{where}: size needs 3 components")
    if min(size) <= 0:
        raise PoolsError(f"{where} ({cat}): size components must be strictly positive, got {size}")
    if level not in SIZE_LEVELS:
        raise PoolsError(f"{where} ({cat}): unknown size level {level!r}")
    lo, hi = levels[level]
    if not lo <= size[2] < hi:
        raise PoolsError(f"{where} ({cat}): height {size[2]} outside the {level!r} band [{lo}, {hi})")
    shape = d.get("shape", "box")
    if shape not in SHAPES:
        raise PoolsError(f"{where} ({cat}): unknown shape {shape!r}")
    aliases = tuple(a.lower() for a in d.get("aliases", ()))
    return SizeEntry(cat, level, size, aliases, shape)


def _layout_entry(d, where):
    try:
        rel = normalize_relation(d["relation"])
        delta = tuple(_num(x, f"{where}.delta") for x in d["delta"])
        weights = {k: _num(v, f"{where}.weights.{k}") for k, v in d.get("weights", {}).items()}
        entry = LayoutEntry(
            rel, delta, weights, bool(d.get("anchor_required", False)),
            _num(d["theta_max"], f"{where}.theta_max"), _num(d["d_ideal"], f"{where}.d_ideal"),
            _num(d["d_prox"], f"{where}.d_prox"), d.get("gravity", "ground"),
        )
    except (KeyError, TypeError) as exc:
        raise PoolsError(f"{where}: malformed layout entry ({exc})") from None
    except ValueError as exc:
        if isinstance(exc, PoolsError):
            raise
        raise PoolsError(f"{where}: {exc}") from None
    if len(delta) != 4:
        raise PoolsError(f"{where} ({rel.value}): delta must be [dx, dy, dz, dd]")
    for k, w in weights.items():
        if k not in EDGE_TERMS:
            raise PoolsError(f"{where} ({rel.value}): weight names unknown edge term {k!r}")
        if w < 0:
            raise PoolsError(f"{where} ({rel.value}): weight {k} must be >= 0")
    if entry.gravity not in GRAVITY_MODES:
        raise PoolsError(f"{where} ({rel.value}): gravity must be one of {GRAVITY_MODES}")
    if entry.theta_max <= 0 or entry.d_ideal < 0 or entry.d_prox < 0:
        raise PoolsError(f"{where} ({rel.value}): theta_max > 0, d_ideal >= 0, d_prox >= 0 required")
    return entry


def pools_from_dict(doc):
    """Validate a parsed pools document."""
    if not isinstance(doc, dict):
        raise PoolsError("pools document must be a JSON object")
    for key in ("size_levels", "default_size", "sizes", "layouts", "node_terms", "hyper"):
        if key not in doc:
            raise PoolsError(f"pools document is missing {key!r}")
    levels = {}
    for name in SIZE_LEVELS:
        if name not in doc["size_levels"]:
            raise PoolsError(f"size_levels is missing {name!r}")
        lo, hi = (_num(x, f"size_levels.{name}") for x in doc["size_levels"][name])
        levels[name] = (lo, hi)
    sizes = [_size_entry(d, levels, f"sizes[{i}]") for i, d in enumerate(doc["sizes"])]
    cats = [s.category for s in sizes]
    dup = {c for c in cats if cats.count(c) > 1}
    if dup:
        raise PoolsError(f"duplicate size categories: {sorted(dup)}")
    default = _size_entry(doc["default_size"], levels, "default_size")
    layouts = [_layout_entry(d, f"layouts[{i}]") for i, d in enumerate(doc["layouts"])]
    rels = [l.relation for l in layouts]
    if len(set(rels)) != len(rels):
        raise PoolsError("more than one layout entry for a relation")
    missing = [r.value for r in Relation if r not in rels]
    if missing:
        raise PoolsError(f"layout pool does not cover relation(s): {', '.join(missing)}")
    node_terms = {k: _num(v, f"node_terms.{k}") for k, v in doc["node_terms"].items()}
    for k in NODE_TERMS + ("theta_max",):
        if k not in node_terms:
            raise PoolsError(f"node_terms is missing {k!r}")
        if node_terms[k] < 0:
            raise PoolsError(f"node_terms.{k} must be >= 0")
    hyper = {k: _num(v, f"hyper.{k}") for k, v in doc["hyper"].items()}
    for k in ("lambda_ground", "k_rep", "k_spring", "d_anchor", "contact_gap"):
        if k not in hyper:
            raise PoolsError(f"hyper is missing {k!r}")
    meta = {k: copy.deepcopy(v) for k, v in doc.items()
            if k not in ("size_levels", "default_size", "sizes", "layouts", "node_terms", "hyper")}
    return Pools(sizes, layouts, default, levels, node_terms, hyper, meta)


def load_pools(source=None):
    """Load pools from a path, JSON text, a dict, or the bundled default (``None``)."""
    if source is None:
        text = resources.files("gslayout").joinpath("data/default_pools.json").read_text("utf-8")
        return pools_from_dict(json.loads(text))
    if isinstance(source, dict):
        return pools_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        try:
            text = Path(source).read_text("utf-8")
        except OSError as exc:
            raise PoolsError(f"cannot read pools file {source}: {exc}") from None
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PoolsError(f"pools file is not valid JSON: {exc}") from None
    return pools_from_dict(doc)


def save_pools(pools, path=None):
    text = json.dumps(pools.to_dict(), indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text, "utf-8")
    return text


def lookup_size(category, pools):
    """Exact category, then alias, then the default entry (with a :class:`PoolsWarning`)."""
    key = " ".join(category.lower().replace("_", " ").split())
    for k in (key, singularize(key)):
        if k in pools._by_cat:
            return pools._by_cat[k]
    for k in (key, singularize(key)):
        if k in pools._by_alias:
            return pools._by_alias[k]
    msg = f"no size entry for {category!r}; using default {pools.default_size.size}"
    pools.warnings.append(msg)
    warnings.warn(msg, PoolsWarning, stacklevel=2)
    return pools.default_size


def lookup_layout(relation, pools):
    return pools._by_rel[normalize_relation(relation)]
