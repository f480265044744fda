"""Scene descriptions -> validated directed scene graphs.

Two front ends produce the same :class:`SceneGraph`:

* a line-oriented scene file (``object ...`` declarations and
  ``<label> <relation> <label>`` lines), and
* :func:`extract_relations`, a deterministic pattern matcher for short
  English prompts such as ``"a lamp on a table, with a bed beside the table"``.

Edges point from the dependent object to the object it depends on, so
``lamp -on-> table`` places the lamp relative to the table.
"""
from __future__ import annotations

import heapq
import json
import re
from dataclasses import dataclass, field
from enum import Enum


class Relation(str, Enum):
    ON = "on"
    ABOVE = "above"
    BELOW = "below"
    BESIDE = "beside"
    IN_FRONT_OF = "in_front_of"
    BEHIND = "behind"
    INSIDE = "inside"
    AGAINST = "against"
    HANGS_ON = "hangs_on"
    UNDER = "under"

    def __str__(self):
        return self.value


ALIASES = {
    "on": Relation.ON, "upon": Relation.ON, "on top of": Relation.ON, "atop": Relation.ON,
    "sits on": Relation.ON, "rests on": Relation.ON, "placed on": Relation.ON,
    "stands on": Relation.ON, "lies on": Relation.ON,
    "above": Relation.ABOVE, "over": Relation.ABOVE,
    "below": Relation.BELOW, "beneath": Relation.BELOW,
    "under": Relation.UNDER, "underneath": Relation.UNDER,
    "beside": Relation.BESIDE, "next to": Relation.BESIDE, "by": Relation.BESIDE,
    "alongside": Relation.BESIDE,
    "in front of": Relation.IN_FRONT_OF, "before": Relation.IN_FRONT_OF,
    "behind": Relation.BEHIND, "in back of": Relation.BEHIND,
    "inside": Relation.INSIDE, "in": Relation.INSIDE, "within": Relation.INSIDE,
    "inside of": Relation.INSIDE,
    "against": Relation.AGAINST, "leans against": Relation.AGAINST,
    "leaning against": Relation.AGAINST, "rests against": Relation.AGAINST,
    "leans on": Relation.AGAINST,
    "hangs on": Relation.HANGS_ON, "hanging on": Relation.HANGS_ON,
    "hung on": Relation.HANGS_ON, "hangs from": Relation.HANGS_ON,
    "hanging from": Relation.HANGS_ON,
}
for _r in Relation:
    ALIASES.setdefault(_r.value, _r)
    ALIASES.setdefault(_r.value.replace("_", " "), _r)

_ARTICLES = {"a", "an", "the", "some", "one", "another"}
_CONNECTORS = {"with", "and", "while", "then", "also", "plus"}
_LINKING = {"is", "are", "sits", "stands"}
_LABEL_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_IRREGULAR = {
    "shelves": "shelf", "knives": "knife", "leaves": "leaf", "people": "person",
    "children": "child", "mice": "mouse", "feet": "foot", "teeth": "tooth",
}


class SceneGraphError(ValueError):
    """Base class for scene parsing and validation failures."""


class SceneSyntaxError(SceneGraphError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnknownRelationError(SceneGraphError):
    def __init__(self, token):
        self.token = token
        vocab = ", ".join(r.value for r in Relation)
        super().__init__(f"unknown relation {token!r}; accepted relations: {vocab}")


class CycleError(SceneGraphError):
    pass


class AmbiguityError(SceneGraphError):
    pass


def normalize_relation(token):
    """Map a relation phrase (``"upon"``, ``"next to"``, ``"on"``...) to its canonical :class:`Relation`."""
    if isinstance(token, Relation):
        return token
    key = " ".join(str(token).lower().replace("_", " ").split())
    try:
        return ALIASES[key]
    except KeyError:
        raise UnknownRelationError(token) from None


def singularize(word):
    w = word.lower()
    if w in _IRREGULAR:
        return _IRREGULAR[w]
    if len(w) > 3 and w.endswith("ies"):
        return w[:-3] + "y"
    if len(w) > 3 and w.endswith(("ches", "shes", "xes", "sses", "zes")):
        return w[:-2]
    if len(w) > 2 and w.endswith("s") and not w.endswith(("ss", "us", "is")):
        return w[:-1]
    return w


@dataclass(frozen=True)
class SceneNode:
    id: int
    category: str
    label: str
    attributes: tuple = ()
    source: str | None = None

    def to_dict(self):
        d = {"id": self.id, "category": self.category, "label": self.label,
             "attributes": list(self.attributes)}
        if self.source:
            d["source"] = self.source
        return d


@dataclass(frozen=True)
class SceneEdge:
    source: int
    target: int
    relation: Relation

    def to_dict(self):
        return {"source": self.source, "target": self.target, "relation": self.relation.value}


@dataclass
class SceneGraph:
    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)
    # user anchor overrides: (source id, target id) -> (local point on source, local point on target)
    anchors: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        ids = [n.id for n in self.nodes]
        if ids != list(range(len(ids))):
            raise SceneGraphError("node ids must be dense 0..M-1 in order")
        labels = [n.label for n in self.nodes]
        if len(set(labels)) != len(labels):
            raise SceneGraphError("node labels must be unique")
        seen = set()
        for e in self.edges:
            if not (0 <= e.source < len(ids) and 0 <= e.target < len(ids)):
                raise SceneGraphError(f"edge {e} references a missing node")
            if e.source == e.target:
                raise SceneGraphError(f"self-relation on node {e.source}")
            key = (e.source, e.target, e.relation)
            if key in seen:
                raise SceneGraphError(f"duplicate relation {self.nodes[e.source].label} "
                                      f"{e.relation.value} {self.nodes[e.target].label}")
            seen.add(key)
        for s, t in self.anchors:
            if not any(e.source == s and e.target == t for e in self.edges):
                raise SceneGraphError(f"anchor override for {s}->{t} without a matching edge")
        topological_order(self)

    # convenience lookups
    def node(self, label):
        for n in self.nodes:
            if n.label == label:
                return n
        raise KeyError(label)

    @property
    def labels(self):
        return [n.label for n in self.nodes]

    def dependencies(self, node_id):
        """Edges whose source is ``node_id`` (what the node is placed against)."""
        return [e for e in self.edges if e.source == node_id]

    def to_dict(self):
        d = {"nodes": [n.to_dict() for n in self.nodes], "edges": [e.to_dict() for e in self.edges]}
        if self.anchors:
            d["anchors"] = [
                {"source": s, "target": t, "source_point": list(map(float, a)),
                 "target_point": list(map(float, b))}
                for (s, t), (a, b) in sorted(self.anchors.items())
            ]
        return d

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        nodes = [SceneNode(int(n["id"]), n["category"], n["label"], tuple(n.get("attributes", ())),
                           n.get("source")) for n in d["nodes"]]
        edges = [SceneEdge(int(e["source"]), int(e["target"]), normalize_relation(e["relation"]))
                 for e in d["edges"]]
        anchors = {(int(a["source"]), int(a["target"])): (tuple(a["source_point"]), tuple(a["target_point"]))
                   for a in d.get("anchors", [])}
        return cls(nodes, edges, anchors)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def topological_order(graph):
    """Supporters before dependents; ready nodes are taken in ascending id order."""
    n = len(graph.nodes)
    pending = [0] * n
    dependents = [[] for _ in range(n)]
    for e in graph.edges:
        pending[e.source] += 1
        dependents[e.target].append(e.source)
    ready = [i for i in range(n) if pending[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for j in dependents[i]:
            pending[j] -= 1
            if pending[j] == 0:
                heapq.heappush(ready, j)
    if len(order) != n:
        stuck = sorted(graph.nodes[i].label for i in range(n) if pending[i] > 0)
        raise CycleError(f"cycle detected among: {', '.join(stuck)}")
    return order


# ---------------------------------------------------------------------------
# scene files


class _Builder:
    """Accumulates nodes/edges and resolves label or category references."""

    def __init__(self, graph=None):
        self.nodes = list(graph.nodes) if graph else []
        self.edges = list(graph.edges) if graph else []
        self.anchors = dict(graph.anchors) if graph else {}

    def add_node(self, category, label=None, attributes=(), source=None, line=None):
        category = " ".join(category.lower().split())
        if not category:
            raise SceneSyntaxError("missing object category", line)
        if label is None:
            stem = category.replace(" ", "_")
            k = sum(1 for n in self.nodes if n.category == category)
            taken = {n.label for n in self.nodes}
            while f"{stem}_{k}" in taken:
                k += 1
            label = f"{stem}_{k}"
        elif not _LABEL_RE.match(label):
            raise SceneSyntaxError(f"invalid label {label!r}", line)
        if any(n.label == label for n in self.nodes):
            raise SceneSyntaxError(f"duplicate label {label!r}", line)
        node = SceneNode(len(self.nodes), category, label, tuple(attributes), source)
        self.nodes.append(node)
        return node

    def resolve(self, ref, line=None):
        for n in self.nodes:
            if n.label == ref:
                return n
        key = " ".join(ref.lower().replace("_", " ").split())
        matches = [n for n in self.nodes if n.category in (key, singularize(key))]
        if len(matches) == 1:
            return matches[0]
        if len(matches) > 1:
            raise AmbiguityError(f"line {line}: {ref!r} matches several objects; use a label")
        raise SceneSyntaxError(f"unknown label {ref!r}", line)

    def add_edge(self, src, rel, dst, line=None):
        if src.id == dst.id:
            raise SceneSyntaxError(f"{src.label} cannot relate to itself", line)
        e = SceneEdge(src.id, dst.id, rel)
        if e in self.edges:
            raise SceneSyntaxError(f"duplicate relation {src.label} {rel.value} {dst.label}", line)
        self.edges.append(e)

    def build(self):
        return SceneGraph(self.nodes, self.edges, self.anchors)


_OBJECT_RE = re.compile(
    r"^object\s+(?P<cat>.+?)(?:\s+as\s+(?P<label>\S+))?(?:\s+with\s+(?P<attrs>.+?))?"
    r"(?:\s+from\s+(?P<src>\S+))?$",
    re.IGNORECASE,
)
_ANCHOR_RE = re.compile(
    r"^anchor\s+(?P<a>\S+)\s+(?P<ax>\S+)\s+(?P<ay>\S+)\s+(?P<az>\S+)\s+"
    r"(?P<b>\S+)\s+(?P<bx>\S+)\s+(?P<by>\S+)\s+(?P<bz>\S+)$",
    re.IGNORECASE,
)


def _parse_lines(text, builder):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head = line.split(None, 1)[0].lower()
        if head == "object":
            m = _OBJECT_RE.match(line)
            if not m:
                raise SceneSyntaxError(f"malformed object declaration: {line!r}", lineno)
            attrs = ()
            if m.group("attrs"):
                attrs = tuple(a.strip() for a in m.group("attrs").split(",") if a.strip())
            builder.add_node(m.group("cat"), m.group("label"), attrs, m.group("src"), lineno)
        elif head == "anchor":
            m = _ANCHOR_RE.match(line)
            if not m:
                raise SceneSyntaxError("anchor syntax: anchor <label> x y z <label> x y z", lineno)
            a, b = builder.resolve(m.group("a"), lineno), builder.resolve(m.group("b"), lineno)
            try:
                pa = tuple(float(m.group(k)) for k in ("ax", "ay", "az"))
                pb = tuple(float(m.group(k)) for k in ("bx", "by", "bz"))
            except ValueError:
                raise SceneSyntaxError("anchor coordinates must be numbers", lineno) from None
            builder.anchors[(a.id, b.id)] = (pa, pb)
        else:
            words = line.split()
            if len(words) < 3:
                raise SceneSyntaxError(f"expected '<label> <relation> <label>', got {line!r}", lineno)
            rel = normalize_relation(" ".join(words[1:-1]))
            src = builder.resolve(words[0], lineno)
            dst = builder.resolve(words[-1], lineno)
            builder.add_edge(src, rel, dst, lineno)


def parse_scene_file(text, base=None):
    """Parse scene-file text into a validated :class:`SceneGraph`.

    ``base`` is an existing graph to extend; used for incremental edits where
    the fragment may reference labels that already exist.
    """
    builder = _Builder(base)
    _parse_lines(text, builder)
    graph = builder.build()
    if base is not None:
        for (s, t) in graph.anchors:
            if not any(e.source == s and e.target == t for e in graph.edges):
                raise SceneGraphError("anchor without edge")
    return graph


def serialize_scene(graph):
    """Scene-file text that reparses to an isomorphic graph."""
    lines = []
    for n in graph.nodes:
        s = f"object {n.category} as {n.label}"
        if n.attributes:
            s += " with " + ", ".join(n.attributes)
        if n.source:
            s += f" from {n.source}"
        lines.append(s)
    for e in graph.edges:
        lines.append(f"{graph.nodes[e.source].label} {e.relation.value} {graph.nodes[e.target].label}")
    for (s, t), (a, b) in sorted(graph.anchors.items()):
        lines.append(f"anchor {graph.nodes[s].label} {a[0]!r} {a[1]!r} {a[2]!r} "
                     f"{graph.nodes[t].label} {b[0]!r} {b[1]!r} {b[2]!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# constrained English

_ALIAS_WORDS = sorted((tuple(k.split()) for k in ALIASES), key=len, reverse=True)


def _find_relation(words):
    """Earliest, then longest, alias match with words on both sides."""
    for i in range(1, len(words) - 1):
        for alias in _ALIAS_WORDS:
            j = i + len(alias)
            if j < len(words) and tuple(words[i:j]) == alias:
                return i, j, ALIASES[" ".join(alias)]
    return None


def _noun_phrase(words):
    words = [w for w in words if w not in _ARTICLES and w not in _LINKING]
    if not words:
        return None
    return singularize(words[-1]), tuple(words[:-1])


def _split_clauses(prompt):
    parts = re.split(r"[,;.]|\band\b", prompt.lower())
    out = []
    for p in parts:
        words = re.findall(r"[a-z_]+", p)
        while words and words[0] in _CONNECTORS:
            words = words[1:]
        if words:
            out.append(words)
    return out


def extract_relations(prompt):
    """Build a scene graph from a short prompt of ``"a X <rel> a Y"`` clauses.

    Clauses are separated by commas, semicolons or ``and``.  Articles are
    dropped, the last word of each noun phrase is the (singular) category,
    and earlier words become attributes.  Repeated nouns refer to one node.
    """
    if not prompt or not prompt.strip():
        raise SceneGraphError("empty scene: nothing to parse")
    builder = _Builder()
    by_category = {}

    def node_for(np_):
        cat, attrs = np_
        node = by_category.get(cat)
        if node is None:
            node = builder.add_node(cat, attributes=attrs)
            by_category[cat] = node
            return node
        if attrs and node.attributes and set(attrs) != set(node.attributes):
            raise AmbiguityError(
                f"ambiguous reuse of {cat!r}: {' '.join(node.attributes)} vs {' '.join(attrs)}")
        if attrs and not node.attributes:
            node = SceneNode(node.id, node.category, node.label, attrs, node.source)
            builder.nodes[node.id] = node
            by_category[cat] = node
        return node

    for words in _split_clauses(prompt):
        hit = _find_relation(words)
        if hit is None:
            raise SceneSyntaxError(f"no relation pattern matched clause {' '.join(words)!r}")
        i, j, rel = hit
        left, right = _noun_phrase(words[:i]), _noun_phrase(words[j:])
        if left is None or right is None:
            raise SceneSyntaxError(f"no relation pattern matched clause {' '.join(words)!r}")
        src, dst = node_for(left), node_for(right)
        builder.add_edge(src, rel, dst)
    return builder.build()
