"""Typed heterogeneous graphs: storage, queries, dataset IO and generation."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

REVERSE_PREFIX = "rev_"


class DatasetError(ValueError):
    """Malformed dataset or graph; carries file/line context when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}" + (f":{line}" if line is not None else "") + ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class SchemaError(DatasetError):
    pass


class DanglingEndpointError(DatasetError):
    pass


class DuplicateEdgeError(DatasetError):
    pass


class FeatureDimensionError(DatasetError):
    pass


@dataclass(frozen=True)
class EdgeType:
    name: str
    src: str
    dst: str


@dataclass(frozen=True, order=True)
class MetaRelation:
    """``<source type, edge type, target type>``; keys attention parameters."""

    source_type: str
    edge_type: str
    target_type: str


@dataclass(frozen=True)
class Relation:
    """A message-passing relation: a stored edge type or its reverse."""

    id: int
    meta: MetaRelation
    src: np.ndarray
    dst: np.ndarray
    base: str
    reverse: bool

    @property
    def name(self) -> str:
        return self.meta.edge_type


class HeteroGraph:
    """Immutable typed graph.

    Parameters
    ----------
    node_types : dict
        Ordered mapping of node type name to node count.
    edge_types : sequence of EdgeType
        Stored (forward) edge types. A reverse relation ``rev_<name>`` is
        derived for each so messages can flow both ways.
    edges : dict
        Edge type name to an ``(E, 2)`` integer array of (src, dst) ids, each
        id dense within its node type.
    features : dict
        Node type name to an ``(n, d)`` float array.
    target_type : str, optional
        Node type that carries labels.
    """

    def __init__(self, node_types: dict[str, int], edge_types: Sequence[EdgeType],
                 edges: dict[str, np.ndarray], features: dict[str, np.ndarray],
                 target_type: str | None = None, validate: bool = True):
        self.node_types = list(node_types)
        self.num_nodes = {k: int(v) for k, v in node_types.items()}
        self.edge_types = list(edge_types)
        self.target_type = target_type
        self.features = {k: np.asarray(v) for k, v in features.items()}
        self.edges: dict[str, np.ndarray] = {}
        for et in self.edge_types:
            arr = np.asarray(edges.get(et.name, np.zeros((0, 2))), dtype=np.int64).reshape(-1, 2)
            if len(arr):
                order = np.lexsort((arr[:, 1], arr[:, 0]))
                arr = arr[order]
            self.edges[et.name] = arr
        if validate:
            self.validate()

    # -- schema -----------------------------------------------------------

    @cached_property
    def edge_type_map(self) -> dict[str, EdgeType]:
        return {et.name: et for et in self.edge_types}

    @cached_property
    def type_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.node_types)}

    @cached_property
    def offsets(self) -> dict[str, int]:
        out, acc = {}, 0
        for name in self.node_types:
            out[name] = acc
            acc += self.num_nodes[name]
        return out

    @property
    def total_nodes(self) -> int:
        return sum(self.num_nodes.values())

    @property
    def total_edges(self) -> int:
        return sum(len(e) for e in self.edges.values())

    def feature_dim(self, node_type: str) -> int:
        return self.features[node_type].shape[1]

    def validate(self) -> None:
        names = list(self.node_types)
        if len(set(names)) != len(names):
            raise SchemaError("duplicate node type names")
        enames = [et.name for et in self.edge_types]
        if len(set(enames)) != len(enames):
            raise SchemaError("duplicate edge type names")
        if any(n.startswith(REVERSE_PREFIX) for n in enames):
            raise SchemaError(f"edge type names may not start with {REVERSE_PREFIX!r}")
        if len(names) + len(enames) <= 2:
            raise SchemaError("heterogeneous graph needs |node types| + |edge types| > 2")
        for et in self.edge_types:
            if et.src not in self.num_nodes or et.dst not in self.num_nodes:
                raise SchemaError(f"edge type {et.name} references unknown node type")
            arr = self.edges[et.name]
            if len(arr):
                if arr.min() < 0 or arr[:, 0].max() >= self.num_nodes[et.src] or arr[:, 1].max() >= self.num_nodes[et.dst]:
                    raise DanglingEndpointError(f"edge type {et.name} has endpoint out of range")
                if (np.diff(arr, axis=0) == 0).all(axis=1).any():
                    raise DuplicateEdgeError(f"edge type {et.name} has duplicate edges")
        for name in names:
            x = self.features.get(name)
            if x is None or x.ndim != 2 or x.shape[0] != self.num_nodes[name]:
                got = None if x is None else x.shape
                raise FeatureDimensionError(f"features of {name}: expected {self.num_nodes[name]} rows, got {got}")
        if self.target_type is not None and self.target_type not in self.num_nodes:
            raise SchemaError(f"unknown target type {self.target_type}")

    # -- derived structure ------------------------------------------------

    @cached_property
    def relations(self) -> list[Relation]:
        """Forward relations in schema order, then their reverses."""
        rels = []
        for et in self.edge_types:
            e = self.edges[et.name]
            rels.append(Relation(len(rels), MetaRelation(et.src, et.name, et.dst), e[:, 0], e[:, 1], et.name, False))
        for et in self.edge_types:
            e = self.edges[et.name]
            order = np.lexsort((e[:, 0], e[:, 1]))
            rels.append(Relation(len(rels), MetaRelation(et.dst, REVERSE_PREFIX + et.name, et.src),
                                 e[order, 1], e[order, 0], et.name, True))
        return rels

    @cached_property
    def meta_relations(self) -> list[MetaRelation]:
        return [r.meta for r in self.relations]

    def reverse_of(self, rel: Relation) -> Relation:
        n = len(self.edge_types)
        return self.relations[rel.id - n if rel.reverse else rel.id + n]

    @cached_property
    def _csr(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """Per relation, (indptr, neighbours) keyed by destination node."""
        out = {}
        for rel in self.relations:
            n = self.num_nodes[rel.meta.target_type]
            order = np.lexsort((rel.src, rel.dst))
            indptr = np.zeros(n + 1, dtype=np.int64)
            np.add.at(indptr, rel.dst + 1, 1)
            out[rel.id] = (np.cumsum(indptr), rel.src[order])
        return out

    def in_neighbors(self, rel: Relation, node: int) -> np.ndarray:
        indptr, nbrs = self._csr[rel.id]
        return nbrs[indptr[node]:indptr[node + 1]]

    def global_id(self, node_type: str, idx) -> np.ndarray | int:
        return self.offsets[node_type] + idx

    def local_id(self, gid: int) -> tuple[str, int]:
        for name in reversed(self.node_types):
            if gid >= self.offsets[name]:
                return name, int(gid - self.offsets[name])
        raise IndexError(gid)

    @cached_property
    def skeleton(self) -> sp.csr_matrix:
        """Undirected, type-erased simple graph over global node ids."""
        n = self.total_nodes
        rows, cols = [], []
        for et in self.edge_types:
            e = self.edges[et.name]
            rows.append(e[:, 0] + self.offsets[et.src])
            cols.append(e[:, 1] + self.offsets[et.dst])
        r = np.concatenate(rows) if rows else np.zeros(0, np.int64)
        c = np.concatenate(cols) if cols else np.zeros(0, np.int64)
        keep = r != c
        r, c = r[keep], c[keep]
        a = sp.coo_matrix((np.ones(2 * len(r), dtype=np.int64), (np.concatenate([r, c]), np.concatenate([c, r]))),
                          shape=(n, n)).tocsr()
        a.data[:] = 1
        a.sum_duplicates()
        a.data[:] = 1
        a.sort_indices()
        return a

    @cached_property
    def degree(self) -> np.ndarray:
        return np.diff(self.skeleton.indptr)

    def skeleton_neighbors(self, gid: int) -> np.ndarray:
        a = self.skeleton
        return a.indices[a.indptr[gid]:a.indptr[gid + 1]]

    # -- derived graphs ---------------------------------------------------

    def with_edges(self, edges: dict[str, np.ndarray]) -> "HeteroGraph":
        return HeteroGraph(self.num_nodes, self.edge_types, edges, self.features, self.target_type)

    def with_features(self, features: dict[str, np.ndarray]) -> "HeteroGraph":
        merged = dict(self.features)
        merged.update(features)
        return HeteroGraph(self.num_nodes, self.edge_types, self.edges, merged, self.target_type)

    def summary(self) -> dict[str, object]:
        return {
            "nodes": self.total_nodes,
            "node_types": len(self.node_types),
            "edges": self.total_edges,
            "edge_types": len(self.edge_types),
            "feature_dim": sum(self.feature_dim(t) for t in self.node_types),
            "nodes_per_type": dict(self.num_nodes),
            "edges_per_type": {k: len(v) for k, v in self.edges.items()},
        }


# ---------------------------------------------------------------------------
# queries


def neighbors(g: HeteroGraph, node_type: str, node: int, direction: str = "both") -> list[tuple[tuple[str, int], MetaRelation]]:
    """Typed neighbours of a node over stored edge types.

    ``direction`` is ``"out"`` (node is the source), ``"in"`` (node is the
    destination) or ``"both"``. Results are sorted by relation id, then by
    neighbour id.
    """
    if node_type not in g.num_nodes:
        raise KeyError(f"unknown node type {node_type}")
    if not 0 <= node < g.num_nodes[node_type]:
        raise IndexError(f"node {node} out of range for type {node_type}")
    if direction not in ("in", "out", "both"):
        raise ValueError(f"direction must be in/out/both, got {direction}")
    out = []
    n_base = len(g.edge_types)
    for rel in g.relations:
        if rel.meta.target_type != node_type:
            continue
        # incoming on the reverse relation == outgoing on the stored one
        if rel.reverse and direction == "in":
            continue
        if not rel.reverse and direction == "out":
            continue
        base = g.relations[rel.id - n_base] if rel.reverse else rel
        for nb in g.in_neighbors(rel, node):
            out.append((base.id, int(nb), (rel.meta.source_type, int(nb)), base.meta))
    out.sort(key=lambda r: (r[0], r[1]))
    return [(nb, meta) for _, _, nb, meta in out]


def two_hop_open_triangle_candidates(g: HeteroGraph, t: int, node_type: str | None = None) -> list[tuple[int, tuple[int, ...]]]:
    """Skeleton nodes at distance exactly two from ``t`` with their common neighbours.

    ``t`` is a local id of ``node_type`` (default: the target type). Returned
    ids are global skeleton ids, sorted ascending.
    """
    node_type = node_type or g.target_type
    gid = int(g.global_id(node_type, t))
    first = g.skeleton_neighbors(gid)
    first_set = set(first.tolist())
    common: dict[int, list[int]] = {}
    for z in first:
        for s in g.skeleton_neighbors(int(z)):
            s = int(s)
            if s == gid or s in first_set:
                continue
            common.setdefault(s, []).append(int(z))
    return [(s, tuple(sorted(zs))) for s, zs in sorted(common.items())]


# ---------------------------------------------------------------------------
# labels and splits


@dataclass
class LabelTable:
    target_type: str
    labels: np.ndarray  # -1 marks nodes without a label
    num_classes: int

    @property
    def labeled(self) -> np.ndarray:
        return np.flatnonzero(self.labels >= 0)


SPLIT_NAMES = ("train", "val", "test", "unlabeled")


@dataclass
class SplitSpec:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    unlabeled: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    def __post_init__(self):
        for name in SPLIT_NAMES:
            setattr(self, name, np.sort(np.asarray(getattr(self, name), dtype=np.int64)))
        seen = np.concatenate([getattr(self, n) for n in SPLIT_NAMES])
        if len(np.unique(seen)) != len(seen):
            raise ValueError("splits overlap")

    def pool(self, n_target: int) -> np.ndarray:
        """Target nodes whose labels are hidden from training (T_u)."""
        mask = np.ones(n_target, dtype=bool)
        mask[self.train] = False
        return np.flatnonzero(mask)


def split_nodes(labels: LabelTable, ratios=(0.24, 0.06, 0.70), seed: int = 0) -> SplitSpec:
    """Stratified train/val/test split of the labeled target nodes.

    Sizes are fixed globally by rounding ``ratios`` against the labeled count;
    the order nodes are dealt in interleaves classes so each prefix is close to
    the class proportions.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1) > 1e-9:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    y = np.asarray(labels.labels)
    labeled = np.flatnonzero(y >= 0)
    counts = np.bincount(y[labeled], minlength=labels.num_classes)
    if (counts == 0).any():
        raise ValueError(f"class(es) {np.flatnonzero(counts == 0).tolist()} have zero members")
    rng = np.random.default_rng(seed)
    keys = np.empty(len(labeled))
    for c in range(labels.num_classes):
        members = np.flatnonzero(y[labeled] == c)
        perm = rng.permutation(len(members))
        keys[members[perm]] = (np.arange(len(members)) + rng.random(len(members))) / len(members)
    order = labeled[np.lexsort((labeled, keys))]
    n = len(order)
    n_train = int(np.floor(ratios[0] * n + 0.5))
    n_val = min(n - n_train, int(np.floor(ratios[1] * n + 0.5)))
    return SplitSpec(order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:],
                     np.flatnonzero(y < 0))


# ---------------------------------------------------------------------------
# synthetic generation


@dataclass
class SyntheticSpec:
    """Recipe for a class-assortative, heavy-tailed heterogeneous graph.

    ``node_types`` maps name -> (count, feature dim); ``relations`` lists
    (name, src type, dst type, edge count).
    """

    node_types: dict[str, tuple[int, int]] = field(default_factory=lambda: {
        "paper": (1000, 64), "author": (1400, 32), "subject": (600, 16)})
    relations: list[tuple[str, str, str, int]] = field(default_factory=lambda: [
        ("writes", "author", "paper", 2000), ("about", "paper", "subject", 1200), ("cites", "paper", "paper", 1000)])
    target_type: str = "paper"
    num_classes: int = 3
    homophily: float = 0.8
    degree_exponent: float = 2.5
    feature_signal: float = 1.0
    seed: int = 0


def _powerlaw_weights(n: int, exponent: float, rng) -> np.ndarray:
    u = rng.random(n)
    w = (1 - u) ** (-1.0 / (exponent - 1.0))
    return np.minimum(w, np.sqrt(n))


def generate_synthetic(spec: SyntheticSpec) -> tuple[HeteroGraph, LabelTable]:
    rng = np.random.default_rng(spec.seed)
    C = spec.num_classes
    latent, weights, features = {}, {}, {}
    for name, (n, dim) in spec.node_types.items():
        latent[name] = rng.permutation(np.arange(n) % C)
        weights[name] = _powerlaw_weights(n, spec.degree_exponent, rng)
    for name, (n, dim) in spec.node_types.items():
        centroids = rng.normal(size=(C, dim))
        noise = rng.normal(size=(n, dim))
        features[name] = (spec.feature_signal * centroids[latent[name]] + noise).astype(np.float32)

    edge_types, edges = [], {}
    for name, src, dst, m in spec.relations:
        edge_types.append(EdgeType(name, src, dst))
        edges[name] = _sample_edges(src, dst, m, latent, weights, spec.homophily, rng)

    g = HeteroGraph({k: v[0] for k, v in spec.node_types.items()}, edge_types, edges, features, spec.target_type)
    labels = LabelTable(spec.target_type, latent[spec.target_type].astype(np.int64), C)
    return g, labels


def _sample_edges(src, dst, m, latent, weights, homophily, rng) -> np.ndarray:
    ns, nd = len(latent[src]), len(latent[dst])
    same = src == dst
    capacity = ns * (ns - 1) // 2 if same else ns * nd
    if m > capacity:
        raise ValueError(f"relation {src}->{dst}: {m} edges requested but only {capacity} pairs exist")
    if m == 0:
        return np.zeros((0, 2), dtype=np.int64)
    ps = weights[src] / weights[src].sum()
    by_class = {}
    for c in np.unique(latent[dst]):
        idx = np.flatnonzero(latent[dst] == c)
        by_class[c] = (idx, weights[dst][idx] / weights[dst][idx].sum())
    pd = weights[dst] / weights[dst].sum()

    chosen: set[tuple[int, int]] = set()
    out = []
    for _ in range(200):
        k = 2 * (m - len(out)) + 16
        s = rng.choice(ns, size=k, p=ps)
        assort = rng.random(k) < homophily
        d = rng.choice(nd, size=k, p=pd)
        for c, (idx, p) in by_class.items():
            sel = assort & (latent[src][s] == c)
            if sel.any():
                d[sel] = idx[rng.choice(len(idx), size=int(sel.sum()), p=p)]
        for a, b in zip(s.tolist(), d.tolist()):
            if same:
                if a == b:
                    continue
                a, b = min(a, b), max(a, b)
            if (a, b) in chosen:
                continue
            chosen.add((a, b))
            out.append((a, b))
            if len(out) == m:
                return np.asarray(out, dtype=np.int64)
    raise ValueError(f"relation {src}->{dst}: could not place {m} distinct edges")


# ---------------------------------------------------------------------------
# dataset IO

FEATURE_MAGIC = b"HGMF"
FEATURE_VERSION = 1


def write_features(path, x: np.ndarray) -> None:
    x = np.ascontiguousarray(x, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<IQQ", FEATURE_VERSION, x.shape[0], x.shape[1]))
        fh.write(x.tobytes())


def read_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(24)
        if len(head) < 24 or head[:4] != FEATURE_MAGIC:
            raise FeatureDimensionError("bad feature header", path)
        version, rows, cols = struct.unpack("<IQQ", head[4:])
        if version != FEATURE_VERSION:
            raise FeatureDimensionError(f"unsupported feature version {version}", path)
        body = fh.read()
    if len(body) != rows * cols * 4:
        raise FeatureDimensionError(f"expected {rows}x{cols} floats, found {len(body) // 4}", path)
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float32)


def _read_tsv(path) -> Iterable[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            yield lineno, line.split("\t")


def save_graph(path, g: HeteroGraph, labels: LabelTable | None = None, splits: SplitSpec | None = None,
               node_ids: dict[str, list[str]] | None = None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    ids = node_ids or {t: [f"{t}{i}" for i in range(g.num_nodes[t])] for t in g.node_types}
    with open(path / "schema.tsv", "w", encoding="utf-8") as fh:
        for t in g.node_types:
            fh.write(f"node_type\t{t}\t{g.feature_dim(t)}\n")
        for et in g.edge_types:
            fh.write(f"edge_type\t{et.name}\t{et.src}\t{et.dst}\n")
        if g.target_type is not None:
            fh.write(f"target\t{g.target_type}\n")
        if labels is not None:
            fh.write(f"classes\t{labels.num_classes}\n")
    for t in g.node_types:
        with open(path / f"nodes-{t}.tsv", "w", encoding="utf-8") as fh:
            fh.writelines(f"{i}\n" for i in ids[t])
        write_features(path / f"features-{t}.bin", g.features[t])
    for et in g.edge_types:
        with open(path / f"edges-{et.name}.tsv", "w", encoding="utf-8") as fh:
            for a, b in g.edges[et.name]:
                fh.write(f"{ids[et.src][a]}\t{ids[et.dst][b]}\n")
    if labels is not None:
        tids = ids[labels.target_type]
        with open(path / "labels.tsv", "w", encoding="utf-8") as fh:
            for i in labels.labeled:
                fh.write(f"{tids[i]}\t{labels.labels[i]}\n")
    if splits is not None:
        tids = ids[g.target_type]
        rows = sorted((int(i), name) for name in SPLIT_NAMES for i in getattr(splits, name))
        with open(path / "splits.tsv", "w", encoding="utf-8") as fh:
            for i, name in rows:
                fh.write(f"{tids[i]}\t{name}\n")


def load_graph(path, fmt: str = "hgmda-tsv") -> tuple[HeteroGraph, LabelTable | None, SplitSpec | None]:
    """Read a dataset directory; see README for the file layout."""
    if fmt != "hgmda-tsv":
        raise ValueError(f"unknown dataset format {fmt!r}")
    path = Path(path)
    schema = path / "schema.tsv"
    if not schema.exists():
        raise SchemaError("missing schema.tsv", path)
    dims: dict[str, int] = {}
    edge_types: list[EdgeType] = []
    target, classes = None, None
    for lineno, cols in _read_tsv(schema):
        kind = cols[0]
        try:
            if kind == "node_type":
                dims[cols[1]] = int(cols[2])
            elif kind == "edge_type":
                edge_types.append(EdgeType(cols[1], cols[2], cols[3]))
            elif kind == "target":
                target = cols[1]
            elif kind == "classes":
                classes = int(cols[1])
            else:
                raise SchemaError(f"unknown schema row {kind!r}", schema, lineno)
        except (IndexError, ValueError) as exc:
            if isinstance(exc, DatasetError):
                raise
            raise SchemaError(f"malformed schema row: {exc}", schema, lineno) from None
    for et in edge_types:
        for t in (et.src, et.dst):
            if t not in dims:
                raise SchemaError(f"edge type {et.name} references undeclared node type {t}", schema)

    ids: dict[str, dict[str, int]] = {}
    counts, features = {}, {}
    for t, dim in dims.items():
        ids[t] = {}
        nodes_file = path / f"nodes-{t}.tsv"
        for lineno, cols in _read_tsv(nodes_file):
            if cols[0] in ids[t]:
                raise SchemaError(f"duplicate node id {cols[0]!r}", nodes_file, lineno)
            ids[t][cols[0]] = len(ids[t])
        counts[t] = len(ids[t])
        feat_file = path / f"features-{t}.bin"
        x = read_features(feat_file) if feat_file.exists() else np.zeros((counts[t], dim), np.float32)
        if x.shape != (counts[t], dim):
            raise FeatureDimensionError(f"expected {counts[t]}x{dim}, got {x.shape[0]}x{x.shape[1]}", feat_file)
        features[t] = x

    edges = {}
    for et in edge_types:
        edge_file = path / f"edges-{et.name}.tsv"
        rows, seen = [], set()
        if edge_file.exists():
            for lineno, cols in _read_tsv(edge_file):
                if len(cols) < 2:
                    raise SchemaError("edge row needs two columns", edge_file, lineno)
                a, b = ids[et.src].get(cols[0]), ids[et.dst].get(cols[1])
                if a is None or b is None:
                    missing = cols[0] if a is None else cols[1]
                    raise DanglingEndpointError(f"unknown endpoint {missing!r}", edge_file, lineno)
                if (a, b) in seen:
                    raise DuplicateEdgeError(f"duplicate edge {cols[0]}->{cols[1]}", edge_file, lineno)
                seen.add((a, b))
                rows.append((a, b))
        edges[et.name] = np.asarray(rows, dtype=np.int64).reshape(-1, 2)

    g = HeteroGraph(counts, edge_types, edges, features, target)

    labels = None
    label_file = path / "labels.tsv"
    if label_file.exists():
        if target is None:
            raise SchemaError("labels.tsv present but schema has no target row", schema)
        y = np.full(counts[target], -1, dtype=np.int64)
        for lineno, cols in _read_tsv(label_file):
            i = ids[target].get(cols[0])
            if i is None:
                raise DanglingEndpointError(f"label for unknown node {cols[0]!r}", label_file, lineno)
            y[i] = int(cols[1])
        n_cls = classes if classes is not None else int(y.max()) + 1
        if y.max() >= n_cls:
            raise SchemaError(f"label {y.max()} outside {n_cls} classes", label_file)
        labels = LabelTable(target, y, n_cls)

    splits = None
    split_file = path / "splits.tsv"
    if split_file.exists():
        parts = {name: [] for name in SPLIT_NAMES}
        for lineno, cols in _read_tsv(split_file):
            i = ids[target].get(cols[0])
            if i is None:
                raise DanglingEndpointError(f"split for unknown node {cols[0]!r}", split_file, lineno)
            if cols[1] not in parts:
                raise SchemaError(f"unknown split {cols[1]!r}", split_file, lineno)
            parts[cols[1]].append(i)
        splits = SplitSpec(**parts)
    return g, labels, splits


def node_id_table(path) -> dict[str, list[str]]:
    """String ids per node type, in dense-id order."""
    path = Path(path)
    out = {}
    for f in sorted(os.listdir(path)):
        if f.startswith("nodes-") and f.endswith(".tsv"):
            out[f[6:-4]] = [cols[0] for _, cols in _read_tsv(path / f)]
    return out
