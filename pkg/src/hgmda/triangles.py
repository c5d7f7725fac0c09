"""Triangle statistics and triangle-based edge augmentation.

All counting happens on the undirected, type-erased skeleton of the graph.
For an edge ``(i, j)``:

* ``triangles[i,j]`` is the number of common neighbours of ``i`` and ``j``;
* ``triples[i,j]`` counts open triangles having ``i`` and ``j`` as two
  vertices, so ``d_i + d_j = triples + 2 * triangles + 2`` holds exactly.

Per node, ``triangles_i`` is the number of triangles through ``i`` and
``triples_i`` the number of open wedges centred on ``i``; the clustering
coefficient is ``triangles_i / (triples_i + triangles_i)``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .encoder import EncodedGraph
from .graph import HeteroGraph, Relation
from .node_aug import node_types_of, select_count


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("HGMDA_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class TriangleStats:
    edges: np.ndarray  # (M, 2) global ids, i < j
    edge_triangles: np.ndarray
    edge_triples: np.ndarray
    degree: np.ndarray
    node_triangles: np.ndarray
    node_triples: np.ndarray

    @property
    def total_triangles(self) -> int:
        return int(self.node_triangles.sum() // 3)

    @property
    def total_triples(self) -> int:
        return int(self.node_triples.sum())

    @property
    def clustering(self) -> np.ndarray:
        denom = self.node_triples + self.node_triangles
        out = np.zeros(len(denom))
        nz = denom > 0
        out[nz] = self.node_triangles[nz] / denom[nz]
        return out

    @property
    def mean_clustering(self) -> float:
        return float(self.clustering.mean()) if len(self.degree) else 0.0

    @property
    def curvature(self) -> np.ndarray:
        """Forman curvature ``4 - d_i - d_j + 3 triangles`` per edge."""
        i, j = self.edges[:, 0], self.edges[:, 1]
        return 4 - self.degree[i] - self.degree[j] + 3 * self.edge_triangles

    @property
    def curvature_from_triples(self) -> np.ndarray:
        """Same curvature written as ``2 - triples + triangles``."""
        return 2 - self.edge_triples + self.edge_triangles

    def edge_index(self, i: int, j: int) -> int:
        i, j = min(i, j), max(i, j)
        lo = np.searchsorted(self.edges[:, 0], i, side="left")
        hi = np.searchsorted(self.edges[:, 0], i, side="right")
        k = lo + np.searchsorted(self.edges[lo:hi, 1], j)
        if k >= hi or self.edges[k, 1] != j:
            raise KeyError(f"({i}, {j}) is not an edge")
        return int(k)


def _common_counts(a: sp.csr_matrix, workers: int) -> sp.csr_matrix:
    """``A ∘ (A @ A)``: common-neighbour count on every edge, in row blocks."""
    n = a.shape[0]
    if workers <= 1 or n < 256:
        return a.multiply(a @ a).tocsr()
    bounds = np.linspace(0, n, workers + 1).astype(int)

    def block(k):
        rows = a[bounds[k]:bounds[k + 1]]
        return rows.multiply(rows @ a).tocsr()

    with ThreadPoolExecutor(workers) as pool:
        parts = list(pool.map(block, range(workers)))
    return sp.vstack(parts).tocsr()


def count_triangles(g: HeteroGraph | sp.spmatrix, workers: int | None = None) -> TriangleStats:
    a = g.skeleton if isinstance(g, HeteroGraph) else sp.csr_matrix(g, dtype=np.int64)
    a = a.astype(np.int64)
    deg = np.diff(a.indptr)
    common = _common_counts(a, workers or worker_count())
    upper = sp.triu(a, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    edges = np.stack([upper.row[order], upper.col[order]], axis=1).astype(np.int64)
    tri_e = np.asarray(common[edges[:, 0], edges[:, 1]]).ravel().astype(np.int64) if len(edges) else np.zeros(0, np.int64)
    triples_e = deg[edges[:, 0]] + deg[edges[:, 1]] - 2 - 2 * tri_e
    node_tri = np.asarray(common.sum(axis=1)).ravel().astype(np.int64) // 2
    node_triples = deg * (deg - 1) // 2 - node_tri
    return TriangleStats(edges, tri_e, triples_e, deg, node_tri, node_triples)


def forman_curvature(stats: TriangleStats, i: int, j: int) -> int:
    k = stats.edge_index(i, j)
    return int(4 - stats.degree[i] - stats.degree[j] + 3 * stats.edge_triangles[k])


def clustering_coefficient(stats: TriangleStats, node: int) -> float:
    tri, triples = stats.node_triangles[node], stats.node_triples[node]
    if tri + triples == 0:
        return 0.0
    c = tri / (triples + tri)
    if tri > 0:
        assert abs(c - 1.0 / (1.0 + triples / tri)) < 1e-12
    return float(c)


def adamic_adar(g: HeteroGraph, t: int, s: int, common=None) -> float:
    """Sum of ``1 / ln|Γ(z)|`` over common skeleton neighbours (global ids)."""
    if common is None:
        common = np.intersect1d(g.skeleton_neighbors(t), g.skeleton_neighbors(s))
    deg = g.degree
    return float(sum(1.0 / np.log(deg[z]) for z in common))


# ---------------------------------------------------------------------------
# overlays


@dataclass
class EdgeOverlay:
    """Edges added to and removed from a base graph.

    Entries are stored edges ``(edge type, src, dst)`` with type-local ids;
    each implies its reverse relation. ``scores`` keeps the ranking value
    behind every entry for auditing.
    """

    added: list[tuple[str, int, int]] = field(default_factory=list)
    removed: list[tuple[str, int, int]] = field(default_factory=list)
    scores: dict[tuple[str, str, int, int], float] = field(default_factory=dict)
    skipped: int = 0

    def __post_init__(self):
        if set(self.added) & set(self.removed):
            raise ValueError("an edge cannot be both added and removed")

    def merge(self, other: "EdgeOverlay") -> "EdgeOverlay":
        added = list(dict.fromkeys(self.added + [e for e in other.added if e not in self.added]))
        removed = list(dict.fromkeys(self.removed + [e for e in other.removed if e not in self.removed]))
        return EdgeOverlay(added, removed, {**self.scores, **other.scores}, self.skipped + other.skipped)

    def apply(self, g: HeteroGraph) -> HeteroGraph:
        """Compose the overlay with ``g`` into a new validated graph."""
        edges = {}
        add_by = {et.name: [] for et in g.edge_types}
        rem_by = {et.name: set() for et in g.edge_types}
        for name, a, b in self.added:
            add_by[name].append((a, b))
        for name, a, b in self.removed:
            rem_by[name].add((a, b))
        for et in g.edge_types:
            base = g.edges[et.name]
            present = set(map(tuple, base.tolist()))
            missing = rem_by[et.name] - present
            if missing:
                raise ValueError(f"removing edges absent from {et.name}: {sorted(missing)[:3]}")
            dup = [e for e in add_by[et.name] if e in present]
            if dup:
                raise ValueError(f"adding edges already in {et.name}: {dup[:3]}")
            if rem_by[et.name]:
                keep = np.array([tuple(e) not in rem_by[et.name] for e in base.tolist()], dtype=bool)
                base = base[keep]
            extra = np.asarray(add_by[et.name], dtype=np.int64).reshape(-1, 2)
            edges[et.name] = np.concatenate([base, extra])
        return g.with_edges(edges)

    def write_tsv(self, path, g: HeteroGraph | None = None, ids: dict[str, list[str]] | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("action\tedge_type\tsrc\tdst\tscore\n")
            for action, items in (("add", self.added), ("remove", self.removed)):
                for name, a, b in items:
                    sa, sb = str(a), str(b)
                    if g is not None and ids is not None:
                        et = g.edge_type_map[name]
                        sa, sb = ids[et.src][a], ids[et.dst][b]
                    score = self.scores.get((action, name, a, b), float("nan"))
                    fh.write(f"{action}\t{name}\t{sa}\t{sb}\t{score:.8g}\n")


def _stored_edge(g: HeteroGraph, rel: Relation, src: int, dst: int) -> tuple[str, int, int]:
    """The stored edge behind a relation instance ``src -> dst``."""
    return (rel.base, dst, src) if rel.reverse else (rel.base, src, dst)


def _relation_attention(g: HeteroGraph, encoded: EncodedGraph | None) -> tuple[dict, dict]:
    """Per relation: mean attention per destination node and overall mean."""
    per_node, overall = {}, {}
    for rel in g.relations:
        a = None if encoded is None else encoded.alpha_mean.get(rel.id)
        if a is None or len(rel.dst) == 0:
            overall[rel.id] = 0.0
            per_node[rel.id] = None
            continue
        n = g.num_nodes[rel.meta.target_type]
        sums = np.bincount(rel.dst, weights=a, minlength=n)
        cnt = np.bincount(rel.dst, minlength=n)
        per_node[rel.id] = np.divide(sums, cnt, out=np.full(n, np.nan), where=cnt > 0)
        overall[rel.id] = float(a.mean())
    return per_node, overall


def plan_edge_adding(g: HeteroGraph, targets, k_ratio: float, encoded: EncodedGraph | None = None) -> EdgeOverlay:
    """Close open triangles around each target with the highest Adamic-Adar partners.

    For every target ``t`` the skeleton nodes at distance two that have a
    relation type towards ``t``'s type are ranked by Adamic-Adar index; the
    top ``max(1, round(k_ratio * n))`` get an edge. The edge type is the only
    legal relation or, when several exist, the one with the largest
    attention into ``t``.
    """
    if not 0 < k_ratio <= 1:
        raise ValueError(f"k_ratio must be in (0, 1], got {k_ratio}")
    t_type = g.target_type
    targets = np.unique(np.asarray(targets, dtype=np.int64))
    a = g.skeleton
    deg = g.degree
    inv_log = np.zeros(len(deg))
    inv_log[deg >= 2] = 1.0 / np.log(deg[deg >= 2])
    rows = a[g.offsets[t_type] + targets]
    aa = (rows @ sp.diags(inv_log) @ a).tocsr()
    reach = rows.astype(bool).astype(np.int64)

    legal: dict[str, list[Relation]] = {}
    for rel in g.relations:
        if rel.meta.target_type == t_type:
            legal.setdefault(rel.meta.source_type, []).append(rel)
    per_node, overall = _relation_attention(g, encoded)

    coo = aa.tocoo()
    row, cand, score = coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data
    n_all = g.total_nodes
    rcoo = reach.tocoo()
    direct = np.isin(row * n_all + cand, rcoo.row.astype(np.int64) * n_all + rcoo.col)
    types = node_types_of(g, cand) if len(cand) else np.zeros(0, dtype=object)
    ok = (cand != g.offsets[t_type] + targets[row]) & ~direct & np.isin(types, list(legal))
    row, cand, score, types = row[ok], cand[ok], score[ok], types[ok]

    overlay = EdgeOverlay()
    counts = np.bincount(row, minlength=len(targets))
    overlay.skipped = int((counts == 0).sum())
    order = np.lexsort((cand, -score, row))
    row, cand, score, types = row[order], cand[order], score[order], types[order]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    take = np.array([select_count(k_ratio, int(c)) for c in counts], dtype=np.int64)
    keep = (np.arange(len(row)) - starts[row]) < take[row]
    row, cand, score, types = row[keep], cand[keep], score[keep], types[keep]

    def strength(r: Relation, t: np.ndarray) -> np.ndarray:
        if per_node[r.id] is None:
            return np.full(len(t), overall[r.id])
        v = per_node[r.id][t]
        return np.where(np.isnan(v), overall[r.id], v)

    seen: set[tuple[str, int, int]] = set()
    chosen = np.zeros(len(row), dtype=np.int64)
    for s_type, rels in legal.items():
        sel = np.flatnonzero(types == s_type)
        if len(rels) == 1 or len(sel) == 0:
            chosen[sel] = 0
            continue
        # relations are listed by id, so argmax breaks ties towards the smaller id
        chosen[sel] = np.argmax(np.stack([strength(r, targets[row[sel]]) for r in rels]), axis=0)
    for i in range(len(row)):
        s_type = types[i]
        rel = legal[s_type][chosen[i]]
        t = int(targets[row[i]])
        edge = _stored_edge(g, rel, int(cand[i] - g.offsets[s_type]), t)
        if edge in seen:
            continue
        seen.add(edge)
        overlay.added.append(edge)
        overlay.scores[("add",) + edge] = float(score[i])
    return overlay


def plan_edge_removing(g: HeteroGraph, targets, k_ratio: float, encoded: EncodedGraph | None = None) -> EdgeOverlay:
    """Drop the least-attended triangle edges around each target.

    Candidates are in-edge instances ``s -> t`` whose skeleton edge lies on at
    least one triangle. The bottom ``max(1, round(k_ratio * n))`` by
    head-averaged final-layer attention are removed, unless that would leave
    either endpoint with no edges at all.
    """
    if not 0 < k_ratio <= 1:
        raise ValueError(f"k_ratio must be in (0, 1], got {k_ratio}")
    t_type = g.target_type
    targets = np.unique(np.asarray(targets, dtype=np.int64))
    is_target = np.zeros(g.num_nodes[t_type], dtype=bool)
    is_target[targets] = True
    common = _common_counts(g.skeleton.astype(np.int64), worker_count())

    # instances per target: (alpha, src gid, relation id, src local)
    inst_t, inst_a, inst_s, inst_r = [], [], [], []
    for rel in g.relations:
        if rel.meta.target_type != t_type or len(rel.src) == 0:
            continue
        mask = is_target[rel.dst]
        if not mask.any():
            continue
        t_g = rel.dst[mask] + g.offsets[t_type]
        s_g = rel.src[mask] + g.offsets[rel.meta.source_type]
        on_tri = np.asarray(common[t_g, s_g]).ravel() > 0
        if not on_tri.any():
            continue
        a = encoded.alpha_mean.get(rel.id) if encoded is not None else None
        a = np.zeros(len(rel.src)) if a is None else np.asarray(a, dtype=np.float64)
        inst_t.append(rel.dst[mask][on_tri])
        inst_a.append(a[mask][on_tri])
        inst_s.append(s_g[on_tri])
        inst_r.append(np.full(int(on_tri.sum()), rel.id))
    overlay = EdgeOverlay()
    if not inst_t:
        overlay.skipped = len(targets)
        return overlay
    t_arr, a_arr = np.concatenate(inst_t), np.concatenate(inst_a)
    s_arr, r_arr = np.concatenate(inst_s), np.concatenate(inst_r)
    order = np.lexsort((r_arr, s_arr, a_arr, t_arr))
    t_arr, a_arr, s_arr, r_arr = t_arr[order], a_arr[order], s_arr[order], r_arr[order]

    deg = g.degree.copy()
    # typed instances still linking each skeleton pair
    links: dict[tuple[int, int], int] = {}
    for rel in g.relations[:len(g.edge_types)]:
        so = g.offsets[rel.meta.source_type]
        do = g.offsets[rel.meta.target_type]
        for s, d in zip((rel.src + so).tolist(), (rel.dst + do).tolist()):
            key = (min(s, d), max(s, d))
            links[key] = links.get(key, 0) + 1

    removed: set[tuple[str, int, int]] = set()
    bounds = np.flatnonzero(np.diff(np.concatenate([[-1], t_arr, [-1]])))
    overlay.skipped = len(targets) - (len(bounds) - 1)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        t = int(t_arr[lo])
        t_gid = g.offsets[t_type] + t
        for k in range(lo, lo + select_count(k_ratio, hi - lo)):
            s_gid = int(s_arr[k])
            rel = g.relations[int(r_arr[k])]
            edge = _stored_edge(g, rel, s_gid - g.offsets[rel.meta.source_type], t)
            if edge in removed:
                continue
            key = (min(s_gid, t_gid), max(s_gid, t_gid))
            last_link = links[key] == 1
            if last_link and (deg[s_gid] <= 1 or deg[t_gid] <= 1):
                continue
            removed.add(edge)
            links[key] -= 1
            if last_link:
                deg[s_gid] -= 1
                deg[t_gid] -= 1
            overlay.removed.append(edge)
            overlay.scores[("remove",) + edge] = float(a_arr[k])
    return overlay


# ---------------------------------------------------------------------------
# reports


@dataclass
class TriangleReport:
    before: TriangleStats
    after: TriangleStats

    @property
    def delta_mean(self) -> float:
        return self.after.mean_clustering - self.before.mean_clustering

    def rows(self, dataset: str = "graph") -> list[tuple]:
        return [
            (dataset, "before", self.before.total_triples, self.before.total_triangles,
             self.before.mean_clustering, None),
            (dataset, "after", self.after.total_triples, self.after.total_triangles,
             self.after.mean_clustering, self.delta_mean),
        ]

    def to_tsv(self, dataset: str = "graph") -> str:
        lines = ["dataset\tstage\topen_triangles\ttriangles\tmean_clustering\tdelta_mean"]
        for name, stage, triples, tri, mean_c, delta in self.rows(dataset):
            d = "-" if delta is None else f"{delta:.3f}"
            lines.append(f"{name}\t{stage}\t{triples}\t{tri}\t{mean_c:.3f}\t{d}")
        return "\n".join(lines) + "\n"


def parse_report(text: str) -> list[dict[str, object]]:
    """Parse a report TSV back into typed rows (``delta_mean`` None for "-")."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = lines[0].split("\t")
    out = []
    for ln in lines[1:]:
        row = dict(zip(header, ln.split("\t")))
        out.append({
            "dataset": row["dataset"],
            "stage": row["stage"],
            "open_triangles": int(row["open_triangles"]),
            "triangles": int(row["triangles"]),
            "mean_clustering": float(row["mean_clustering"]),
            "delta_mean": None if row["delta_mean"] == "-" else float(row["delta_mean"]),
        })
    return out


class SparseClaimError(AssertionError):
    """Augmentation lowered mean clustering on a graph dominated by open triangles."""


def is_sparse(stats: TriangleStats) -> bool:
    """True when most nodes with a wedge have more open than closed triangles."""
    has_wedge = stats.degree >= 2
    if not has_wedge.any():
        return False
    open_heavy = stats.node_triples[has_wedge] > stats.node_triangles[has_wedge]
    return bool(open_heavy.mean() > 0.5)


def before_after_report(g: HeteroGraph, overlay: EdgeOverlay, check: bool = False) -> TriangleReport:
    """Triangle statistics before and after ``overlay``.

    With ``check``, a non-empty overlay on a sparse graph must raise the mean
    clustering coefficient; otherwise :class:`SparseClaimError` is raised.
    """
    report = TriangleReport(count_triangles(g), count_triangles(overlay.apply(g)))
    if check and (overlay.added or overlay.removed) and is_sparse(report.before) and report.delta_mean <= 0:
        raise SparseClaimError(f"mean clustering fell by {-report.delta_mean:.6g} on a sparse graph")
    return report


def read_overlay_tsv(path, g: HeteroGraph, ids: dict[str, list[str]] | None = None) -> EdgeOverlay:
    """Inverse of :meth:`EdgeOverlay.write_tsv`."""
    lookup = None
    if ids is not None:
        lookup = {t: {name: i for i, name in enumerate(v)} for t, v in ids.items()}
    overlay = EdgeOverlay()
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:4] != ["action", "edge_type", "src", "dst"]:
            raise ValueError(f"{path}:1: not an overlay file")
        for lineno, line in enumerate(fh, start=2):
            cols = line.rstrip("\n").split("\t")
            if len(cols) < 4:
                raise ValueError(f"{path}:{lineno}: expected at least 4 columns")
            action, name, a, b = cols[:4]
            et = g.edge_type_map.get(name)
            if et is None:
                raise ValueError(f"{path}:{lineno}: unknown edge type {name!r}")
            try:
                if lookup is not None:
                    a, b = lookup[et.src][a], lookup[et.dst][b]
                else:
                    a, b = int(a), int(b)
            except (KeyError, ValueError):
                raise ValueError(f"{path}:{lineno}: unknown endpoint {a!r} or {b!r}") from None
            edge = (name, a, b)
            if action == "add":
                overlay.added.append(edge)
            elif action == "remove":
                overlay.removed.append(edge)
            else:
                raise ValueError(f"{path}:{lineno}: unknown action {action!r}")
            if len(cols) > 4:
                overlay.scores[(action,) + edge] = float(cols[4])
    return overlay
