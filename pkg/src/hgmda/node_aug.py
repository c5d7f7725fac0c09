"""Feature exchange: replace a node's input state by the mean of its best neighbours."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import EncodedGraph
from .graph import HeteroGraph


def select_count(k_ratio: float, n: int) -> int:
    """``max(1, round(k_ratio * n))`` with halves rounded up; 0 when ``n == 0``."""
    if n == 0:
        return 0
    return max(1, int(np.floor(k_ratio * n + 0.5)))


def feature_similarity(h_t, h_s) -> float:
    h_t, h_s = np.asarray(h_t), np.asarray(h_s)
    if h_t.shape != h_s.shape:
        raise ValueError(f"similarity of vectors with shapes {h_t.shape} and {h_s.shape}")
    return float(h_t @ h_s)


def exchange_weights(neighbors, alpha, h_t, h_neighbors, gids=None) -> list[tuple[int, float]]:
    """Rank neighbour instances by ``alpha * <h_t, h_s>``.

    Returns ``(position, weight)`` pairs, heaviest first; ties go to the
    smaller node id (``gids`` if given, else the position).
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if len(alpha) != len(neighbors):
        raise KeyError("attention missing for some neighbour instances")
    gids = np.arange(len(neighbors)) if gids is None else np.asarray(gids)
    weights = [a * feature_similarity(h_t, h) for a, h in zip(alpha, h_neighbors)]
    order = sorted(range(len(weights)), key=lambda i: (-weights[i], gids[i]))
    return [(i, weights[i]) for i in order]


@dataclass
class ExchangePlan:
    """Selected neighbours for each augmented target node.

    Row ``i`` of ``pair_target`` / ``pair_source`` pairs a target's local id
    with a selected neighbour's global id. ``weight`` is the ranking score
    and ``share`` the averaging coefficient (one over the selection size).
    """

    node_type: str
    targets: np.ndarray
    pair_target: np.ndarray
    pair_source: np.ndarray
    weight: np.ndarray
    share: np.ndarray
    candidates: np.ndarray
    skipped: int = 0
    source_type: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=object))

    def apply(self, g: HeteroGraph, h0: dict[str, Tensor]) -> dict[str, Tensor]:
        """Layer-0 states with exchanged rows; the input dict is untouched."""
        t = self.node_type
        if len(self.pair_target) == 0:
            return h0
        n = g.num_nodes[t]
        keep = np.ones((n, 1), dtype=h0[t].dtype)
        keep[np.unique(self.pair_target)] = 0
        new = h0[t] * keep
        for st in g.node_types:
            sel = np.flatnonzero(self.source_type == st)
            if len(sel) == 0:
                continue
            local = self.pair_source[sel] - g.offsets[st]
            rows = ad.gather_rows(h0[st], local) * self.share[sel, None].astype(keep.dtype)
            new = new + ad.scatter_add_rows(rows, self.pair_target[sel], n)
        out = dict(h0)
        out[t] = new
        return out

    def write_report(self, path, ids: dict[str, list[str]] | None = None, g: HeteroGraph | None = None) -> None:
        """TSV of (target, selected neighbours, weights)."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("target\tselected\tweights\n")
            for t in np.unique(self.pair_target):
                sel = np.flatnonzero(self.pair_target == t)
                names = []
                for i in sel:
                    st = self.source_type[i]
                    local = int(self.pair_source[i] - (g.offsets[st] if g is not None else 0))
                    names.append(ids[st][local] if ids else f"{st}:{local}")
                tname = ids[self.node_type][t] if ids else f"{self.node_type}:{t}"
                fh.write(f"{tname}\t{','.join(names)}\t{','.join(f'{self.weight[i]:.6g}' for i in sel)}\n")


def node_types_of(g: HeteroGraph, gids) -> np.ndarray:
    starts = np.array([g.offsets[t] for t in g.node_types])
    names = np.array(g.node_types, dtype=object)
    return names[np.searchsorted(starts, np.asarray(gids), side="right") - 1]


def plan_feature_exchange(g: HeteroGraph, encoded: EncodedGraph, targets, k_ratio: float) -> ExchangePlan:
    """Pick the top ``k_ratio`` share of each target's in-neighbours.

    Ranking uses the final layer's head-averaged attention of the edge
    instance times the dot product of the states entering that layer. A
    neighbour reached through several relations keeps its best instance.
    """
    if not 0 < k_ratio <= 1:
        raise ValueError(f"k_ratio must be in (0, 1], got {k_ratio}")
    t_type = g.target_type
    targets = np.unique(np.asarray(targets, dtype=np.int64))
    is_target = np.zeros(g.num_nodes[t_type], dtype=bool)
    is_target[targets] = True
    h = {k: v.data for k, v in encoded.final_input.items()}

    dst, src_gid, w = [], [], []
    for rel in g.relations:
        if rel.meta.target_type != t_type or len(rel.src) == 0:
            continue
        mask = is_target[rel.dst]
        if not mask.any():
            continue
        a = encoded.alpha_mean.get(rel.id)
        if a is None:
            # no attention layer ran: fall back to uniform attention
            a = 1.0 / np.maximum(np.bincount(rel.dst, minlength=g.num_nodes[t_type]), 1)[rel.dst]
        s, d = rel.src[mask], rel.dst[mask]
        sim = np.einsum("ij,ij->i", h[t_type][d].astype(np.float64), h[rel.meta.source_type][s].astype(np.float64))
        dst.append(d)
        src_gid.append(s + g.offsets[rel.meta.source_type])
        w.append(np.asarray(a, dtype=np.float64)[mask] * sim)
    if dst:
        dst, src_gid, w = np.concatenate(dst), np.concatenate(src_gid), np.concatenate(w)
    else:
        dst = src_gid = np.zeros(0, np.int64)
        w = np.zeros(0)

    order = np.lexsort((src_gid, -w, dst))
    dst, src_gid, w = dst[order], src_gid[order], w[order]
    # keep the first (best) instance of each (target, neighbour) pair
    pair_key = dst * g.total_nodes + src_gid
    _, first = np.unique(pair_key, return_index=True)
    first.sort()
    dst, src_gid, w = dst[first], src_gid[first], w[first]
    order = np.lexsort((src_gid, -w, dst))
    dst, src_gid, w = dst[order], src_gid[order], w[order]

    counts = np.bincount(dst, minlength=g.num_nodes[t_type])
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    rank = np.arange(len(dst)) - starts[dst]
    take = np.array([select_count(k_ratio, int(c)) for c in counts])
    keep = rank < take[dst]
    dst, src_gid, w = dst[keep], src_gid[keep], w[keep]
    share = 1.0 / take[dst] if len(dst) else np.zeros(0)
    skipped = int((counts[targets] == 0).sum())
    src_type = node_types_of(g, src_gid)
    return ExchangePlan(t_type, targets, dst, src_gid, w, share, counts[targets], skipped, src_type)
