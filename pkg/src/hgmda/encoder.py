"""Meta-relation attention encoder.

Each layer scores every edge instance ``s --e--> t`` per head as
``(K_s W_e Q_t) * V_<T(s),e,T(t)> / sqrt(d)``, normalises the scores with a
softmax over all incoming instances of ``t`` (every relation together), and
adds the attention-weighted messages to ``t``'s previous state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import HeteroGraph, MetaRelation


@dataclass
class EncoderConfig:
    layers: int = 5
    hidden: int = 64
    heads: int = 8
    num_classes: int = 3
    activation: str = "tanh"

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ValueError(f"hidden dim {self.hidden} not divisible by {self.heads} heads")
        if self.activation not in ad.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads


@dataclass
class EncodedGraph:
    hidden: list[dict[str, Tensor]]
    # final-layer attention per relation id: (E_r, heads)
    alpha: dict[int, np.ndarray]
    z: Tensor
    logits: Tensor
    # per relation id, final-layer attention averaged over heads
    alpha_mean: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def final_input(self) -> dict[str, Tensor]:
        """States fed to the last attention layer (``H^(L-1)``)."""
        return self.hidden[-2] if len(self.hidden) > 1 else self.hidden[-1]

    @property
    def embeddings(self) -> dict[str, Tensor]:
        return self.hidden[-1]


def _glorot(rng, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


def param_shapes(g: HeteroGraph, config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    """Parameter name -> shape; depends on the schema only, never on edges."""
    d, dk = config.hidden, config.head_dim
    shapes: dict[str, tuple[int, ...]] = {}
    for t in g.node_types:
        shapes[f"proj.{t}"] = (g.feature_dim(t), d)
    for layer in range(config.layers):
        for t in g.node_types:
            for role in ("q", "k", "msg"):
                shapes[f"layer{layer}.{role}.{t}"] = (d, d)
        for meta in g.meta_relations:
            shapes[f"layer{layer}.att.{meta.edge_type}"] = (dk, dk)
            shapes[f"layer{layer}.gate.{meta.source_type}.{meta.edge_type}.{meta.target_type}"] = (1, 1)
    shapes["cls.weight"] = (d, config.num_classes)
    shapes["cls.bias"] = (1, config.num_classes)
    return shapes


def init_params(g: HeteroGraph, config: EncoderConfig, seed: int = 0, dtype=np.float32) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(g, config).items():
        if ".gate." in name:
            value = np.ones(shape, dtype=dtype)
        elif name == "cls.bias":
            value = np.zeros(shape, dtype=dtype)
        else:
            value = _glorot(rng, shape[0], shape[1], dtype)
        params[name] = Tensor(value, requires_grad=True, dtype=dtype)
    return params


def gate_name(layer: int, meta: MetaRelation) -> str:
    return f"layer{layer}.gate.{meta.source_type}.{meta.edge_type}.{meta.target_type}"


def project_inputs(g: HeteroGraph, params: dict[str, Tensor], config: EncoderConfig) -> dict[str, Tensor]:
    """``H^0 = sigma(X W_T)`` for every node type."""
    act = ad.ACTIVATIONS[config.activation]
    out = {}
    for t in g.node_types:
        w = params.get(f"proj.{t}")
        if w is None:
            raise KeyError(f"no input projection for node type {t}")
        x = Tensor(g.features[t], dtype=w.dtype)
        out[t] = act(x @ w)
    return out


def relation_scores(k_src: Tensor, q_dst: Tensor, w_att: Tensor, gate: Tensor, hidden: int) -> Tensor:
    """Raw attention scores for one relation.

    ``k_src`` and ``q_dst`` hold one row per (edge, head) pair, shape
    ``(E*heads, head_dim)``; the result has shape ``(E*heads,)``.
    """
    kw = k_src @ w_att
    return (kw * q_dst).sum(axis=1) * (gate.reshape(1) * (1.0 / math.sqrt(hidden)))


def attention_layer(g: HeteroGraph, h: dict[str, Tensor], params: dict[str, Tensor], layer: int,
                    config: EncoderConfig) -> tuple[dict[str, Tensor], dict[int, Tensor]]:
    """One round of scoring, normalisation and aggregation.

    Returns the new states and the per-relation ``(E, heads)`` attention.
    """
    heads, dk, d = config.heads, config.head_dim, config.hidden
    p = lambda name: params[f"layer{layer}.{name}"]
    q = {t: h[t] @ p(f"q.{t}") for t in g.node_types}
    k = {t: h[t] @ p(f"k.{t}") for t in g.node_types}
    m = {t: h[t] @ p(f"msg.{t}") for t in g.node_types}

    scores: dict[str, list] = {t: [] for t in g.node_types}
    for rel in g.relations:
        n_e = len(rel.src)
        if n_e == 0:
            continue
        meta = rel.meta
        ks = ad.gather_rows(k[meta.source_type], rel.src).reshape(n_e * heads, dk)
        qt = ad.gather_rows(q[meta.target_type], rel.dst).reshape(n_e * heads, dk)
        s = relation_scores(ks, qt, p(f"att.{meta.edge_type}"), params[gate_name(layer, meta)], d)
        scores[meta.target_type].append((rel, s.reshape(n_e, heads)))

    out, alphas = {}, {}
    for t in g.node_types:
        if not scores[t]:
            out[t] = h[t]
            continue
        rels = [r for r, _ in scores[t]]
        dst = np.concatenate([r.dst for r in rels])
        alpha = ad.segment_softmax(ad.concat([s for _, s in scores[t]], axis=0), dst, g.num_nodes[t])
        msgs = ad.concat([ad.gather_rows(m[r.meta.source_type], r.src) for r in rels], axis=0)
        n_e = len(dst)
        weighted = msgs.reshape(n_e, heads, dk) * alpha.reshape(n_e, heads, 1)
        out[t] = h[t] + ad.scatter_add_rows(weighted.reshape(n_e, d), dst, g.num_nodes[t])
        start = 0
        for r in rels:
            alphas[r.id] = (alpha, start, start + len(r.src))
            start += len(r.src)
    return out, alphas


def forward(g: HeteroGraph, params: dict[str, Tensor], config: EncoderConfig, exchange=None) -> EncodedGraph:
    """Run the encoder and the classifier head.

    ``exchange`` optionally rewrites the layer-0 states (feature exchange
    view); it must expose ``apply(g, h0) -> h0``.
    """
    if g.target_type is None:
        raise ValueError("graph has no target node type")
    h = project_inputs(g, params, config)
    if exchange is not None:
        h = exchange.apply(g, h)
    hidden = [h]
    alphas = {}
    for layer in range(config.layers):
        h, alphas = attention_layer(g, h, params, layer, config)
        hidden.append(h)
    logits = h[g.target_type] @ params["cls.weight"] + params["cls.bias"]
    z = ad.row_softmax(logits)
    alpha = {rid: a.data[lo:hi] for rid, (a, lo, hi) in alphas.items()}
    return EncodedGraph(hidden, alpha, z, logits, {rid: a.mean(axis=1) for rid, a in alpha.items()})


def export_attention(path, g: HeteroGraph, encoded: EncodedGraph) -> None:
    """TSV of (src, edge_type, dst, head, alpha) for the final layer."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("src\tedge_type\tdst\thead\talpha\n")
        for rel in g.relations:
            a = encoded.alpha.get(rel.id)
            if a is None:
                continue
            for i in range(len(rel.src)):
                for head in range(a.shape[1]):
                    fh.write(f"{rel.meta.source_type}:{rel.src[i]}\t{rel.name}\t"
                             f"{rel.meta.target_type}:{rel.dst[i]}\t{head}\t{a[i, head]:.8g}\n")
