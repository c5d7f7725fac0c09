"""Semi-supervised objective and training driver."""

from __future__ import annotations

import copy
import hashlib
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .autodiff import AdamW, Tape, Tensor
from .encoder import EncodedGraph, EncoderConfig, forward, init_params
from .graph import HeteroGraph, LabelTable, SplitSpec
from .metrics import ConfusionTally, micro_f1
from .node_aug import plan_feature_exchange
from .triangles import plan_edge_adding, plan_edge_removing

VIEW_KINDS = ("identity", "exchange", "add", "remove")
LOG_FLOOR = 1e-12


class TrainingDiverged(RuntimeError):
    def __init__(self, message, params=None, epoch=None):
        super().__init__(message)
        self.params = params
        self.epoch = epoch


@dataclass
class RunConfig:
    """Everything a training run depends on.

    ``lr`` and ``weight_decay`` are untuned working values; the other
    defaults are the usual settings for this method. Training is full-batch.
    """

    lambda_u: float = 0.5
    temperature: float = 0.2
    k_ratio: float = 0.5
    views: tuple[str, ...] = ("exchange", "add", "remove")
    epochs: int = 300
    patience: int = 30
    lr: float = 5e-3
    weight_decay: float = 1e-4
    seed: int = 0
    dtype: str = "float32"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def __post_init__(self):
        self.views = tuple(self.views)
        if not 0 < self.temperature <= 1:
            raise ValueError(f"temperature must be in (0, 1], got {self.temperature}")
        if not 0 < self.k_ratio <= 1:
            raise ValueError(f"k_ratio must be in (0, 1], got {self.k_ratio}")
        if self.lambda_u < 0:
            raise ValueError(f"lambda_u must be >= 0, got {self.lambda_u}")
        if self.patience > self.epochs:
            raise ValueError("patience cannot exceed epochs")
        if not self.views:
            raise ValueError("at least one view is required")
        bad = [v for v in self.views if v not in VIEW_KINDS]
        if bad:
            raise ValueError(f"unknown view kind(s) {bad}; choose from {VIEW_KINDS}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype}")

    def flat(self) -> dict[str, str]:
        """Dotted key -> string value, the manifest representation."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "encoder":
                for k, v in asdict(value).items():
                    out[f"encoder.{k}"] = str(v)
            elif f.name == "views":
                out["views"] = ",".join(value)
            else:
                out[f.name] = str(value)
        return out

    def digest(self) -> str:
        text = "\n".join(f"{k}={v}" for k, v in sorted(self.flat().items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @classmethod
    def from_flat(cls, values: dict[str, str]) -> "RunConfig":
        kwargs, enc = {}, {}
        types = {f.name: f.type for f in fields(cls)}
        enc_fields = {f.name: f for f in fields(EncoderConfig)}
        for key, raw in values.items():
            if key.startswith("encoder."):
                name = key.split(".", 1)[1]
                if name not in enc_fields:
                    raise KeyError(f"unknown config key {key!r}")
                enc[name] = raw if name == "activation" else int(raw)
            elif key == "views":
                kwargs["views"] = tuple(v.strip() for v in raw.split(",") if v.strip())
            elif key in types:
                kind = {"lambda_u": float, "temperature": float, "k_ratio": float, "lr": float,
                        "weight_decay": float, "epochs": int, "patience": int, "seed": int, "dtype": str}[key]
                kwargs[key] = kind(raw)
            else:
                raise KeyError(f"unknown config key {key!r}")
        return cls(encoder=EncoderConfig(**enc), **kwargs)


# ---------------------------------------------------------------------------
# losses


def labeled_loss(z_views: list[Tensor], labels) -> Tensor:
    """Cross-entropy on labeled rows, averaged over nodes and then views."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise ValueError("labeled set is empty")
    terms = []
    for z in z_views:
        onehot = np.zeros(z.shape, dtype=z.dtype)
        onehot[np.arange(len(labels)), labels] = 1
        logp = ad.log(ad.clip_min(z, LOG_FLOOR))
        terms.append(-(logp * onehot).sum() * (1.0 / len(labels)))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def sharpen(zbar, temperature: float) -> np.ndarray:
    """Raise each probability row to ``1/T`` and renormalise."""
    if not 0 < temperature <= 1:
        raise ValueError(f"temperature must be in (0, 1], got {temperature}")
    zbar = np.asarray(zbar.data if isinstance(zbar, Tensor) else zbar, dtype=np.float64)
    if temperature == 1:
        return zbar / zbar.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore"):
        s = np.log(zbar) / temperature
    s -= s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def consistency_loss(z_views: list[Tensor], target) -> Tensor:
    """Mean squared L2 distance of each view's rows to a fixed target."""
    if len(z_views) < 2:
        raise ValueError("consistency loss needs at least two views")
    target = np.asarray(target)
    n = z_views[0].shape[0]
    total = None
    for z in z_views:
        diff = z - target.astype(z.dtype)
        term = (diff * diff).sum() * (1.0 / (n * len(z_views)))
        total = term if total is None else total + term
    return total


def total_loss(loss_l, loss_u, lambda_u: float):
    return loss_l + loss_u * lambda_u


# ---------------------------------------------------------------------------
# views


@dataclass
class View:
    kind: str
    graph: HeteroGraph
    exchange: object = None


def build_views(g: HeteroGraph, encoded: EncodedGraph, targets, config: RunConfig) -> list[View]:
    """Augmented graphs for one epoch, planned from the latest clean pass."""
    views = []
    for kind in config.views:
        if kind == "identity":
            views.append(View(kind, g))
        elif kind == "exchange":
            views.append(View(kind, g, plan_feature_exchange(g, encoded, targets, config.k_ratio)))
        elif kind == "add":
            views.append(View(kind, plan_edge_adding(g, targets, config.k_ratio, encoded).apply(g)))
        elif kind == "remove":
            views.append(View(kind, plan_edge_removing(g, targets, config.k_ratio, encoded).apply(g)))
    return views


# ---------------------------------------------------------------------------
# driver


@dataclass
class EpochLog:
    epoch: int
    loss_l: float
    loss_u: float
    total: float
    val_loss: float
    val_micro_f1: float
    wall_ms: float

    HEADER = "epoch\tloss_l\tloss_u\ttotal\tval_loss\tval_micro_f1\twall_ms"

    def line(self) -> str:
        return (f"{self.epoch}\t{self.loss_l:.10g}\t{self.loss_u:.10g}\t{self.total:.10g}\t"
                f"{self.val_loss:.10g}\t{self.val_micro_f1:.10g}\t{self.wall_ms:.1f}")


@dataclass
class TrainResult:
    params: dict[str, Tensor]
    history: list[EpochLog]
    best_epoch: int
    config: RunConfig

    def metrics_log(self) -> str:
        return "\n".join([EpochLog.HEADER] + [h.line() for h in self.history]) + "\n"


def _np_dtype(config: RunConfig):
    return np.float32 if config.dtype == "float32" else np.float64


def evaluate_split(g: HeteroGraph, params, config: RunConfig, labels: LabelTable, idx) -> tuple[float, float, EncodedGraph]:
    """(cross-entropy, micro-F1) on ``idx`` from a clean forward pass."""
    enc = forward(g, params, config.encoder)
    return (*split_scores(enc, labels, idx), enc)


def split_scores(enc: EncodedGraph, labels: LabelTable, idx) -> tuple[float, float]:
    idx = np.asarray(idx)
    if len(idx) == 0:
        return float("nan"), float("nan")
    z = enc.z.data[idx].astype(np.float64)
    y = labels.labels[idx]
    loss = float(-np.log(np.maximum(z[np.arange(len(y)), y], LOG_FLOOR)).mean())
    f1 = micro_f1(ConfusionTally.from_predictions(y, z.argmax(axis=1), labels.num_classes))
    return loss, f1


def train(g: HeteroGraph, labels: LabelTable, splits: SplitSpec, config: RunConfig,
          params: dict[str, Tensor] | None = None, on_epoch=None) -> TrainResult:
    """Fit the encoder with supervised and consistency losses.

    Each epoch re-plans every augmentation view from the attention of the
    latest clean forward pass, so the views follow the model. The returned
    parameters are those with the lowest validation loss.
    """
    if g.target_type != labels.target_type:
        raise ValueError("labels do not belong to the graph's target type")
    if config.encoder.num_classes != labels.num_classes:
        raise ValueError(f"encoder has {config.encoder.num_classes} classes, labels {labels.num_classes}")
    dtype = _np_dtype(config)
    if params is None:
        params = init_params(g, config.encoder, seed=config.seed, dtype=dtype)
    opt = AdamW(lr=config.lr, weight_decay=config.weight_decay)
    n_target = g.num_nodes[g.target_type]
    train_idx = splits.train
    if len(train_idx) == 0:
        raise ValueError("no training nodes")
    y_train = labels.labels[train_idx]
    pool = splits.pool(n_target)
    val_idx = splits.val if len(splits.val) else train_idx
    use_u = config.lambda_u > 0 and len(config.views) >= 2 and len(pool) > 0

    clean = forward(g, params, config.encoder)
    best_loss, best_epoch, wait = np.inf, 0, 0
    best_params = {k: v.data.copy() for k, v in params.items()}
    history: list[EpochLog] = []
    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        try:
            views = build_views(g, clean, pool, config)
            with Tape() as tape:
                zs = [forward(v.graph, params, config.encoder, exchange=v.exchange).z for v in views]
                loss_l = labeled_loss([z[train_idx] for z in zs], y_train)
                loss = loss_l
                loss_u_value = 0.0
                if use_u:
                    zu = [z[pool] for z in zs]
                    target = sharpen(np.mean([z.data for z in zu], axis=0), config.temperature)
                    loss_u = consistency_loss(zu, target)
                    loss = total_loss(loss_l, loss_u, config.lambda_u)
                    loss_u_value = loss_u.item()
            tape.backward(loss)
            opt.step(params, {k: p.grad for k, p in params.items() if p.grad is not None})
            for p in params.values():
                p.grad = None
            clean = forward(g, params, config.encoder)
        except FloatingPointError as exc:
            restored = {k: Tensor(v, requires_grad=True) for k, v in best_params.items()}
            raise TrainingDiverged(f"epoch {epoch}: {exc}", restored, epoch) from exc
        val_loss, val_f1 = split_scores(clean, labels, val_idx)
        history.append(EpochLog(epoch, loss_l.item(), loss_u_value, loss.item(), val_loss, val_f1,
                                (time.perf_counter() - start) * 1000))
        if on_epoch is not None:
            on_epoch(history[-1])
        if val_loss < best_loss:
            best_loss, best_epoch, wait = val_loss, epoch, 0
            best_params = {k: v.data.copy() for k, v in params.items()}
        else:
            wait += 1
            if wait >= max(config.patience, 1):
                break
    final = {k: Tensor(v, requires_grad=True) for k, v in best_params.items()}
    return TrainResult(final, history, best_epoch, copy.deepcopy(config))
