"""Semi-supervised node classification on heterogeneous graphs with
attention-guided feature exchange and triangle-based edge augmentation."""

from .autodiff import AdamW, Tape, Tensor, load_checkpoint, save_checkpoint
from .encoder import EncodedGraph, EncoderConfig, forward, init_params
from .graph import (
    DatasetError,
    EdgeType,
    HeteroGraph,
    LabelTable,
    MetaRelation,
    SplitSpec,
    SyntheticSpec,
    generate_synthetic,
    load_graph,
    save_graph,
    split_nodes,
)
from .metrics import ConfusionTally, ari, kmeans_embeddings, macro_f1, micro_f1, nmi
from .node_aug import ExchangePlan, plan_feature_exchange
from .train import RunConfig, TrainResult, consistency_loss, labeled_loss, sharpen, total_loss, train
from .triangles import (
    EdgeOverlay,
    TriangleStats,
    before_after_report,
    count_triangles,
    plan_edge_adding,
    plan_edge_removing,
)

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "ConfusionTally",
    "DatasetError",
    "EdgeOverlay",
    "EdgeType",
    "EncodedGraph",
    "EncoderConfig",
    "ExchangePlan",
    "HeteroGraph",
    "LabelTable",
    "MetaRelation",
    "RunConfig",
    "SplitSpec",
    "SyntheticSpec",
    "Tape",
    "Tensor",
    "TrainResult",
    "TriangleStats",
    "ari",
    "before_after_report",
    "consistency_loss",
    "count_triangles",
    "forward",
    "generate_synthetic",
    "init_params",
    "kmeans_embeddings",
    "labeled_loss",
    "load_checkpoint",
    "load_graph",
    "macro_f1",
    "micro_f1",
    "nmi",
    "plan_edge_adding",
    "plan_edge_removing",
    "plan_feature_exchange",
    "save_checkpoint",
    "save_graph",
    "sharpen",
    "split_nodes",
    "total_loss",
    "train",
]
