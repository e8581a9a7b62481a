"""Graph autoencoders as left/right contrastive learning, on a small numpy autodiff core."""
from .augment import AugmentSpec, GraphView, augment
from .config import Experiment, load_config, parse_config
from .errors import (
    CapacityError,
    ConfigError,
    ContractError,
    DimensionError,
    DomainError,
    GraphValidationError,
    LrgaeError,
    ParseError,
    TrainingError,
)
from .evaluation import clustering_nmi, kmeans, link_metrics, linear_probe, nmi
from .graph import Graph, LinkSplit, NodeSplit, generate_synthetic, link_split, load_graph, node_split, write_graph
from .losses import LossConfig, NegSamplerConfig, negative_sample
from .nn import DecoderConfig, EncoderConfig, encode
from .runner import run_experiment
from .tensor import SparseMatrix, Tensor, backward
from .train import TrainConfig, adam_step, embed, score_pairs, train
from .views import PRESETS, PairBatch, ViewSpec, case_of, preset

__all__ = [
    "AugmentSpec", "GraphView", "augment",
    "Experiment", "load_config", "parse_config",
    "CapacityError", "ConfigError", "ContractError", "DimensionError", "DomainError",
    "GraphValidationError", "LrgaeError", "ParseError", "TrainingError",
    "clustering_nmi", "kmeans", "link_metrics", "linear_probe", "nmi",
    "Graph", "LinkSplit", "NodeSplit", "generate_synthetic", "link_split", "load_graph", "node_split", "write_graph",
    "LossConfig", "NegSamplerConfig", "negative_sample",
    "DecoderConfig", "EncoderConfig", "encode",
    "run_experiment",
    "SparseMatrix", "Tensor", "backward",
    "TrainConfig", "adam_step", "embed", "score_pairs", "train",
    "PRESETS", "PairBatch", "ViewSpec", "case_of", "preset",
]
