"""Contrastive view cases, training pair batches, and the named method presets.

A :class:`ViewSpec` picks the left representation ``G_A^(l)[v]`` and the right
one ``G_B^(r)[u]``. Whether the graph views, the receptive fields and the
node pairs coincide selects one of eight cases:

    case  views  fields  nodes  abbrev   known method
    1     A=B    l=r     v=u    AAllvv   (degenerate)
    2     A!=B   l=r     v=u    ABllvv   GCL
    3     A=B    l!=r    v=u    AAlrvv   GAE_f
    4     A!=B   l!=r    v=u    ABlrvv   GraphMAE
    5     A=B    l=r     v!=u   AAllvu   GAE / MaskGAE
    6     A=B    l!=r    v!=u   AAlrvu
    7     A!=B   l=r     v!=u   ABllvu
    8     A!=B   l!=r    v!=u   ABlrvu
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import AugmentSpec, GraphView
from .errors import ConfigError, ContractError
from .graph import Graph
from .losses import LossConfig, negative_sample
from .nn import DecoderConfig, EmbeddingStack, Params, decode_feature
from .tensor import Tensor, gather_rows

PAIR_MODES = ("same_node", "edge_pair")

_CASES = {
    (True, True, True): 1,
    (False, True, True): 2,
    (True, False, True): 3,
    (False, False, True): 4,
    (True, True, False): 5,
    (True, False, False): 6,
    (False, True, False): 7,
    (False, False, False): 8,
}
CASE_ABBREVIATIONS = {
    1: "AAllvv",
    2: "ABllvv",
    3: "AAlrvv",
    4: "ABlrvv",
    5: "AAllvu",
    6: "AAlrvu",
    7: "ABllvu",
    8: "ABlrvu",
}


@dataclass(frozen=True)
class ViewSpec:
    left_graph: str = "A"
    right_graph: str = "A"
    l: int = 2
    r: int = 2
    pair_mode: str = "edge_pair"
    stop_gradient_right: bool = False

    def __post_init__(self):
        for side in ("left_graph", "right_graph"):
            if getattr(self, side) not in ("A", "B"):
                raise ConfigError("must be 'A' or 'B'", f"view.{side}")
        if self.pair_mode not in PAIR_MODES:
            raise ConfigError(f"must be one of {PAIR_MODES}", "view.pair_mode")
        if self.l < 0 or self.r < 0:
            raise ConfigError("receptive fields must be >= 0", "view.l")

    @property
    def case(self) -> int:
        return case_of(self)

    @property
    def degenerate(self) -> bool:
        return self.case == 1

    @property
    def uses(self) -> set[str]:
        return {self.left_graph, self.right_graph}


def case_of(spec: ViewSpec) -> int:
    key = (spec.left_graph == spec.right_graph, spec.l == spec.r, spec.pair_mode == "same_node")
    return _CASES[key]


@dataclass
class PairBatch:
    left_nodes: np.ndarray
    right_nodes: np.ndarray
    neg_left: np.ndarray | None = None
    neg_right: np.ndarray | None = None

    @property
    def num_positive(self) -> int:
        return len(self.left_nodes)

    @property
    def is_positive(self) -> np.ndarray:
        n_neg = 0 if self.neg_left is None else len(self.neg_left)
        return np.concatenate([np.ones(self.num_positive, bool), np.zeros(n_neg, bool)])

    @property
    def positive_pairs(self) -> np.ndarray:
        return np.stack([self.left_nodes, self.right_nodes], axis=1)

    @property
    def negative_pairs(self) -> np.ndarray | None:
        if self.neg_left is None:
            return None
        return np.stack([self.neg_left, self.neg_right], axis=1)


def _view(side: str, view_a: GraphView, view_b: GraphView) -> GraphView:
    return view_a if side == "A" else view_b


def _orient(edges: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    flip = rng.random(len(edges)) < 0.5
    out = edges.copy()
    out[flip] = edges[flip][:, ::-1]
    return out


def supervision_pairs(
    spec: ViewSpec,
    base: Graph,
    view_a: GraphView,
    view_b: GraphView,
    rng: np.random.Generator,
    neg_count: int | None,
    strategy: str = "uniform",
    embeddings: np.ndarray | None = None,
    neg_multiplier: int | None = None,
) -> PairBatch:
    """Assemble the positive (and, when ``neg_count`` is set, negative) pairs for one step.

    same_node: (v, v) for the feature-masked nodes of either view, else all nodes.
    edge_pair: the edges hidden from the left view when it masks structure,
    else every edge of ``base``; each positive edge gets a random orientation.
    Negatives number ``neg_count``, or ``neg_multiplier`` times the positives.
    """
    if spec.pair_mode == "same_node":
        if view_a.spec.masks_features or view_b.spec.masks_features:
            nodes = np.union1d(view_a.masked_nodes, view_b.masked_nodes)
        else:
            nodes = np.arange(base.n)
        if len(nodes) == 0:
            raise ContractError(f"no positive pairs for {spec} (feature mask selected no nodes)")
        return PairBatch(nodes, nodes.copy())

    left = _view(spec.left_graph, view_a, view_b)
    edges = left.masked_edges if left.spec.masks_structure else base.edges
    if len(edges) == 0:
        raise ContractError(f"no positive pairs for {spec} (empty supervision edge set)")
    pos = _orient(edges, rng)
    batch = PairBatch(pos[:, 0], pos[:, 1])
    if neg_count is None and neg_multiplier:
        neg_count = neg_multiplier * len(pos)
    if neg_count:
        neg = negative_sample(base, neg_count, strategy, rng, embeddings)
        batch.neg_left, batch.neg_right = neg[:, 0], neg[:, 1]
    return batch


def subsample(batch: PairBatch, max_pairs: int, rng: np.random.Generator) -> PairBatch:
    """Keep at most ``max_pairs`` positives (in-batch losses scale quadratically)."""
    if batch.num_positive <= max_pairs:
        return batch
    keep = np.sort(rng.choice(batch.num_positive, size=max_pairs, replace=False))
    return PairBatch(batch.left_nodes[keep], batch.right_nodes[keep])


@dataclass
class LeftRight:
    left: Tensor
    right: Tensor
    neg_left: Tensor | None = None
    neg_right: Tensor | None = None


def left_right(
    spec: ViewSpec,
    stack_a: EmbeddingStack,
    stack_b: EmbeddingStack,
    batch: PairBatch,
    decoder: DecoderConfig,
    params: Params,
    decode_right: bool = False,
) -> LeftRight:
    """Gather left representations at layer ``l`` and right targets at layer ``r``.

    A feature decoder maps the left side (and the right side too when
    ``decode_right``). Edge decoders are pairwise, so rows come back raw for
    scoring. With ``stop_gradient_right`` the right side is cut from the tape.
    """
    left_stack = stack_a if spec.left_graph == "A" else stack_b
    right_stack = stack_a if spec.right_graph == "A" else stack_b
    left_layer = left_stack[spec.l]
    right_layer = right_stack[spec.r]
    if spec.stop_gradient_right:
        right_layer = right_layer.detach()

    def side(layer, nodes, decode):
        rows = gather_rows(layer, nodes)
        if decode and decoder.kind == "mlp_feature":
            rows = decode_feature(rows, params)
        return rows

    out = LeftRight(
        side(left_layer, batch.left_nodes, True),
        side(right_layer, batch.right_nodes, decode_right),
    )
    if batch.neg_left is not None:
        out.neg_left = side(left_layer, batch.neg_left, True)
        out.neg_right = side(right_layer, batch.neg_right, decode_right)
    return out


# --------------------------------------------------------------------------- presets

PRESETS = ("gae", "gae_f", "maskgae", "graphmae", "lrgae6", "lrgae7", "lrgae8")


@dataclass(frozen=True)
class Preset:
    name: str
    aug_a: AugmentSpec
    aug_b: AugmentSpec | None  # None: B is the same view object as A
    view: ViewSpec
    loss: str
    decoder: str


def preset(
    name: str,
    num_layers: int = 2,
    structure_mask: str = "edge_mask",
    structure_ratio: float | None = None,
    feature_ratio: float = 0.5,
    walk_len: int = 3,
) -> Preset:
    """Augmentations, view case, loss and decoder of a named method."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}", "preset")
    if structure_mask not in ("edge_mask", "path_mask", "node_mask"):
        raise ConfigError(f"unknown structure mask {structure_mask!r}", "preset_options.structure_mask")
    if structure_ratio is None:
        structure_ratio = {"edge_mask": 0.7, "path_mask": 0.5, "node_mask": 0.3}[structure_mask]
    k = num_layers
    if name in ("lrgae6", "lrgae8") and k < 2:
        raise ConfigError(f"{name} contrasts layers k and k-1 and needs num_layers >= 2", "encoder.num_layers")
    smask = AugmentSpec(structure_mask, structure_ratio, walk_len)
    fmask = AugmentSpec("feature_mask", feature_ratio)
    none = AugmentSpec()
    if name == "gae":
        return Preset(name, none, none, ViewSpec("A", "A", k, k, "edge_pair"), "bce", "dot")
    if name == "gae_f":
        return Preset(name, none, none, ViewSpec("A", "A", k, 0, "same_node"), "mse", "mlp_feature")
    if name == "maskgae":
        return Preset(name, smask, None, ViewSpec("A", "A", k, k, "edge_pair"), "bce", "mlp_edge")
    if name == "graphmae":
        return Preset(name, fmask, none, ViewSpec("A", "B", k, 0, "same_node"), "sce", "mlp_feature")
    if name == "lrgae6":
        return Preset(name, smask, None, ViewSpec("A", "A", k, k - 1, "edge_pair"), "bce", "dot")
    if name == "lrgae7":
        return Preset(name, smask, none, ViewSpec("A", "B", k, k, "edge_pair"), "bce", "dot")
    return Preset(name, smask, fmask, ViewSpec("A", "B", k, k - 1, "edge_pair"), "bce", "dot")


def check_compatible(spec: ViewSpec, loss: LossConfig, decoder: DecoderConfig, num_layers: int, dims) -> bool:
    """Validate a (view, loss, decoder) combination; returns the resolved ``decode_right``.

    ``dims(i)`` gives the width of encoder layer ``i``. Raises ConfigError naming the field.
    """
    if spec.degenerate:
        raise ConfigError(
            "contrastive view case 1 (AAllvv) is not applicable: it compares a view with "
            "itself, so the loss is identically zero",
            "view",
        )
    for name, val in (("l", spec.l), ("r", spec.r)):
        if val > num_layers:
            raise ConfigError(f"receptive field {val} exceeds encoder depth {num_layers}", f"view.{name}")
    if loss.kind == "bce" and spec.pair_mode != "edge_pair":
        raise ConfigError("bce reconstructs edges and needs pair_mode 'edge_pair'", "loss.kind")
    if loss.kind in ("mse", "sce") and spec.pair_mode != "same_node":
        raise ConfigError(f"{loss.kind} reconstructs node targets and needs pair_mode 'same_node'", "loss.kind")
    if loss.kind == "bce" and not decoder.is_edge:
        raise ConfigError("bce scores edges and needs a 'dot' or 'mlp_edge' decoder", "decoder.kind")
    if loss.kind != "bce" and decoder.kind == "mlp_edge":
        raise ConfigError(f"{loss.kind} compares node representations; 'mlp_edge' only scores pairs", "decoder.kind")
    left_dim, right_dim = dims(spec.l), dims(spec.r)
    if loss.kind == "bce":
        if decoder.kind == "dot" and left_dim != right_dim:
            raise ConfigError(f"dot decoder needs equal widths, got {left_dim} vs {right_dim}", "view.r")
        return False
    decode_right = loss.decode_right
    if decode_right is None:
        decode_right = loss.in_batch and decoder.kind == "mlp_feature" and left_dim == right_dim
    if decode_right and decoder.kind == "mlp_feature" and left_dim != right_dim:
        raise ConfigError("decode_right needs equal left/right widths", "loss.decode_right")
    if decoder.kind == "mlp_feature":
        out = decoder.output_dim if decoder.output_dim is not None else right_dim
        if out != right_dim:
            raise ConfigError(f"feature decoder outputs {out} columns, target has {right_dim}", "decoder.output_dim")
    elif left_dim != right_dim:
        raise ConfigError(f"left width {left_dim} differs from right width {right_dim}; use an mlp_feature decoder", "decoder.kind")
    return bool(decode_right)
