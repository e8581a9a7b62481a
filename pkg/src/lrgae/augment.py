"""Masking augmentations that turn a graph into a view plus a record of what was hidden."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ContractError, DimensionError
from .graph import Graph, attention_edges, gcn_normalize_edges, mean_adjacency
from .tensor import SparseMatrix, Tensor, replace_rows

AUGMENT_KINDS = ("none", "edge_mask", "path_mask", "node_mask", "feature_mask")
STRUCTURE_MASKS = ("edge_mask", "path_mask", "node_mask")

_EMPTY_EDGES = np.zeros((0, 2), dtype=np.int64)
_EMPTY_NODES = np.zeros(0, dtype=np.int64)


@dataclass(frozen=True)
class AugmentSpec:
    """How to build one view. For ``path_mask`` the ratio is the fraction of walk roots."""

    kind: str = "none"
    ratio: float = 0.0
    walk_len: int = 3

    def __post_init__(self):
        if self.kind not in AUGMENT_KINDS:
            raise ContractError(f"unknown augmentation {self.kind!r}; choose from {AUGMENT_KINDS}")
        if not 0.0 <= self.ratio <= 1.0:
            raise ContractError(f"mask ratio must lie in [0, 1], got {self.ratio}")
        if self.walk_len < 1:
            raise ContractError(f"walk_len must be >= 1, got {self.walk_len}")
        if self.kind == "path_mask" and self.ratio == 0.0:
            raise ContractError("path_mask needs a root fraction in (0, 1]")

    @property
    def masks_structure(self) -> bool:
        return self.kind in STRUCTURE_MASKS and self.ratio > 0

    @property
    def masks_features(self) -> bool:
        return self.kind == "feature_mask" and self.ratio > 0


@dataclass(frozen=True, eq=False)
class GraphView:
    base: Graph
    visible_edges: np.ndarray
    masked_edges: np.ndarray
    features: Tensor
    masked_nodes: np.ndarray = field(default_factory=lambda: _EMPTY_NODES)
    spec: AugmentSpec = field(default_factory=AugmentSpec)
    dropped_nodes: np.ndarray = field(default_factory=lambda: _EMPTY_NODES)

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def aliases_base(self) -> bool:
        return len(self.masked_edges) == 0 and len(self.visible_edges) == self.base.num_edges

    @cached_property
    def normalized_adj(self) -> SparseMatrix:
        if self.aliases_base:
            return self.base.normalized_adj
        return gcn_normalize_edges(self.n, self.visible_edges)

    @cached_property
    def mean_adj(self) -> SparseMatrix:
        return mean_adjacency(self.n, self.visible_edges)

    @cached_property
    def attention_edges(self) -> tuple[np.ndarray, np.ndarray]:
        return attention_edges(self.n, self.visible_edges)


def _split_edges(g: Graph, masked: np.ndarray, spec: AugmentSpec, **extra) -> GraphView:
    return GraphView(
        base=g,
        visible_edges=g.edges[~masked],
        masked_edges=g.edges[masked],
        features=g.x,
        spec=spec,
        **extra,
    )


def no_augment(g: Graph) -> GraphView:
    return GraphView(g, g.edges, _EMPTY_EDGES, g.x)


def edge_mask(g: Graph, p: float, rng: np.random.Generator) -> GraphView:
    """Hide each undirected edge independently with probability ``p``."""
    spec = AugmentSpec("edge_mask", p)
    masked = rng.random(g.num_edges) < p
    return _split_edges(g, masked, spec)


def path_mask(g: Graph, root_fraction: float, walk_len: int, rng: np.random.Generator) -> GraphView:
    """Hide every edge traversed by random walks started from a sample of root nodes.

    ``ceil(root_fraction * n)`` distinct roots each take ``walk_len`` uniform
    steps over the full graph; revisits are allowed and a walk stops early at
    a node with no neighbours.
    """
    spec = AugmentSpec("path_mask", root_fraction, walk_len)
    offsets, nbrs, eids = g.adjacency_lists
    n_roots = min(g.n, math.ceil(root_fraction * g.n))
    roots = rng.choice(g.n, size=n_roots, replace=False)
    masked = np.zeros(g.num_edges, dtype=bool)
    for root in roots.tolist():
        node = root
        for _ in range(walk_len):
            lo, hi = offsets[node], offsets[node + 1]
            if hi == lo:
                break
            j = lo + int(rng.integers(hi - lo))
            masked[eids[j]] = True
            node = int(nbrs[j])
    return _split_edges(g, masked, spec)


def node_mask(g: Graph, p: float, rng: np.random.Generator) -> GraphView:
    """Drop each node from the structure with probability ``p``; its incident edges are hidden."""
    spec = AugmentSpec("node_mask", p)
    chosen = rng.random(g.n) < p
    masked = chosen[g.edges[:, 0]] | chosen[g.edges[:, 1]] if g.num_edges else np.zeros(0, bool)
    return _split_edges(g, masked, spec, dropped_nodes=np.flatnonzero(chosen))


def feature_mask(g: Graph, p: float, mask_token: Tensor, rng: np.random.Generator) -> GraphView:
    """Replace the feature rows of a random node subset with ``mask_token``."""
    if mask_token.shape != (1, g.num_features):
        raise DimensionError(
            f"mask token has shape {mask_token.shape}, features have {g.num_features} columns"
        )
    spec = AugmentSpec("feature_mask", p)
    chosen = np.flatnonzero(rng.random(g.n) < p)
    features = replace_rows(g.x, chosen, mask_token) if len(chosen) else g.x
    return GraphView(g, g.edges, _EMPTY_EDGES, features, masked_nodes=chosen, spec=spec)


def augment(
    g: Graph,
    spec: AugmentSpec,
    rng: np.random.Generator,
    mask_token: Tensor | None = None,
) -> GraphView:
    if spec.kind == "none":
        return no_augment(g)
    if spec.kind == "edge_mask":
        return edge_mask(g, spec.ratio, rng)
    if spec.kind == "path_mask":
        return path_mask(g, spec.ratio, spec.walk_len, rng)
    if spec.kind == "node_mask":
        return node_mask(g, spec.ratio, rng)
    if mask_token is None:
        mask_token = Tensor(np.zeros((1, g.num_features)))
    return feature_mask(g, spec.ratio, mask_token, rng)
