"""Graph storage, on-disk dataset format, normalisation, splits and SBM generation."""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import CapacityError, ContractError, GraphValidationError, ParseError
from .tensor import SparseMatrix, Tensor

_EDGE_LINE = re.compile(r"^(\d+)\t(\d+)$")


@dataclass(frozen=True)
class NodeSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        sets = [set(self.train.tolist()), set(self.val.tolist()), set(self.test.tolist())]
        if not all(sets):
            raise ContractError("node split parts must be nonempty")
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ContractError("node split parts must be pairwise disjoint")

    def __eq__(self, other):
        if not isinstance(other, NodeSplit):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("train", "val", "test")
        )


@dataclass(frozen=True, eq=False)
class LinkSplit:
    train_edges: np.ndarray
    val_pos: np.ndarray
    val_neg: np.ndarray
    test_pos: np.ndarray
    test_neg: np.ndarray


def canonical_edges(edges, n: int | None = None) -> np.ndarray:
    """Order endpoints (u < v), drop self-loops and duplicates, sort lexicographically."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(e) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    e = np.sort(e, axis=1)
    e = e[e[:, 0] != e[:, 1]]
    return np.unique(e, axis=0)


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected attributed graph; each edge is stored once as (u, v) with u < v."""

    n: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None
    num_classes: int | None = None
    public_split: NodeSplit | None = None

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        feats = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "features", feats)
        if feats.ndim != 2 or feats.shape[0] != self.n:
            raise GraphValidationError(f"features must be {self.n} x d, got {feats.shape}")
        if len(edges):
            if edges.min() < 0 or edges.max() >= self.n:
                raise GraphValidationError(f"edge endpoint outside [0, {self.n})")
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise GraphValidationError("edges must be stored with u < v and no self-loops")
            keys = edges[:, 0] * self.n + edges[:, 1]
            if len(np.unique(keys)) != len(keys):
                raise GraphValidationError("duplicate edges")
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            object.__setattr__(self, "labels", labels)
            if labels.shape != (self.n,):
                raise GraphValidationError(f"labels must have length {self.n}")
            k = self.num_classes if self.num_classes is not None else int(labels.max()) + 1
            object.__setattr__(self, "num_classes", k)
            if labels.min() < 0 or labels.max() >= k:
                raise GraphValidationError(f"labels must lie in [0, {k})")

    @classmethod
    def from_edges(cls, n: int, edges, features, labels=None, **kwargs) -> Graph:
        return cls(n, canonical_edges(edges), features, labels, **kwargs)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @cached_property
    def x(self) -> Tensor:
        return Tensor(self.features)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.reshape(-1), minlength=self.n)

    @cached_property
    def adjacency_lists(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR neighbour lists: (offsets, neighbours, edge ids into ``edges``)."""
        u, v = self.edges[:, 0], self.edges[:, 1]
        src = np.concatenate([u, v])
        dst = np.concatenate([v, u])
        eid = np.concatenate([np.arange(len(u)), np.arange(len(u))])
        order = np.lexsort((dst, src))
        offsets = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=self.n), out=offsets[1:])
        return offsets, dst[order], eid[order]

    @cached_property
    def edge_keys(self) -> np.ndarray:
        return np.sort(self.edges[:, 0] * self.n + self.edges[:, 1])

    def has_edges(self, pairs) -> np.ndarray:
        """Membership test for (u, v) pairs in either orientation."""
        p = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        keys = np.minimum(p[:, 0], p[:, 1]) * self.n + np.maximum(p[:, 0], p[:, 1])
        pos = np.searchsorted(self.edge_keys, keys)
        pos = np.minimum(pos, max(len(self.edge_keys) - 1, 0))
        if len(self.edge_keys) == 0:
            return np.zeros(len(p), dtype=bool)
        return self.edge_keys[pos] == keys

    @cached_property
    def normalized_adj(self) -> SparseMatrix:
        return gcn_normalize(self)

    def with_edges(self, edges) -> Graph:
        return Graph(self.n, canonical_edges(edges), self.features, self.labels, self.num_classes, self.public_split)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        same_labels = (self.labels is None and other.labels is None) or (
            self.labels is not None
            and other.labels is not None
            and np.array_equal(self.labels, other.labels)
        )
        return (
            self.n == other.n
            and np.array_equal(self.edges, other.edges)
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and same_labels
            and self.num_classes == other.num_classes
            and self.public_split == other.public_split
        )

    __hash__ = object.__hash__


# --------------------------------------------------------------------------- IO


def _read_lines(path: Path) -> list[str]:
    text = path.read_text()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def load_graph(path) -> Graph:
    """Load a dataset directory (``edges.tsv``, ``features.csv``, optional ``labels.csv``/``splits.json``)."""
    root = Path(path)
    feat_path = root / "features.csv"
    edge_path = root / "edges.tsv"
    for p in (feat_path, edge_path):
        if not p.is_file():
            raise FileNotFoundError(f"missing dataset file: {p}")

    rows: list[list[float]] = []
    width = None
    for lineno, line in enumerate(_read_lines(feat_path), start=1):
        tokens = line.split(",")
        try:
            row = [float(t) for t in tokens]
        except ValueError:
            raise ParseError(feat_path, lineno, f"non-numeric token in {line!r}") from None
        if not all(math.isfinite(x) for x in row):
            raise ParseError(feat_path, lineno, "non-finite feature value")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(feat_path, lineno, f"expected {width} values, found {len(row)}")
        rows.append(row)
    n = len(rows)
    if n == 0:
        raise ParseError(feat_path, 1, "no feature rows")
    features = np.array(rows, dtype=np.float64)

    pairs = []
    for lineno, line in enumerate(_read_lines(edge_path), start=1):
        m = _EDGE_LINE.match(line)
        if m is None:
            raise ParseError(edge_path, lineno, f"expected two tab-separated integers, got {line!r}")
        u, v = int(m.group(1)), int(m.group(2))
        if u >= n or v >= n:
            raise GraphValidationError(f"{edge_path}:{lineno}: endpoint >= number of nodes ({n})")
        pairs.append((u, v))

    labels = None
    label_path = root / "labels.csv"
    if label_path.is_file():
        values = []
        for lineno, line in enumerate(_read_lines(label_path), start=1):
            if not re.fullmatch(r"\d+", line):
                raise ParseError(label_path, lineno, f"expected a nonnegative integer, got {line!r}")
            values.append(int(line))
        if len(values) != n:
            raise GraphValidationError(f"{label_path}: {len(values)} labels for {n} nodes")
        labels = np.array(values, dtype=np.int64)

    split = None
    split_path = root / "splits.json"
    if split_path.is_file():
        raw = json.loads(split_path.read_text())
        try:
            split = NodeSplit(*(np.array(raw[k], dtype=np.int64) for k in ("train", "val", "test")))
        except KeyError as exc:
            raise GraphValidationError(f"{split_path}: missing key {exc}") from None
        for part in (split.train, split.val, split.test):
            if part.min() < 0 or part.max() >= n:
                raise GraphValidationError(f"{split_path}: node index out of range")

    return Graph(n, canonical_edges(pairs), features, labels, public_split=split)


def write_graph(g: Graph, path) -> Path:
    """Write ``g`` in the dataset directory format; floats use shortest round-trip repr."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "edges.tsv", "w", newline="\n") as fh:
        fh.writelines(f"{u}\t{v}\n" for u, v in g.edges.tolist())
    with open(root / "features.csv", "w", newline="\n") as fh:
        fh.writelines(",".join(repr(x) for x in row) + "\n" for row in g.features.tolist())
    if g.labels is not None:
        with open(root / "labels.csv", "w", newline="\n") as fh:
            fh.writelines(f"{y}\n" for y in g.labels.tolist())
    if g.public_split is not None:
        s = g.public_split
        payload = {"train": s.train.tolist(), "val": s.val.tolist(), "test": s.test.tolist()}
        (root / "splits.json").write_text(json.dumps(payload))
    return root


# --------------------------------------------------------------------------- normalisation


def gcn_normalize_edges(n: int, edges: np.ndarray) -> SparseMatrix:
    """D^-1/2 (A + I) D^-1/2 for the symmetric 0/1 adjacency of ``edges``."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    loops = np.arange(n)
    rows = np.concatenate([edges[:, 0], edges[:, 1], loops])
    cols = np.concatenate([edges[:, 1], edges[:, 0], loops])
    deg = np.bincount(rows, minlength=n).astype(np.float64)
    # one rounding of the product keeps entries symmetric and exact for square products
    return SparseMatrix.from_coo(rows, cols, 1.0 / np.sqrt(deg[rows] * deg[cols]), (n, n))


def gcn_normalize(g: Graph) -> SparseMatrix:
    return gcn_normalize_edges(g.n, g.edges)


def mean_adjacency(n: int, edges: np.ndarray) -> SparseMatrix:
    """Row-normalised adjacency without self-loops; isolated nodes get an empty row."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    deg = np.bincount(rows, minlength=n).astype(np.float64)
    return SparseMatrix.from_coo(rows, cols, 1.0 / deg[rows], (n, n))


def attention_edges(n: int, edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(receiver, sender) arrays over both edge directions plus self-loops, sorted by receiver."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    loops = np.arange(n)
    dst = np.concatenate([edges[:, 0], edges[:, 1], loops])
    src = np.concatenate([edges[:, 1], edges[:, 0], loops])
    order = np.lexsort((src, dst))
    return dst[order], src[order]


# --------------------------------------------------------------------------- splits


def node_split(g: Graph, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> NodeSplit:
    """Random train/val/test node split, or the dataset's public split when it ships one."""
    if g.labels is None:
        raise ContractError("node_split requires a labelled graph")
    if g.public_split is not None:
        return g.public_split
    rng = np.random.default_rng(seed)
    perm = rng.permutation(g.n)
    n_train = int(round(fractions[0] * g.n))
    n_val = int(round(fractions[1] * g.n))
    n_test = min(int(round(fractions[2] * g.n)), g.n - n_train - n_val)
    if min(n_train, n_val, n_test) <= 0:
        raise ContractError(f"fractions {fractions} leave an empty part for n={g.n}")
    return NodeSplit(
        np.sort(perm[:n_train]),
        np.sort(perm[n_train : n_train + n_val]),
        np.sort(perm[n_train + n_val : n_train + n_val + n_test]),
    )


def _sample_non_edges(g: Graph, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` distinct canonical non-edges, drawn uniformly without replacement."""
    total_pairs = g.n * (g.n - 1) // 2
    available = total_pairs - g.num_edges
    if available < count:
        raise CapacityError(f"need {count} negative pairs but only {available} non-edges exist")
    if available <= 4 * count:
        iu, iv = np.triu_indices(g.n, 1)
        keys = iu * g.n + iv
        keys = np.setdiff1d(keys, g.edge_keys, assume_unique=True)
        chosen = rng.choice(keys, size=count, replace=False)
        return np.stack([chosen // g.n, chosen % g.n], axis=1)
    picked: list[int] = []
    seen: set[int] = set()
    while len(picked) < count:
        u = rng.integers(0, g.n, size=2 * count)
        v = rng.integers(0, g.n, size=2 * count)
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        ok = lo != hi
        lo, hi = lo[ok], hi[ok]
        ok = ~g.has_edges(np.stack([lo, hi], axis=1))
        for key in (lo[ok] * g.n + hi[ok]).tolist():
            if key not in seen:
                seen.add(key)
                picked.append(key)
                if len(picked) == count:
                    break
    keys = np.array(picked, dtype=np.int64)
    return np.stack([keys // g.n, keys % g.n], axis=1)


def link_split(g: Graph, fractions=(0.85, 0.05, 0.10), seed: int = 0) -> LinkSplit:
    """Partition edges into train/val/test positives and draw matching non-edge negatives."""
    if g.num_edges < 20:
        raise CapacityError(f"link_split needs at least 20 edges, graph has {g.num_edges}")
    rng = np.random.default_rng(seed)
    m = g.num_edges
    n_val = int(math.floor(fractions[1] * m + 1e-9))
    n_test = int(math.floor(fractions[2] * m + 1e-9))
    negatives = _sample_non_edges(g, n_val + n_test, rng)
    perm = rng.permutation(m)
    val_pos = g.edges[np.sort(perm[:n_val])]
    test_pos = g.edges[np.sort(perm[n_val : n_val + n_test])]
    train = g.edges[np.sort(perm[n_val + n_test :])]
    return LinkSplit(train, val_pos, negatives[:n_val], test_pos, negatives[n_val:])


# --------------------------------------------------------------------------- synthetic


def generate_synthetic(
    blocks: int,
    sizes,
    p_in: float,
    p_out: float,
    feature_dim: int,
    noise: float = 0.0,
    seed: int = 0,
) -> Graph:
    """Stochastic block model with one-hot block features plus Gaussian noise."""
    sizes = [int(s) for s in sizes]
    if not 0.0 <= p_out < p_in <= 1.0:
        raise ContractError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if blocks < 1 or len(sizes) != blocks or min(sizes) < 1:
        raise ContractError("sizes must list one positive size per block")
    if feature_dim < blocks:
        raise ContractError(f"feature_dim ({feature_dim}) must be at least the number of blocks")
    if noise < 0:
        raise ContractError("noise must be nonnegative")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(blocks), sizes)
    n = len(labels)
    iu, iv = np.triu_indices(n, 1)
    prob = np.where(labels[iu] == labels[iv], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    edges = np.stack([iu[keep], iv[keep]], axis=1)
    features = np.zeros((n, feature_dim))
    features[np.arange(n), labels] = 1.0
    if noise > 0:
        features += noise * rng.standard_normal((n, feature_dim))
    return Graph(n, edges, features, labels, num_classes=blocks)
