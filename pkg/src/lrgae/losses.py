"""Reconstruction and contrastive objectives, and negative-pair samplers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .graph import Graph
from .tensor import (
    Tensor,
    add,
    logsumexp_rows,
    matmul,
    mul,
    normalize_rows,
    power,
    reduce,
    rowwise_cosine,
    rowwise_dot,
    scale,
    shift,
    softplus,
    sub,
    transpose,
)

LOSS_KINDS = ("bce", "mse", "sce", "infonce", "simcse")
SAMPLER_STRATEGIES = ("uniform", "degree", "similarity")


@dataclass(frozen=True)
class LossConfig:
    kind: str = "bce"
    temperature: float = 0.5
    sce_gamma: float = 2.0
    max_pairs: int = 1024
    decode_right: bool | None = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss {self.kind!r}; choose from {LOSS_KINDS}", "loss.kind")
        if self.temperature <= 0:
            raise ConfigError("must be > 0", "loss.temperature")
        if self.sce_gamma < 1:
            raise ConfigError("must be >= 1", "loss.sce_gamma")
        if self.max_pairs < 2:
            raise ConfigError("must be >= 2", "loss.max_pairs")

    @property
    def in_batch(self) -> bool:
        return self.kind in ("infonce", "simcse")


@dataclass(frozen=True)
class NegSamplerConfig:
    strategy: str = "uniform"
    multiplier: int = 1

    def __post_init__(self):
        if self.strategy not in SAMPLER_STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}", "neg_sampler.strategy")
        if self.multiplier < 1:
            raise ConfigError("must be >= 1", "neg_sampler.multiplier")


def bce_edge_loss(pos_scores: Tensor, neg_scores: Tensor) -> Tensor:
    """mean(-log sigmoid(pos)) + mean(-log(1 - sigmoid(neg))) on raw scores.

    Uses -log sigmoid(s) = softplus(-s) and -log(1 - sigmoid(s)) = softplus(s).
    """
    if pos_scores.data.size == 0 or neg_scores.data.size == 0:
        raise ContractError("bce_edge_loss needs nonempty positive and negative score sets")
    return add(reduce(softplus(scale(pos_scores, -1.0)), "mean"), reduce(softplus(neg_scores), "mean"))


def mse_feature_loss(pred: Tensor, target: Tensor, coords: np.ndarray | None = None) -> Tensor:
    """Mean squared error over the coordinate set ``coords`` (boolean mask; default: all entries)."""
    if pred.shape != target.shape:
        raise DimensionError(f"mse: shapes {pred.shape} and {target.shape} differ")
    diff = sub(pred, target)
    sq = mul(diff, diff)
    if coords is None:
        if sq.data.size == 0:
            raise ContractError("mse over an empty coordinate set")
        return reduce(sq, "mean")
    mask = np.asarray(coords, dtype=bool)
    if mask.shape != pred.shape:
        raise DimensionError(f"coordinate mask {mask.shape} does not match {pred.shape}")
    count = int(mask.sum())
    if count == 0:
        raise ContractError("mse over an empty coordinate set")
    return scale(reduce(mul(sq, Tensor(mask.astype(np.float64))), "sum"), 1.0 / count)


def sce_loss(pred: Tensor, target: Tensor, gamma: float = 2.0) -> Tensor:
    """Scaled cosine error: mean over rows of (1 - cos(pred_i, target_i)) ** gamma."""
    if pred.shape != target.shape:
        raise DimensionError(f"sce: shapes {pred.shape} and {target.shape} differ")
    if pred.rows == 0:
        raise ContractError("sce over zero rows")
    gap = shift(scale(rowwise_cosine(pred, target), -1.0), 1.0)
    gap.data = np.maximum(gap.data, 0.0)  # clamp rounding below zero; values only, not the graph
    return reduce(power(gap, gamma), "mean")


def _directional_nce(a: Tensor, b: Tensor, temperature: float) -> Tensor:
    sims = scale(matmul(a, transpose(b)), 1.0 / temperature)
    positives = scale(rowwise_dot(a, b), 1.0 / temperature)
    return reduce(sub(logsumexp_rows(sims), positives), "mean")


def _check_batch(left: Tensor, right: Tensor, name: str) -> None:
    if left.shape != right.shape:
        raise DimensionError(f"{name}: shapes {left.shape} and {right.shape} differ")
    if left.rows < 2:
        raise ContractError(f"{name} needs at least 2 pairs for in-batch negatives, got {left.rows}")


def info_nce(left: Tensor, right: Tensor, temperature: float = 0.5) -> Tensor:
    """Symmetric in-batch InfoNCE with cosine similarity / temperature."""
    _check_batch(left, right, "info_nce")
    lu, ru = normalize_rows(left), normalize_rows(right)
    return scale(add(_directional_nce(lu, ru, temperature), _directional_nce(ru, lu, temperature)), 0.5)


def simcse(left: Tensor, right: Tensor, temperature: float = 0.5) -> Tensor:
    """One-directional (left -> right) in-batch InfoNCE with cosine similarity / temperature."""
    _check_batch(left, right, "simcse")
    return _directional_nce(normalize_rows(left), normalize_rows(right), temperature)


# --------------------------------------------------------------------------- negative sampling


def _draw_pairs(rng, n: int, count: int, probs=None) -> np.ndarray:
    u = rng.choice(n, size=count, p=probs)
    v = rng.choice(n, size=count, p=probs)
    bad = u == v
    while bad.any():
        k = int(bad.sum())
        u[bad] = rng.choice(n, size=k, p=probs)
        v[bad] = rng.choice(n, size=k, p=probs)
        bad = u == v
    return np.stack([u, v], axis=1)


def negative_sample(
    g: Graph,
    count: int,
    strategy: str,
    rng: np.random.Generator,
    embeddings: np.ndarray | None = None,
) -> np.ndarray:
    """Draw ``count`` ordered node pairs (never self-pairs) to serve as negatives.

    Sampling is approximate: a pair may coincide with a true edge.
    ``degree`` draws each endpoint proportionally to node degree; ``similarity``
    keeps uniform candidates with probability (1 - cos(z_u, z_v)) / 2 and tops up
    with uniform pairs after 10 * count candidates.
    """
    if count < 1:
        raise ContractError("negative_sample needs count >= 1")
    if g.n < 2:
        raise ContractError("negative sampling needs at least two nodes")
    if strategy == "uniform":
        return _draw_pairs(rng, g.n, count)
    if strategy == "degree":
        deg = g.degrees.astype(np.float64)
        if np.count_nonzero(deg) < 2:
            return _draw_pairs(rng, g.n, count)
        return _draw_pairs(rng, g.n, count, deg / deg.sum())
    if strategy == "similarity":
        if embeddings is None:
            raise ContractError("similarity sampling needs node embeddings")
        z = np.asarray(embeddings, dtype=np.float64)
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        unit = np.where(norms > 0, z / np.where(norms > 0, norms, 1.0), 0.0)
        kept: list[np.ndarray] = []
        have, budget = 0, 10 * count
        while have < count and budget > 0:
            size = min(budget, count - have)
            cand = _draw_pairs(rng, g.n, size)
            budget -= size
            cos = (unit[cand[:, 0]] * unit[cand[:, 1]]).sum(axis=1)
            keep = rng.random(size) < (1.0 - cos) / 2.0
            kept.append(cand[keep])
            have += int(keep.sum())
        if have < count:
            kept.append(_draw_pairs(rng, g.n, count - have))
        return np.concatenate(kept, axis=0)[:count]
    raise ConfigError(f"unknown strategy {strategy!r}", "neg_sampler.strategy")
