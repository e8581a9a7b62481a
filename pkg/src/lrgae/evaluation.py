"""Downstream protocols: linear probe accuracy, link AUC/AP, k-means + NMI."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError
from .graph import NodeSplit


@dataclass(frozen=True)
class Metric:
    name: str
    value: float
    std: float | None = None


@dataclass(frozen=True)
class ProbeConfig:
    epochs: int = 100
    learning_rate: float = 0.01
    weight_decay: float = 1e-4
    standardize: bool = True


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def linear_probe(z, labels, split: NodeSplit, cfg: ProbeConfig = ProbeConfig()) -> float:
    """Test accuracy of a softmax regression fit on frozen embeddings.

    Full-batch Adam on the training nodes; the weights with the best
    validation accuracy (earliest on ties) are used for the test set. Columns
    are standardised with training-node statistics when ``cfg.standardize``.
    """
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    train_y = labels[split.train]
    if len(np.unique(train_y)) < 2:
        raise ContractError("linear probe needs at least two classes among training nodes")
    if cfg.standardize:
        mu = z[split.train].mean(axis=0)
        sd = z[split.train].std(axis=0)
        z = (z - mu) / np.where(sd > 0, sd, 1.0)
    k = int(labels.max()) + 1
    x = np.hstack([z, np.ones((len(z), 1))])
    onehot = np.eye(k)[train_y]
    w = np.zeros((x.shape[1], k))
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    b1, b2, eps = 0.9, 0.999, 1e-8
    xt = x[split.train]
    best_val, best_w = -1.0, w.copy()
    for t in range(1, cfg.epochs + 1):
        probs = _softmax(xt @ w)
        grad = xt.T @ (probs - onehot) / len(xt) + cfg.weight_decay * w
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        w = w - cfg.learning_rate * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        val_acc = float(np.mean(np.argmax(x[split.val] @ w, axis=1) == labels[split.val]))
        if val_acc > best_val:
            best_val, best_w = val_acc, w.copy()
    return float(np.mean(np.argmax(x[split.test] @ best_w, axis=1) == labels[split.test]))


def link_metrics(pos_scores, neg_scores) -> tuple[float, float]:
    """(AUC, AP) for positive and negative pair scores.

    AUC counts ties as one half. AP averages, over positives, the precision
    among all items scoring at least as high as that positive.
    """
    pos = np.asarray(pos_scores, dtype=np.float64).reshape(-1)
    neg = np.asarray(neg_scores, dtype=np.float64).reshape(-1)
    if len(pos) == 0 or len(neg) == 0:
        raise ContractError("link_metrics needs nonempty positive and negative scores")
    p, q = len(pos), len(neg)
    scores = np.concatenate([pos, neg])
    ranks = rankdata(scores)  # average ranks, ascending
    auc = (ranks[:p].sum() - p * (p + 1) / 2.0) / (p * q)

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    is_pos = order < p
    tp = np.cumsum(is_pos)
    seen = np.arange(1, len(scores) + 1)
    # within a tie group every member sees the whole group
    last_of_group = np.searchsorted(-sorted_scores, -sorted_scores, side="right") - 1
    precision = tp[last_of_group] / seen[last_of_group]
    ap = math.fsum(precision[is_pos].tolist()) / p
    return float(auc), float(ap)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = int(rng.integers(n)) if total <= 0 else int(rng.choice(n, p=d2 / total))
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (x * x).sum(axis=1)[:, None] - 2 * x @ centers.T + (centers * centers).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    history: list[float]


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int) -> KMeansResult:
    k = len(centers)
    history = []
    labels = np.argmin(_sq_dists(x, centers), axis=1)
    for _ in range(max_iter):
        d = _sq_dists(x, centers)
        history.append(float(d[np.arange(len(x)), labels].sum()))
        new_centers = np.empty_like(centers)
        dist_now = d[np.arange(len(x)), labels]
        for c in range(k):
            members = labels == c
            if members.any():
                new_centers[c] = x[members].mean(axis=0)
            else:
                far = int(np.argmax(dist_now))
                new_centers[c] = x[far]
                dist_now[far] = -1.0
        centers = new_centers
        d = _sq_dists(x, centers)
        new_labels = np.argmin(d, axis=1)
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    inertia = float(_sq_dists(x, centers)[np.arange(len(x)), labels].sum())
    history.append(inertia)
    return KMeansResult(labels, centers, inertia, history)


def kmeans(z, k: int, restarts: int = 10, rng: np.random.Generator | None = None, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeds, best inertia over ``restarts`` runs."""
    x = np.asarray(z, dtype=np.float64)
    if k < 1 or k > len(x):
        raise ContractError(f"kmeans needs 1 <= k <= n, got k={k}, n={len(x)}")
    rng = rng if rng is not None else np.random.default_rng(0)
    best = None
    for _ in range(max(1, restarts)):
        result = _lloyd(x, _kmeans_pp(x, k, rng), max_iter)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def nmi(pred, truth) -> float:
    """2 I(pred; truth) / (H(pred) + H(truth)) with natural-log entropies."""
    a = np.asarray(pred).reshape(-1)
    b = np.asarray(truth).reshape(-1)
    if len(a) != len(b):
        raise ContractError(f"nmi: labelings have lengths {len(a)} and {len(b)}")
    if len(a) == 0:
        raise ContractError("nmi of empty labelings")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    n = len(a)
    joint = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(joint, (ai, bi), 1.0)
    ha = _entropy(joint.sum(axis=1) / n)
    hb = _entropy(joint.sum(axis=0) / n)
    if ha == 0.0 or hb == 0.0:
        return 1.0 if ha == 0.0 and hb == 0.0 else 0.0
    # I = H(a) + H(b) - H(a, b); exactly summed entropies make identical
    # partitions score exactly 1 and keep the measure exactly symmetric
    mi = ha + hb - _entropy(joint.ravel() / n)
    return float(min(1.0, max(0.0, 2.0 * mi / (ha + hb))))


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return -math.fsum((p * np.log(p)).tolist())


def clustering_nmi(z, labels, k: int, restarts: int = 10, seed: int = 0) -> float:
    result = kmeans(z, k, restarts, np.random.default_rng(seed))
    return nmi(result.labels, labels)
