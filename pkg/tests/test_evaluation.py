import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrgae.errors import ContractError
from lrgae.evaluation import kmeans, link_metrics, linear_probe, nmi
from lrgae.graph import NodeSplit


def brute_auc(pos, neg):
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def brute_ap(pos, neg):
    everything = list(pos) + list(neg)
    precisions = []
    for s in pos:
        above = [x for x in everything if x >= s]
        hits = [x for x in pos if x >= s]
        precisions.append(len(hits) / len(above))
    return math.fsum(precisions) / len(pos)


def entropy_nmi(a, b):
    a, b = list(a), list(b)
    n = len(a)
    pa = {x: a.count(x) / n for x in set(a)}
    pb = {x: b.count(x) / n for x in set(b)}
    ha = -sum(p * math.log(p) for p in pa.values())
    hb = -sum(p * math.log(p) for p in pb.values())
    if ha == 0 or hb == 0:
        return 1.0 if ha == hb == 0 else 0.0
    joint = {}
    for x, y in zip(a, b):
        joint[(x, y)] = joint.get((x, y), 0) + 1 / n
    mi = sum(p * math.log(p / (pa[x] * pb[y])) for (x, y), p in joint.items())
    return 2 * mi / (ha + hb)


# --------------------------------------------------------------------------- link metrics


def test_link_metric_examples():
    assert link_metrics([0.9, 0.8], [0.1]) == (1.0, 1.0)
    assert link_metrics([0.5], [0.5])[0] == 0.5
    auc, ap = link_metrics([0.9, 0.3], [0.5])
    assert auc == 0.5
    assert ap == pytest.approx((1 + 2 / 3) / 2, abs=1e-15)
    with pytest.raises(ContractError):
        link_metrics([], [0.1])


@settings(max_examples=200, deadline=None)
@given(
    pos=st.lists(st.integers(0, 6).map(lambda k: k / 4), min_size=1, max_size=30),
    neg=st.lists(st.integers(0, 6).map(lambda k: k / 4), min_size=1, max_size=30),
)
def test_link_metrics_match_brute_force_with_ties(pos, neg):
    auc, ap = link_metrics(pos, neg)
    assert auc == brute_auc(pos, neg)
    assert ap == brute_ap(pos, neg)


# --------------------------------------------------------------------------- nmi


def test_nmi_examples():
    assert nmi([0, 0, 1, 1, 2], [0, 0, 1, 1, 2]) == 1.0
    assert nmi([0, 0, 0, 0], [0, 1, 0, 1]) == 0.0
    assert nmi([0, 0, 1, 1], [0, 1, 1, 1]) == pytest.approx(0.3437, abs=5e-5)
    assert nmi([3, 3], [1, 1]) == 1.0
    with pytest.raises(ContractError):
        nmi([0, 1], [0])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 50).flatmap(lambda n: st.tuples(st.lists(st.integers(0, 4), min_size=n, max_size=n), st.lists(st.integers(0, 4), min_size=n, max_size=n))))
def test_nmi_matches_formula_symmetric_and_label_invariant(pair):
    a, b = pair
    value = nmi(a, b)
    assert abs(value - entropy_nmi(a, b)) <= 1e-12
    assert value == pytest.approx(nmi(b, a), abs=1e-15)
    relabel = {k: 10 - k for k in range(5)}
    assert abs(nmi([relabel[x] for x in a], b) - value) <= 1e-12


# --------------------------------------------------------------------------- kmeans


def test_kmeans_examples():
    pts = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
    one = kmeans(pts, 1, restarts=2, rng=np.random.default_rng(0))
    assert np.all(one.labels == 0)
    assert np.allclose(one.centers[0], pts.mean(axis=0))
    two = kmeans(pts, 2, restarts=3, rng=np.random.default_rng(0))
    assert two.labels[0] == two.labels[1] != two.labels[2] == two.labels[3]
    full = kmeans(pts, 4, rng=np.random.default_rng(0))
    assert len(set(full.labels.tolist())) == 4 and full.inertia == 0.0
    with pytest.raises(ContractError):
        kmeans(pts, 5)


def brute_best_inertia(x, k):
    best = np.inf
    for labels in itertools.product(range(k), repeat=len(x)):
        labels = np.array(labels)
        if len(set(labels.tolist())) != k:
            continue
        inertia = sum(((x[labels == c] - x[labels == c].mean(axis=0)) ** 2).sum() for c in range(k))
        best = min(best, inertia)
    return best


@pytest.mark.parametrize("seed", range(8))
def test_kmeans_reaches_brute_force_optimum_on_small_sets(seed):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.normal(0, 0.3, (4, 2)), rng.normal(3, 0.3, (4, 2))])
    result = kmeans(x, 2, restarts=5, rng=np.random.default_rng(seed))
    assert result.inertia == pytest.approx(brute_best_inertia(x, 2), rel=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_kmeans_inertia_monotone_and_fixed_point(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((60, 3))
    result = kmeans(x, 4, restarts=1, rng=np.random.default_rng(seed))
    hist = np.array(result.history)
    assert np.all(np.diff(hist) <= 1e-9)
    d = ((x[:, None, :] - result.centers[None]) ** 2).sum(axis=2)
    assert np.array_equal(np.argmin(d, axis=1), result.labels)


def test_kmeans_is_deterministic_per_rng():
    x = np.random.default_rng(1).standard_normal((30, 2))
    a = kmeans(x, 3, rng=np.random.default_rng(7))
    b = kmeans(x, 3, rng=np.random.default_rng(7))
    assert np.array_equal(a.labels, b.labels)


# --------------------------------------------------------------------------- linear probe


def split_of(n, seed=0):
    perm = np.random.default_rng(seed).permutation(n)
    a, b = int(0.6 * n), int(0.8 * n)
    return NodeSplit(np.sort(perm[:a]), np.sort(perm[a:b]), np.sort(perm[b:]))


def test_probe_separable_one_dimensional():
    labels = np.repeat([0, 1], 50)
    z = np.where(labels == 0, -1.0, 1.0)[:, None]
    assert linear_probe(z, labels, split_of(100)) == 1.0


def test_probe_one_hot_features():
    labels = np.random.default_rng(0).integers(0, 4, 120)
    assert linear_probe(np.eye(4)[labels], labels, split_of(120)) == 1.0


def test_probe_random_labels_are_near_chance():
    rng = np.random.default_rng(3)
    n = 2000
    labels = rng.permutation(np.repeat([0, 1], n // 2))
    z = rng.standard_normal((n, 8))
    assert abs(linear_probe(z, labels, split_of(n)) - 0.5) <= 0.1


def test_probe_single_class_training_set():
    labels = np.array([0] * 6 + [1] * 4)
    split = NodeSplit(np.arange(5), np.array([5, 6]), np.array([7, 8, 9]))
    with pytest.raises(ContractError):
        linear_probe(np.ones((10, 2)), labels, split)
