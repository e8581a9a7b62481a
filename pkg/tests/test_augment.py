import itertools

import numpy as np
import pytest

from lrgae.augment import AugmentSpec, augment, edge_mask, feature_mask, node_mask, no_augment, path_mask
from lrgae.errors import ContractError, DimensionError
from lrgae.graph import Graph, gcn_normalize_edges
from lrgae.tensor import Tensor


def random_graph(n, m, seed=0, d=3):
    rng = np.random.default_rng(seed)
    pairs = list(itertools.combinations(range(n), 2))
    idx = rng.choice(len(pairs), size=min(m, len(pairs)), replace=False)
    return Graph.from_edges(n, [pairs[i] for i in idx], rng.standard_normal((n, d)))


def as_set(edges):
    return set(map(tuple, np.asarray(edges).tolist()))


def star(leaves):
    return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)], np.ones((leaves + 1, 1)))


def assert_partition(view, g):
    vis, hid = as_set(view.visible_edges), as_set(view.masked_edges)
    assert not vis & hid
    assert vis | hid == as_set(g.edges)


# --------------------------------------------------------------------------- edge_mask


def test_edge_mask_extremes():
    g = random_graph(12, 30)
    v0 = edge_mask(g, 0.0, np.random.default_rng(0))
    assert len(v0.masked_edges) == 0 and np.array_equal(v0.visible_edges, g.edges)
    v1 = edge_mask(g, 1.0, np.random.default_rng(0))
    assert len(v1.visible_edges) == 0 and np.array_equal(v1.masked_edges, g.edges)


def test_edge_mask_binomial_bounds():
    g = random_graph(60, 1000, seed=2)
    assert g.num_edges == 1000
    inside = [440 <= len(edge_mask(g, 0.5, np.random.default_rng(s)).masked_edges) <= 560 for s in range(200)]
    assert np.mean(inside) >= 0.99


# --------------------------------------------------------------------------- path_mask


def test_path_mask_single_step_on_star_hides_the_walked_edge():
    g = star(6)
    for seed in range(10):
        view = path_mask(g, 1 / g.n, 1, np.random.default_rng(seed))
        replay = np.random.default_rng(seed)
        root = int(replay.choice(g.n, size=1, replace=False)[0])
        if root == 0:
            leaf = 1 + int(replay.integers(6))
            expected = {(0, leaf)}
        else:
            expected = {(0, root)}
        assert as_set(view.masked_edges) == expected


def test_path_mask_covering_walks_hide_something():
    g = random_graph(8, 14, seed=4)
    view = path_mask(g, 1.0, g.num_edges, np.random.default_rng(0))
    assert len(view.masked_edges) > 0
    assert_partition(view, g)


def test_path_mask_isolated_root_masks_nothing():
    g = Graph.from_edges(3, [(1, 2)], np.ones((3, 1)))
    for seed in range(20):
        rng = np.random.default_rng(seed)
        view = path_mask(g, 1 / 3, 2, rng)
        if int(np.random.default_rng(seed).choice(3, size=1, replace=False)[0]) == 0:
            assert len(view.masked_edges) == 0


def test_path_mask_needs_positive_fraction():
    with pytest.raises(ContractError):
        AugmentSpec("path_mask", 0.0)


# --------------------------------------------------------------------------- node_mask


def test_node_mask_extremes_and_features_untouched():
    g = random_graph(10, 20)
    v0 = node_mask(g, 0.0, np.random.default_rng(0))
    assert len(v0.masked_edges) == 0
    v1 = node_mask(g, 1.0, np.random.default_rng(0))
    assert len(v1.visible_edges) == 0
    assert v1.features is g.x


def test_node_mask_hides_incident_edges_of_selected_node():
    g = Graph.from_edges(5, [(0, 1), (0, 2), (0, 3), (3, 4)], np.ones((5, 1)))
    for seed in range(200):
        view = node_mask(g, 0.3, np.random.default_rng(seed))
        if view.dropped_nodes.tolist() == [0]:
            assert as_set(view.masked_edges) == {(0, 1), (0, 2), (0, 3)}
            return
    pytest.fail("no seed dropped exactly node 0")


# --------------------------------------------------------------------------- feature_mask


def test_feature_mask_extremes():
    g = random_graph(6, 8)
    token = Tensor(np.zeros((1, 3)))
    v0 = feature_mask(g, 0.0, token, np.random.default_rng(0))
    assert len(v0.masked_nodes) == 0 and np.array_equal(v0.features.data, g.features)
    v1 = feature_mask(g, 1.0, token, np.random.default_rng(0))
    assert np.array_equal(v1.features.data, np.zeros_like(g.features))
    assert np.array_equal(v1.visible_edges, g.edges)


def test_feature_mask_binomial_bounds():
    g = Graph.from_edges(1000, [], np.ones((1000, 2)))
    token = Tensor(np.zeros((1, 2)))
    sizes = [len(feature_mask(g, 0.3, token, np.random.default_rng(s)).masked_nodes) for s in range(200)]
    assert np.mean([255 <= k <= 345 for k in sizes]) >= 0.99


def test_feature_mask_keeps_unmasked_rows_exactly():
    g = random_graph(20, 30, d=5)
    token = Tensor(np.full((1, 5), 7.0))
    view = feature_mask(g, 0.4, token, np.random.default_rng(3))
    keep = np.setdiff1d(np.arange(20), view.masked_nodes)
    assert np.array_equal(view.features.data[keep], g.features[keep])
    assert np.all(view.features.data[view.masked_nodes] == 7.0)


def test_feature_mask_token_width_checked():
    g = random_graph(4, 3)
    with pytest.raises(DimensionError):
        feature_mask(g, 0.5, Tensor(np.zeros((1, 2))), np.random.default_rng(0))


# --------------------------------------------------------------------------- shared properties


@pytest.mark.parametrize("kind,ratio", [("edge_mask", 0.4), ("path_mask", 0.5), ("node_mask", 0.3)])
def test_structure_views_partition_and_are_deterministic(kind, ratio):
    spec = AugmentSpec(kind, ratio)
    for seed in range(15):
        g = random_graph(8, 12, seed=seed)
        a = augment(g, spec, np.random.default_rng(seed))
        b = augment(g, spec, np.random.default_rng(seed))
        assert_partition(a, g)
        assert np.array_equal(a.masked_edges, b.masked_edges)
        expected = gcn_normalize_edges(g.n, a.visible_edges).to_dense()
        assert np.array_equal(a.normalized_adj.to_dense(), expected)


def test_no_augment_aliases_the_graph():
    g = random_graph(5, 6)
    view = no_augment(g)
    assert view.features is g.x
    assert view.normalized_adj is g.normalized_adj


def test_augment_spec_validation():
    with pytest.raises(ContractError):
        AugmentSpec("edge_mask", 1.5)
    with pytest.raises(ContractError):
        AugmentSpec("blur", 0.1)
    with pytest.raises(ContractError):
        AugmentSpec("path_mask", 0.5, walk_len=0)
