import numpy as np
import pytest

from lrgae.augment import no_augment
from lrgae.errors import ConfigError, DimensionError
from lrgae.graph import Graph, attention_edges, gcn_normalize_edges, mean_adjacency
from lrgae.nn import (
    DecoderConfig,
    EncoderConfig,
    decode_edge,
    decode_feature,
    encode,
    gat_layer,
    gcn_layer,
    init_decoder,
    init_encoder,
    sage_layer,
)
from lrgae.tensor import SparseMatrix, Tensor, gradcheck, mul, reduce


def T(x):
    return Tensor(np.asarray(x, dtype=np.float64))


def path3():
    return Graph.from_edges(3, [(0, 1), (1, 2)], np.arange(6.0).reshape(3, 2))


# --------------------------------------------------------------------------- gcn / sage


def test_gcn_layer_examples():
    h = T([[1.0, -2.0], [3.0, 4.0]])
    assert np.array_equal(gcn_layer(SparseMatrix.identity(2), h, T(np.eye(2))).data, h.data)
    half = SparseMatrix.from_coo([0, 0, 1, 1], [0, 1, 0, 1], [0.5] * 4, (2, 2))
    assert np.array_equal(gcn_layer(half, T([[1.0], [3.0]]), T([[1.0]])).data, [[2.0], [2.0]])
    out = gcn_layer(SparseMatrix.identity(2), T([[-1.0], [2.0]]), T([[1.0]]), "relu")
    assert np.array_equal(out.data, [[0.0], [2.0]])
    with pytest.raises(DimensionError):
        gcn_layer(SparseMatrix.identity(2), h, T(np.eye(3)))


def test_sage_layer_examples():
    h = T([[2.0], [4.0]])
    isolated = mean_adjacency(2, np.zeros((0, 2), dtype=np.int64))
    assert np.array_equal(sage_layer(isolated, h, T([[1.0]]), T([[5.0]])).data, h.data)
    clique = mean_adjacency(2, np.array([[0, 1]]))
    assert np.array_equal(sage_layer(clique, h, T([[0.0]]), T([[1.0]])).data, [[4.0], [2.0]])
    assert np.array_equal(sage_layer(clique, h, T([[0.0]]), T([[0.0]])).data, [[0.0], [0.0]])


@pytest.mark.parametrize("seed", range(10))
def test_gcn_and_sage_are_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.5]
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    perm = rng.permutation(n)
    inv = np.argsort(perm)  # new id of old node i is inv[i]
    pedges = inv[edges] if len(edges) else edges
    h = rng.standard_normal((n, 3))
    w, w2 = T(rng.standard_normal((3, 2))), T(rng.standard_normal((3, 2)))
    out = gcn_layer(gcn_normalize_edges(n, edges), T(h), w, "relu").data
    pout = gcn_layer(gcn_normalize_edges(n, pedges), T(h[perm]), w, "relu").data
    assert np.allclose(pout, out[perm], atol=1e-12)
    out = sage_layer(mean_adjacency(n, edges), T(h), w, w2).data
    pout = sage_layer(mean_adjacency(n, pedges), T(h[perm]), w, w2).data
    assert np.allclose(pout, out[perm], atol=1e-12)


# --------------------------------------------------------------------------- gat


def test_gat_self_loop_only_node():
    edges = attention_edges(1, np.zeros((0, 2), dtype=np.int64))
    h, w = T([[1.0, -2.0]]), T([[1.0, 0.5], [2.0, 1.0]])
    out, (alpha,) = gat_layer(edges, h, [(w, T([[0.3], [0.1]]), T([[-0.2], [0.4]]))], "relu", return_attention=True)
    assert alpha.data.tolist() == [[1.0]]
    assert np.array_equal(out.data, np.maximum(h.data @ w.data, 0))


def test_gat_identical_neighbours_get_uniform_attention():
    g = Graph.from_edges(4, [(0, 1), (0, 2), (0, 3)], np.ones((4, 2)))
    edges = attention_edges(4, g.edges)
    rng = np.random.default_rng(0)
    head = (T(rng.standard_normal((2, 3))), T(rng.standard_normal((3, 1))), T(rng.standard_normal((3, 1))))
    _, (alpha,) = gat_layer(edges, g.x, [head], return_attention=True)
    dst = edges[0]
    assert np.allclose(alpha.data[dst == 0, 0], 0.25, atol=1e-15)


def test_gat_attention_matches_formula_on_path():
    g = path3()
    dst, src = attention_edges(3, g.edges)
    w = T([[1.0, 0.0], [0.5, -1.0]])
    a_self, a_neigh = T([[0.2], [-0.3]]), T([[0.7], [0.1]])
    _, (alpha,) = gat_layer((dst, src), g.x, [(w, a_self, a_neigh)], return_attention=True)
    wh = g.features @ w.data
    a = np.concatenate([a_self.data, a_neigh.data])[:, 0]
    for k, (u, v) in enumerate(zip(dst, src)):
        nbrs = src[dst == u]
        e = np.array([np.concatenate([wh[u], wh[j]]) @ a for j in nbrs])
        e = np.where(e > 0, e, 0.2 * e)
        expected = np.exp(e[list(nbrs).index(v)]) / np.exp(e).sum()
        assert alpha.data[k, 0] == pytest.approx(expected, abs=1e-12)


def test_gat_rows_sum_to_one():
    rng = np.random.default_rng(3)
    n = 12
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.3]
    dst, src = attention_edges(n, np.array(pairs))
    heads = [(T(rng.standard_normal((4, 3))), T(rng.standard_normal((3, 1))), T(rng.standard_normal((3, 1)))) for _ in range(2)]
    out, alphas = gat_layer((dst, src), T(rng.standard_normal((n, 4))), heads, return_attention=True)
    assert out.shape == (n, 6)
    for alpha in alphas:
        sums = np.bincount(dst, weights=alpha.data[:, 0], minlength=n)
        assert np.max(np.abs(sums - 1.0)) <= 1e-12


# --------------------------------------------------------------------------- encode


def test_encode_one_gcn_layer_with_identity_weights():
    g = path3()
    cfg = EncoderConfig(input_dim=2, num_layers=1, hidden_dim=2, activation="none")
    params = {"enc.0.W": T(np.eye(2))}
    stack = encode(no_augment(g), cfg, params)
    assert len(stack) == 2
    assert np.array_equal(stack[0].data, g.features)
    assert np.allclose(stack[1].data, g.normalized_adj.to_dense() @ g.features, atol=1e-12)


@pytest.mark.parametrize("arch", ["gcn", "sage", "gat"])
def test_encode_stack_and_eval_purity(arch):
    g = path3()
    cfg = EncoderConfig(input_dim=2, arch=arch, num_layers=2, hidden_dim=4, gat_heads=2 if arch == "gat" else 1)
    params = init_encoder(cfg, np.random.default_rng(0))
    a = encode(no_augment(g), cfg, params)
    b = encode(no_augment(g), cfg, params)
    assert len(a) == 3
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a.layers, b.layers))
    with pytest.raises(IndexError):
        a[3]


def test_encode_dropout_only_in_training():
    g = path3()
    cfg = EncoderConfig(input_dim=2, num_layers=2, hidden_dim=8, keep_prob=0.5)
    params = init_encoder(cfg, np.random.default_rng(0))
    eval_out = encode(no_augment(g), cfg, params)[2].data
    train_out = encode(no_augment(g), cfg, params, training=True, rng=np.random.default_rng(1))[2].data
    assert not np.array_equal(eval_out, train_out)


def test_encoder_config_validation():
    with pytest.raises(ConfigError, match="encoder.keep_prob"):
        EncoderConfig(input_dim=2, keep_prob=0.0)
    with pytest.raises(ConfigError, match="encoder.arch"):
        EncoderConfig(input_dim=2, arch="gin")


# --------------------------------------------------------------------------- decoders


def test_decode_edge_examples():
    assert decode_edge("dot", T([[1.0, 0.0]]), T([[1.0, 0.0]])).item() == 1.0
    assert decode_edge("dot", T([[1.0, 2.0]]), T([[3.0, 4.0]])).item() == 11.0
    params = init_decoder(DecoderConfig("mlp_edge", (4,)), 2, 2, np.random.default_rng(0))
    for k, p in params.items():
        p.data = np.zeros_like(p.data)
    params["dec.1.b"].data[:] = 0.75
    out = decode_edge("mlp_edge", T(np.ones((3, 2))), T(np.ones((3, 2))), params)
    assert np.array_equal(out.data, np.full((3, 1), 0.75))
    with pytest.raises(DimensionError):
        decode_edge("dot", T(np.ones((2, 2))), T(np.ones((3, 2))))


def test_decode_feature_examples():
    z = T([[1.0, -2.0], [0.5, 3.0]])
    params = init_decoder(DecoderConfig("mlp_feature"), 2, 2, np.random.default_rng(0))
    params["dec.0.W"].data = np.eye(2)
    assert np.array_equal(decode_feature(z, params).data, z.data)
    params["dec.0.W"].data = np.zeros((2, 2))
    params["dec.0.b"].data = np.array([[4.0, -1.0]])
    assert np.array_equal(decode_feature(z, params).data, [[4.0, -1.0], [4.0, -1.0]])
    w = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, -1.0]])
    params = init_decoder(DecoderConfig("mlp_feature", output_dim=3), 2, 3, np.random.default_rng(0))
    params["dec.0.W"].data = w
    assert np.allclose(decode_feature(z, params).data, z.data @ w, atol=0)
    with pytest.raises(DimensionError):
        decode_feature(T(np.ones((2, 5))), params)


def test_layer_gradients_spot_check():
    rng = np.random.default_rng(0)
    g = path3()
    cfg = EncoderConfig(input_dim=2, arch="gat", num_layers=2, hidden_dim=4, gat_heads=2, keep_prob=1.0)
    params = init_encoder(cfg, rng)
    weights = T(rng.standard_normal((3, 4)))
    err = gradcheck(lambda: reduce(mul(encode(no_augment(g), cfg, params)[2], weights), "sum"), list(params.values()))
    assert err < 1e-4
