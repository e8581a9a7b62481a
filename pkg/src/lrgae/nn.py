"""GNN encoders that expose every layer, and the edge/feature decoders."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import GraphView
from .errors import ConfigError, DimensionError
from .tensor import (
    SparseMatrix,
    Tensor,
    add,
    add_bias,
    concat_cols,
    dropout,
    gather_rows,
    leaky_relu,
    matmul,
    relu,
    rowwise_dot,
    scale_rows,
    scatter_rows,
    segment_softmax,
    spmm,
)

ENCODER_ARCHS = ("gcn", "sage", "gat")
DECODER_KINDS = ("dot", "identity", "mlp_edge", "mlp_feature")

Params = dict[str, Tensor]


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    arch: str = "gcn"
    num_layers: int = 2
    hidden_dim: int = 256
    activation: str = "relu"
    keep_prob: float = 0.8
    gat_heads: int = 1

    def __post_init__(self):
        if self.arch not in ENCODER_ARCHS:
            raise ConfigError(f"unknown encoder {self.arch!r}", "encoder.arch")
        if self.num_layers < 1:
            raise ConfigError("must be >= 1", "encoder.num_layers")
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ConfigError("dimensions must be >= 1", "encoder.hidden_dim")
        if self.activation not in ("relu", "none"):
            raise ConfigError(f"unknown activation {self.activation!r}", "encoder.activation")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ConfigError("must lie in (0, 1]", "encoder.keep_prob")
        if self.arch == "gat" and (self.gat_heads < 1 or self.hidden_dim % self.gat_heads):
            raise ConfigError("hidden_dim must be a positive multiple of gat_heads", "encoder.gat_heads")

    def layer_dim(self, i: int) -> int:
        """Width of H^(i); H^(0) is the input feature matrix."""
        return self.input_dim if i == 0 else self.hidden_dim


@dataclass(frozen=True)
class DecoderConfig:
    kind: str = "dot"
    hidden_dims: tuple[int, ...] | None = None
    output_dim: int | None = None

    def __post_init__(self):
        if self.kind not in DECODER_KINDS:
            raise ConfigError(f"unknown decoder {self.kind!r}", "decoder.kind")
        if self.hidden_dims is not None:
            object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))

    @property
    def is_edge(self) -> bool:
        return self.kind in ("dot", "mlp_edge")

    @property
    def has_params(self) -> bool:
        return self.kind.startswith("mlp")

    def resolved_hidden(self) -> tuple[int, ...]:
        if self.hidden_dims is not None:
            return self.hidden_dims
        return (64,) if self.kind == "mlp_edge" else ()


@dataclass
class EmbeddingStack:
    layers: list[Tensor]

    def __len__(self) -> int:
        return len(self.layers)

    def __getitem__(self, i: int) -> Tensor:
        if not 0 <= i < len(self.layers):
            raise IndexError(f"layer {i} outside [0, {len(self.layers) - 1}]")
        return self.layers[i]


def glorot(fan_in: int, fan_out: int, rng: np.random.Generator, name: str) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True, name=name)


def zeros(shape, name: str) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def _activate(h: Tensor, act: str) -> Tensor:
    return relu(h) if act == "relu" else h


# --------------------------------------------------------------------------- layers


def gcn_layer(adj: SparseMatrix, h: Tensor, w: Tensor, act: str = "none") -> Tensor:
    return _activate(spmm(adj, matmul(h, w)), act)


def sage_layer(mean_adj: SparseMatrix, h: Tensor, w_self: Tensor, w_neigh: Tensor, act: str = "none") -> Tensor:
    """Mean-aggregator GraphSAGE: act(H W_self + mean_{neighbours}(H) W_neigh)."""
    return _activate(add(matmul(h, w_self), matmul(spmm(mean_adj, h), w_neigh)), act)


def gat_head(
    edges: tuple[np.ndarray, np.ndarray],
    h: Tensor,
    w: Tensor,
    a_self: Tensor,
    a_neigh: Tensor,
    slope: float = 0.2,
) -> tuple[Tensor, Tensor]:
    """One attention head. Returns (aggregated rows, attention per (receiver, sender) edge).

    The score of edge (u <- v) is leakyrelu(a_self . W h_u + a_neigh . W h_v),
    i.e. the attention vector applied to [W h_u || W h_v].
    """
    dst, src = edges
    n = h.rows
    wh = matmul(h, w)
    score = add(gather_rows(matmul(wh, a_self), dst), gather_rows(matmul(wh, a_neigh), src))
    alpha = segment_softmax(leaky_relu(score, slope), dst, n)
    out = scatter_rows(scale_rows(gather_rows(wh, src), alpha), dst, n)
    return out, alpha


def gat_layer(
    edges: tuple[np.ndarray, np.ndarray],
    h: Tensor,
    heads: list[tuple[Tensor, Tensor, Tensor]],
    act: str = "none",
    return_attention: bool = False,
):
    """Multi-head graph attention; head outputs are concatenated column-wise."""
    outs, alphas = [], []
    for w, a_self, a_neigh in heads:
        out, alpha = gat_head(edges, h, w, a_self, a_neigh)
        outs.append(out)
        alphas.append(alpha)
    result = _activate(outs[0] if len(outs) == 1 else concat_cols(outs), act)
    if return_attention:
        return result, alphas
    return result


# --------------------------------------------------------------------------- encoder


def init_encoder(cfg: EncoderConfig, rng: np.random.Generator, prefix: str = "enc") -> Params:
    params: Params = {}
    for i in range(cfg.num_layers):
        fan_in, fan_out = cfg.layer_dim(i), cfg.layer_dim(i + 1)
        key = f"{prefix}.{i}"
        if cfg.arch == "gcn":
            params[f"{key}.W"] = glorot(fan_in, fan_out, rng, f"{key}.W")
        elif cfg.arch == "sage":
            params[f"{key}.W_self"] = glorot(fan_in, fan_out, rng, f"{key}.W_self")
            params[f"{key}.W_neigh"] = glorot(fan_in, fan_out, rng, f"{key}.W_neigh")
        else:
            head_dim = fan_out // cfg.gat_heads
            for j in range(cfg.gat_heads):
                params[f"{key}.h{j}.W"] = glorot(fan_in, head_dim, rng, f"{key}.h{j}.W")
                params[f"{key}.h{j}.a_self"] = glorot(head_dim, 1, rng, f"{key}.h{j}.a_self")
                params[f"{key}.h{j}.a_neigh"] = glorot(head_dim, 1, rng, f"{key}.h{j}.a_neigh")
    return params


def encode(
    view: GraphView,
    cfg: EncoderConfig,
    params: Params,
    training: bool = False,
    rng: np.random.Generator | None = None,
    prefix: str = "enc",
) -> EmbeddingStack:
    """Run the encoder over a view and keep every layer's output, H^(0) .. H^(k).

    Hidden layers use ``cfg.activation``; the last layer is linear. Dropout
    acts on the input of layers 2..k during training only.
    """
    h = view.features
    if h.cols != cfg.input_dim:
        raise DimensionError(f"view has {h.cols} feature columns, encoder expects {cfg.input_dim}")
    layers = [h]
    for i in range(cfg.num_layers):
        act = cfg.activation if i < cfg.num_layers - 1 else "none"
        if i > 0:
            h = dropout(h, cfg.keep_prob, rng, training)
        key = f"{prefix}.{i}"
        if cfg.arch == "gcn":
            h = gcn_layer(view.normalized_adj, h, params[f"{key}.W"], act)
        elif cfg.arch == "sage":
            h = sage_layer(view.mean_adj, h, params[f"{key}.W_self"], params[f"{key}.W_neigh"], act)
        else:
            heads = [
                (params[f"{key}.h{j}.W"], params[f"{key}.h{j}.a_self"], params[f"{key}.h{j}.a_neigh"])
                for j in range(cfg.gat_heads)
            ]
            h = gat_layer(view.attention_edges, h, heads, act)
        layers.append(h)
    return EmbeddingStack(layers)


# --------------------------------------------------------------------------- decoders


def init_mlp(dims: list[int], rng: np.random.Generator, prefix: str) -> Params:
    params: Params = {}
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        params[f"{prefix}.{i}.W"] = glorot(fan_in, fan_out, rng, f"{prefix}.{i}.W")
        params[f"{prefix}.{i}.b"] = zeros((1, fan_out), f"{prefix}.{i}.b")
    return params


def mlp(z: Tensor, params: Params, prefix: str = "dec", act: str = "relu") -> Tensor:
    """Linear layers ``{prefix}.{i}.W/b`` with ``act`` between them and none after the last."""
    depth = 0
    while f"{prefix}.{depth}.W" in params:
        depth += 1
    if depth == 0:
        raise DimensionError(f"no MLP parameters under {prefix!r}")
    for i in range(depth):
        w, b = params[f"{prefix}.{i}.W"], params[f"{prefix}.{i}.b"]
        if z.cols != w.rows:
            raise DimensionError(f"{prefix}.{i}: input has {z.cols} columns, weight expects {w.rows}")
        z = add_bias(matmul(z, w), b)
        if i < depth - 1:
            z = _activate(z, act)
    return z


def init_decoder(cfg: DecoderConfig, left_dim: int, right_dim: int, rng: np.random.Generator, prefix: str = "dec") -> Params:
    if cfg.kind == "mlp_edge":
        return init_mlp([left_dim + right_dim, *cfg.resolved_hidden(), 1], rng, prefix)
    if cfg.kind == "mlp_feature":
        out = cfg.output_dim if cfg.output_dim is not None else right_dim
        return init_mlp([left_dim, *cfg.resolved_hidden(), out], rng, prefix)
    return {}


def decode_edge(kind: str, z_left: Tensor, z_right: Tensor, params: Params | None = None, prefix: str = "dec") -> Tensor:
    """Raw (pre-sigmoid) score per row pair."""
    if z_left.rows != z_right.rows:
        raise DimensionError(f"decode_edge: {z_left.rows} left rows vs {z_right.rows} right rows")
    if kind == "dot":
        if z_left.cols != z_right.cols:
            raise DimensionError(f"dot decoder: widths differ ({z_left.cols} vs {z_right.cols})")
        return rowwise_dot(z_left, z_right)
    if kind == "mlp_edge":
        return mlp(concat_cols([z_left, z_right]), params or {}, prefix)
    raise ConfigError(f"{kind!r} is not an edge decoder", "decoder.kind")


def decode_feature(z: Tensor, params: Params, prefix: str = "dec") -> Tensor:
    return mlp(z, params, prefix)
