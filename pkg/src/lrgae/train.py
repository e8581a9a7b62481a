"""Full-batch pretraining loop: augment, encode, pair, decode, contrast, Adam step."""
from __future__ import annotations

import time
import zlib
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .augment import AugmentSpec, GraphView, augment, no_augment
from .errors import ConfigError, ContractError, TrainingError
from .graph import Graph
from .losses import (
    LossConfig,
    NegSamplerConfig,
    bce_edge_loss,
    info_nce,
    mse_feature_loss,
    sce_loss,
    simcse,
)
from .nn import (
    DecoderConfig,
    EmbeddingStack,
    EncoderConfig,
    Params,
    decode_edge,
    encode,
    init_decoder,
    init_encoder,
)
from .tensor import Tensor, backward, concat_cols, gather_rows, rowwise_dot
from .views import LeftRight, PairBatch, ViewSpec, check_compatible, left_right, subsample, supervision_pairs

MASK_TOKEN = "mask_token"


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose ("dropout", "augment", ...) under one seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    eval_every: int = 0
    grad_clip: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("must be >= 1", "train.epochs")
        if self.learning_rate < 0:
            raise ConfigError("must be >= 0", "train.learning_rate")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError("must lie in [0, 1)", f"train.{name}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("must be > 0", "train.grad_clip")


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: Params, grads: dict[str, np.ndarray], state: OptimizerState, cfg: TrainConfig) -> OptimizerState:
    """Adam with bias correction and decoupled weight decay; updates ``params`` in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    lr = cfg.learning_rate
    for name, p in params.items():
        g = grads[name]
        theta = p.data
        if cfg.weight_decay:
            theta = theta - lr * cfg.weight_decay * theta
        m = cfg.beta1 * state.m.get(name, 0.0) + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v.get(name, 0.0) + (1.0 - cfg.beta2) * g * g
        state.m[name], state.v[name] = m, v
        p.data = theta - lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
    return state


@dataclass
class RunRecord:
    seed: int
    losses: list[float] = field(default_factory=list)
    metrics: list[dict] = field(default_factory=list)
    wall_clock_s: float = 0.0
    config: dict = field(default_factory=dict)


@dataclass
class EpochInfo:
    """What one step saw: passed to the ``callback`` of :func:`train` before the update."""

    epoch: int
    loss: float
    batch: PairBatch
    view_a: GraphView
    view_b: GraphView
    params: Params


def init_params(
    enc: EncoderConfig,
    dec: DecoderConfig,
    spec: ViewSpec,
    rng: np.random.Generator,
    mask_token: bool = False,
) -> Params:
    params = init_encoder(enc, rng)
    params.update(init_decoder(dec, enc.layer_dim(spec.l), enc.layer_dim(spec.r), rng))
    if mask_token:
        params[MASK_TOKEN] = Tensor(np.zeros((1, enc.input_dim)), requires_grad=True, name=MASK_TOKEN)
    return params


def encode_views(
    spec: ViewSpec,
    view_a: GraphView,
    view_b: GraphView,
    enc: EncoderConfig,
    params: Params,
    training: bool,
    rng: np.random.Generator | None,
) -> tuple[EmbeddingStack, EmbeddingStack]:
    """Encode the views the ViewSpec reads; a shared view object is encoded once."""
    stack_a = encode(view_a, enc, params, training, rng) if "A" in spec.uses else None
    if "B" not in spec.uses:
        stack_b = stack_a
    elif view_b is view_a and stack_a is not None:
        stack_b = stack_a
    else:
        stack_b = encode(view_b, enc, params, training, rng)
    return stack_a if stack_a is not None else stack_b, stack_b


def contrast(loss: LossConfig, dec: DecoderConfig, reps: LeftRight, params: Params) -> Tensor:
    if loss.kind == "bce":
        if reps.neg_left is None:
            raise ContractError("bce needs negative pairs")
        pos = decode_edge(dec.kind, reps.left, reps.right, params)
        neg = decode_edge(dec.kind, reps.neg_left, reps.neg_right, params)
        return bce_edge_loss(pos, neg)
    if loss.kind == "mse":
        return mse_feature_loss(reps.left, reps.right)
    if loss.kind == "sce":
        return sce_loss(reps.left, reps.right, loss.sce_gamma)
    if loss.kind == "infonce":
        return info_nce(reps.left, reps.right, loss.temperature)
    return simcse(reps.left, reps.right, loss.temperature)


def step_loss(
    spec: ViewSpec,
    view_a: GraphView,
    view_b: GraphView,
    batch: PairBatch,
    enc: EncoderConfig,
    dec: DecoderConfig,
    loss: LossConfig,
    params: Params,
    decode_right: bool = False,
    training: bool = False,
    rng: np.random.Generator | None = None,
    stacks: tuple[EmbeddingStack, EmbeddingStack] | None = None,
) -> Tensor:
    """Loss of one (views, batch) configuration. Does not validate the case."""
    if stacks is None:
        stacks = encode_views(spec, view_a, view_b, enc, params, training, rng)
    reps = left_right(spec, stacks[0], stacks[1], batch, dec, params, decode_right)
    return contrast(loss, dec, reps, params)


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total <= max_norm:
        return grads
    factor = max_norm / total
    return {k: g * factor for k, g in grads.items()}


def train(
    g: Graph,
    aug_a: AugmentSpec,
    aug_b: AugmentSpec | None,
    spec: ViewSpec,
    enc: EncoderConfig,
    dec: DecoderConfig,
    loss: LossConfig,
    neg: NegSamplerConfig,
    cfg: TrainConfig,
    callback: Callable[[EpochInfo], None] | None = None,
    evaluate: Callable[[Params, int], dict] | None = None,
) -> tuple[Params, RunRecord]:
    """Pretrain an encoder (and decoder) on ``g``.

    ``aug_b=None`` makes view B the very same view object as A. Views and
    negatives are redrawn every epoch from streams seeded by ``cfg.seed``.
    """
    decode_right = check_compatible(spec, loss, dec, enc.num_layers, enc.layer_dim)
    started = time.perf_counter()
    uses_token = aug_a.kind == "feature_mask" or (aug_b is not None and aug_b.kind == "feature_mask")
    params = init_params(enc, dec, spec, rng_stream(cfg.seed, "init"), uses_token)
    aug_rng = rng_stream(cfg.seed, "augment")
    pair_rng = rng_stream(cfg.seed, "pairs")
    drop_rng = rng_stream(cfg.seed, "dropout")
    state = OptimizerState()
    record = RunRecord(
        seed=cfg.seed,
        config={
            "augment_a": asdict(aug_a),
            "augment_b": None if aug_b is None else asdict(aug_b),
            "view": asdict(spec),
            "case": spec.case,
            "encoder": asdict(enc),
            "decoder": asdict(dec),
            "loss": asdict(loss),
            "decode_right": decode_right,
            "neg_sampler": asdict(neg),
            "negatives_resampled": "per_epoch",
            "train": asdict(cfg),
        },
    )
    token = params.get(MASK_TOKEN)
    for epoch in range(1, cfg.epochs + 1):
        view_a = augment(g, aug_a, aug_rng, token)
        view_b = view_a if aug_b is None else augment(g, aug_b, aug_rng, token)
        stacks = encode_views(spec, view_a, view_b, enc, params, True, drop_rng)
        edge_level = spec.pair_mode == "edge_pair"
        embeddings = None
        if edge_level and neg.strategy == "similarity" and loss.kind == "bce":
            left_stack = stacks[0] if spec.left_graph == "A" else stacks[1]
            embeddings = left_stack[spec.l].data
        try:
            batch = supervision_pairs(
                spec,
                g,
                view_a,
                view_b,
                pair_rng,
                None,
                strategy=neg.strategy,
                embeddings=embeddings,
                neg_multiplier=neg.multiplier if loss.kind == "bce" else None,
            )
        except ContractError as exc:
            raise TrainingError(f"seed {cfg.seed}, epoch {epoch}: {exc}") from exc
        if loss.in_batch:
            batch = subsample(batch, loss.max_pairs, pair_rng)
        value = step_loss(spec, view_a, view_b, batch, enc, dec, loss, params, decode_right, stacks=stacks)
        loss_value = value.item()
        if not np.isfinite(loss_value):
            raise TrainingError(f"seed {cfg.seed}, epoch {epoch}: loss is {loss_value}")
        grad_map = backward(value, params.values())
        grads = {name: grad_map[p] for name, p in params.items()}
        if callback is not None:
            callback(EpochInfo(epoch, loss_value, batch, view_a, view_b, params))
        if cfg.grad_clip is not None:
            grads = _clip(grads, cfg.grad_clip)
        try:
            adam_step(params, grads, state, cfg)
        except TrainingError as exc:
            raise TrainingError(f"seed {cfg.seed}, epoch {epoch}: {exc}") from exc
        record.losses.append(loss_value)
        if evaluate is not None and cfg.eval_every and epoch % cfg.eval_every == 0:
            record.metrics.append({"epoch": epoch, **evaluate(params, epoch)})
    record.wall_clock_s = time.perf_counter() - started
    return params, record


def embed(g: Graph, enc: EncoderConfig, params: Params, mode: str = "last") -> np.ndarray:
    """Evaluation-mode embeddings of the unaugmented graph: H^(k), or [H^(1) || ... || H^(k)]."""
    stack = encode(no_augment(g), enc, params, training=False)
    if mode == "last":
        return stack[enc.num_layers].data
    if mode == "concat":
        return concat_cols(stack.layers[1:]).data
    raise ConfigError(f"unknown embedding mode {mode!r}", "embed_mode")


def score_pairs(
    g: Graph,
    pairs: np.ndarray,
    enc: EncoderConfig,
    dec: DecoderConfig,
    spec: ViewSpec,
    params: Params,
    embed_mode: str = "last",
) -> np.ndarray:
    """Link scores for (u, v) pairs on the unaugmented graph.

    Edge decoders score ``(H^(l)[u], H^(r)[v])`` as trained; other methods use
    the inner product of the embeddings.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if dec.is_edge:
        stack = encode(no_augment(g), enc, params, training=False)
        left = gather_rows(stack[spec.l], pairs[:, 0])
        right = gather_rows(stack[spec.r], pairs[:, 1])
        return decode_edge(dec.kind, left, right, params).data[:, 0]
    z = Tensor(embed(g, enc, params, embed_mode))
    return rowwise_dot(gather_rows(z, pairs[:, 0]), gather_rows(z, pairs[:, 1])).data[:, 0]
