"""JSON experiment configs: schema, validation, and resolution into runtime objects.

Unknown keys are rejected. Every error is a :class:`ConfigError` whose
``field`` is the dotted path of the offending key (``train.epochs``,
``view.l``, ``dataset.synthetic.p_out``...).

Either ``preset`` names a method, or ``aug_a``/``aug_b``/``view`` spell the
views out. ``loss`` and ``decoder`` override the preset's choices (in the
explicit form they default to ``bce`` and ``dot``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .augment import AugmentSpec
from .errors import ConfigError, ContractError
from .graph import Graph, generate_synthetic, load_graph
from .losses import LossConfig, NegSamplerConfig
from .nn import DecoderConfig, EncoderConfig
from .train import TrainConfig
from .views import ViewSpec, check_compatible, preset as make_preset

TASKS = ("node_classification", "link_prediction", "clustering")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SyntheticModel(_Strict):
    """A stochastic block model; also the input format of ``lrgae gen``."""

    blocks: int = Field(2, ge=1)
    sizes: list[int] | None = None
    n: int | None = Field(None, ge=1)
    p_in: float = Field(0.9, ge=0.0, le=1.0)
    p_out: float = Field(0.05, ge=0.0, le=1.0)
    feature_dim: int = Field(16, ge=1)
    noise: float = Field(1.0, ge=0.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check(self):
        if self.p_out >= self.p_in:
            raise ValueError(f"p_out ({self.p_out}) must be below p_in ({self.p_in})")
        if self.sizes is not None and len(self.sizes) != self.blocks:
            raise ValueError(f"sizes lists {len(self.sizes)} blocks, blocks={self.blocks}")
        if self.sizes is not None and min(self.sizes) < 1:
            raise ValueError("every block size must be >= 1")
        if self.feature_dim < self.blocks:
            raise ValueError("feature_dim must be at least the number of blocks")
        return self

    def block_sizes(self) -> list[int]:
        if self.sizes is not None:
            return list(self.sizes)
        n = self.n if self.n is not None else 100 * self.blocks
        base, extra = divmod(n, self.blocks)
        return [base + (1 if i < extra else 0) for i in range(self.blocks)]

    def build(self) -> Graph:
        return generate_synthetic(
            self.blocks, self.block_sizes(), self.p_in, self.p_out, self.feature_dim, self.noise, self.seed
        )


class DatasetModel(_Strict):
    path: str | None = None
    synthetic: SyntheticModel | None = None
    name: str | None = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.path is None) == (self.synthetic is None):
            raise ValueError("give exactly one of 'path' or 'synthetic'")
        return self

    def display_name(self) -> str:
        if self.name:
            return self.name
        if self.path is not None:
            return Path(self.path).name or str(self.path)
        s = self.synthetic
        return f"sbm{s.blocks}x{sum(s.block_sizes())}"


class AugmentModel(_Strict):
    kind: Literal["none", "edge_mask", "path_mask", "node_mask", "feature_mask"] = "none"
    ratio: float = Field(0.0, ge=0.0, le=1.0)
    walk_len: int = Field(3, ge=1)


class ViewModel(_Strict):
    left_graph: Literal["A", "B"] = "A"
    right_graph: Literal["A", "B"] = "A"
    l: int = Field(2, ge=0)
    r: int = Field(2, ge=0)
    pair_mode: Literal["same_node", "edge_pair"] = "edge_pair"
    stop_gradient_right: bool = False


class DecoderModel(_Strict):
    kind: Literal["dot", "identity", "mlp_edge", "mlp_feature"] | None = None
    hidden_dims: list[int] | None = None
    output_dim: int | None = Field(None, ge=1)


class LossModel(_Strict):
    kind: Literal["bce", "mse", "sce", "infonce", "simcse"] | None = None
    temperature: float = Field(0.5, gt=0.0)
    sce_gamma: float = Field(2.0, ge=1.0)
    max_pairs: int = Field(1024, ge=2)
    decode_right: bool | None = None


class EncoderModel(_Strict):
    arch: Literal["gcn", "sage", "gat"] = "gcn"
    num_layers: int = Field(2, ge=1)
    hidden_dim: int = Field(256, ge=1)
    activation: Literal["relu", "none"] = "relu"
    keep_prob: float = Field(0.8, gt=0.0, le=1.0)
    gat_heads: int = Field(1, ge=1)


class NegSamplerModel(_Strict):
    strategy: Literal["uniform", "degree", "similarity"] = "uniform"
    multiplier: int = Field(1, ge=1)


class TrainModel(_Strict):
    epochs: int = Field(500, ge=1)
    learning_rate: float = Field(0.01, ge=0.0)
    weight_decay: float = Field(5e-4, ge=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    eval_every: int = Field(0, ge=0)
    grad_clip: float | None = Field(None, gt=0.0)


class PresetOptionsModel(_Strict):
    structure_mask: Literal["edge_mask", "path_mask", "node_mask"] = "edge_mask"
    structure_ratio: float | None = Field(None, ge=0.0, le=1.0)
    feature_ratio: float = Field(0.5, ge=0.0, le=1.0)
    walk_len: int = Field(3, ge=1)


class EvalModel(_Strict):
    node_split: list[float] = Field(default_factory=lambda: [0.8, 0.1, 0.1], min_length=3, max_length=3)
    link_split: list[float] = Field(default_factory=lambda: [0.85, 0.05, 0.10], min_length=3, max_length=3)
    probe_epochs: int = Field(100, ge=1)
    probe_learning_rate: float = Field(0.01, gt=0.0)
    probe_weight_decay: float = Field(1e-4, ge=0.0)
    kmeans_restarts: int = Field(10, ge=1)


class ExperimentModel(_Strict):
    dataset: DatasetModel
    task: Literal["node_classification", "link_prediction", "clustering"]
    preset: Literal["gae", "gae_f", "maskgae", "graphmae", "lrgae6", "lrgae7", "lrgae8"] | None = None
    preset_options: PresetOptionsModel | None = None
    aug_a: AugmentModel | None = None
    aug_b: Union[AugmentModel, Literal["shared"], None] = None
    view: ViewModel | None = None
    decoder: DecoderModel | None = None
    loss: LossModel | None = None
    encoder: EncoderModel = Field(default_factory=EncoderModel)
    neg_sampler: NegSamplerModel = Field(default_factory=NegSamplerModel)
    train: TrainModel = Field(default_factory=TrainModel)
    eval: EvalModel = Field(default_factory=EvalModel)
    seeds: list[int] = Field(default_factory=lambda: list(range(10)), min_length=1)
    embed_mode: Literal["last", "concat"] = "last"
    output: str | None = None


# --------------------------------------------------------------------------- errors


def _pydantic_error(exc: ValidationError, prefix: str = "") -> ConfigError:
    first = exc.errors()[0]
    loc = [str(p) for p in first["loc"] if not str(p).startswith(("function-", "literal["))]
    # discriminator-less unions report the member tried; drop those labels
    loc = [p for p in loc if p not in ("AugmentModel", "str")]
    path = ".".join(([prefix] if prefix else []) + loc) or (prefix or "config")
    msg = first["msg"]
    if msg.startswith("Value error, "):
        msg = msg[len("Value error, "):]
    return ConfigError(msg, path)


def parse_synthetic(data: dict) -> SyntheticModel:
    try:
        return SyntheticModel.model_validate(data)
    except ValidationError as exc:
        raise _pydantic_error(exc) from None


# --------------------------------------------------------------------------- resolution


@dataclass(frozen=True)
class Experiment:
    """A fully resolved, validated experiment (dataset not yet loaded)."""

    model: ExperimentModel
    method: str
    aug_a: AugmentSpec
    aug_b: AugmentSpec | None
    view: ViewSpec
    decoder: DecoderConfig
    loss: LossConfig
    neg: NegSamplerConfig

    @property
    def task(self) -> str:
        return self.model.task

    @property
    def seeds(self) -> list[int]:
        return list(self.model.seeds)

    def encoder(self, input_dim: int) -> EncoderConfig:
        return EncoderConfig(input_dim=input_dim, **self.model.encoder.model_dump())

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(seed=seed, **self.model.train.model_dump())

    def load_dataset(self) -> Graph:
        ds = self.model.dataset
        if ds.synthetic is not None:
            try:
                return ds.synthetic.build()
            except ContractError as exc:
                raise ConfigError(str(exc), "dataset.synthetic") from None
        return load_graph(ds.path)

    def snapshot(self) -> dict:
        return self.model.model_dump(mode="json")


def _augment(model: AugmentModel, path: str) -> AugmentSpec:
    try:
        return AugmentSpec(model.kind, model.ratio, model.walk_len)
    except ContractError as exc:
        raise ConfigError(str(exc), path) from None


def resolve(model: ExperimentModel) -> Experiment:
    explicit = {k for k in ("aug_a", "aug_b", "view") if getattr(model, k) is not None}
    if model.preset is not None and explicit:
        raise ConfigError(f"give either 'preset' or an explicit view block, not both (found {sorted(explicit)})", sorted(explicit)[0])
    if model.preset is None and model.view is None:
        raise ConfigError("missing: give 'preset' or an explicit 'view'", "view")
    if model.preset is None and model.preset_options is not None:
        raise ConfigError("only meaningful together with 'preset'", "preset_options")
    num_layers = model.encoder.num_layers
    loss_model = model.loss or LossModel()
    dec_model = model.decoder or DecoderModel()

    if model.preset is not None:
        opts = model.preset_options or PresetOptionsModel()
        try:
            p = make_preset(model.preset, num_layers, opts.structure_mask, opts.structure_ratio, opts.feature_ratio, opts.walk_len)
        except ContractError as exc:
            raise ConfigError(str(exc), "preset_options") from None
        method, aug_a, aug_b, view = p.name, p.aug_a, p.aug_b, p.view
        loss_kind = loss_model.kind or p.loss
        dec_kind = dec_model.kind or p.decoder
    else:
        method = "custom"
        aug_a = _augment(model.aug_a or AugmentModel(), "aug_a")
        if model.aug_b is None or model.aug_b == "shared":
            aug_b = None
        else:
            aug_b = _augment(model.aug_b, "aug_b")
        view = ViewSpec(**model.view.model_dump())
        loss_kind = loss_model.kind or "bce"
        dec_kind = dec_model.kind or "dot"

    loss = LossConfig(
        kind=loss_kind,
        temperature=loss_model.temperature,
        sce_gamma=loss_model.sce_gamma,
        max_pairs=loss_model.max_pairs,
        decode_right=loss_model.decode_right,
    )
    decoder = DecoderConfig(dec_kind, dec_model.hidden_dims, dec_model.output_dim)
    # widths depend on the dataset; validate with a placeholder input width,
    # then again with the real one once the graph is loaded
    enc = EncoderConfig(input_dim=max(1, model.encoder.hidden_dim), **model.encoder.model_dump())
    check_compatible(view, loss, decoder, num_layers, enc.layer_dim)
    neg = NegSamplerConfig(**model.neg_sampler.model_dump())
    return Experiment(model, method, aug_a, aug_b, view, decoder, loss, neg)


def parse_config(data: dict) -> Experiment:
    """Validate a config dictionary; raises ConfigError naming the field path."""
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object", "config")
    try:
        model = ExperimentModel.model_validate(data)
    except ValidationError as exc:
        raise _pydantic_error(exc) from None
    return resolve(model)


def load_config(path) -> Experiment:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}", "config") from None
    return parse_config(data)
