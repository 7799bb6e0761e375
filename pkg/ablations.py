"""Architectural variants: fusion cross-modal attention, direct fusion, pairwise attention."""

from __future__ import annotations

import logging

import numpy as np

from errors import ConfigError
from fusion_model import FusionTransformer
from layers import CrossModalTransformer, ParameterStore, RunContext
from models import VARIANTS, ModelConfig, VariantDescriptor
from tensor import Tensor, add, scale

logger = logging.getLogger(__name__)


def _transformer(store: ParameterStore, name: str, cfg: ModelConfig) -> CrossModalTransformer:
    return CrossModalTransformer(
        store, name, cfg.cm_layers, cfg.hidden_dim, cfg.heads, cfg.d_k, cfg.d_v, cfg.ffn_dim, cfg.attn_dropout
    )


class FusionAttentionStage:
    """One transformer per modality; every target attends to the whole Y_F."""

    def __init__(self, store: ParameterStore, cfg: ModelConfig):
        self.names = [m.name for m in cfg.modalities]
        self.transformers = [_transformer(store, f"cross_modal.{name}", cfg) for name in self.names]

    @property
    def transformer_count(self) -> int:
        return len(self.transformers)

    def __call__(self, ys: list[Tensor], y_fusion: Tensor, ctx: RunContext):
        reinforced, captured = [], {}
        for name, cmt, y in zip(self.names, self.transformers, ys):
            z, weights = cmt(y, y_fusion, ctx)
            reinforced.append(z)
            captured[name] = weights
        return reinforced, captured


class DirectFusionStage:
    """No cross-modal module: low-level features go straight to self-attention."""

    transformer_count = 0

    def __init__(self, store: ParameterStore, cfg: ModelConfig):
        pass

    def __call__(self, ys: list[Tensor], y_fusion: Tensor, ctx: RunContext):
        return list(ys), {}


class PairwiseAttentionStage:
    """A transformer per ordered pair (target i, source j), i != j.

    Keys/values come from Y_j alone; the n-1 outputs per target are averaged so
    the mid-level fusion keeps L_F rows.
    """

    def __init__(self, store: ParameterStore, cfg: ModelConfig):
        if cfg.num_modalities < 2:
            raise ConfigError("huspair needs at least two modalities")
        self.names = [m.name for m in cfg.modalities]
        n = len(self.names)
        self.pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
        self.transformers = {
            (i, j): _transformer(store, f"cross_modal.{self.names[i]}<-{self.names[j]}", cfg)
            for i, j in self.pairs
        }

    @property
    def transformer_count(self) -> int:
        return len(self.transformers)

    def __call__(self, ys: list[Tensor], y_fusion: Tensor, ctx: RunContext):
        n = len(ys)
        reinforced, captured = [], {}
        for i in range(n):
            total = None
            for j in range(n):
                if i == j:
                    continue
                z, weights = self.transformers[(i, j)](ys[i], ys[j], ctx)
                captured[f"{self.names[i]}<-{self.names[j]}"] = weights
                total = z if total is None else add(total, z)
            reinforced.append(scale(total, 1.0 / (n - 1)))
        return reinforced, captured


STAGES = {
    "husformer": FusionAttentionStage,
    "husfuse": DirectFusionStage,
    "huspair": PairwiseAttentionStage,
}


def expected_transformer_count(kind: str, n: int) -> int:
    """n for husformer, n^2 - n for huspair, 0 for husfuse."""
    if kind not in VARIANTS:
        raise ConfigError(f"unknown variant {kind!r}")
    return {"husformer": n, "husfuse": 0, "huspair": n * n - n}[kind]


def count_parameters(params) -> int:
    """Total trainable scalars in a ParameterStore, model or tensor list."""
    if isinstance(params, FusionTransformer):
        params = params.store
    if isinstance(params, ParameterStore):
        return params.count()
    return sum(int(np.prod(t.shape)) for t in params)


def build_variant(cfg: ModelConfig, seed: int = 0) -> FusionTransformer:
    """Construct the configured variant with freshly initialised parameters."""
    cfg.validate()
    model = FusionTransformer(cfg, STAGES[cfg.variant], seed=seed)
    logger.info(
        "built %s: %d cross-modal transformers, %d parameters",
        cfg.variant, model.stage.transformer_count, count_parameters(model),
    )
    return model


def describe_variant(model: FusionTransformer) -> VariantDescriptor:
    return VariantDescriptor(
        kind=model.cfg.variant,
        cross_modal_transformers=model.stage.transformer_count,
        parameter_count=count_parameters(model),
    )
