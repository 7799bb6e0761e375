"""The multi-modal fusion network: front-end, cross-modal stage, self-attention, head."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from errors import DataError, DimensionError
from layers import Linear, ParameterStore, RunContext, SelfAttentionEncoder
from models import AttentionDump, ModalitySpec, ModelConfig, MultiModalSample
from tensor import Tensor, add, concat_rows, conv1d, dropout, reshape, softmax_rows

logger = logging.getLogger(__name__)


def positional_encoding(length: int, dim: int) -> np.ndarray:
    """Sinusoidal table with positions 1..length: sin on even columns, cos on odd."""
    pos = np.arange(1, length + 1, dtype=np.float64)[:, None]
    cols = np.arange(dim)
    rates = np.power(10000.0, (2 * (cols // 2)) / dim)
    angles = pos / rates[None, :]
    return np.where(cols % 2 == 0, np.sin(angles), np.cos(angles))


class ModalityEmbedding:
    """Temporal conv over channels, learned time-axis projection D_i -> D, plus PE."""

    def __init__(self, store: ParameterStore, spec: ModalitySpec, dim: int, use_pe: bool):
        self.spec = spec
        k = spec.kernel_size
        self.kernels = store.uniform(
            f"embed.{spec.name}.conv", (spec.channels, spec.channels, k), fan_in=spec.channels * k
        )
        self.project = Linear(store, f"embed.{spec.name}.time_proj", spec.input_dim, dim)
        self.pe = positional_encoding(spec.channels, dim) if use_pe else None

    def __call__(self, x: Tensor) -> Tensor:
        y = self.project(conv1d(x, self.kernels))
        if self.pe is None:
            return y
        return add(y, Tensor(np.broadcast_to(self.pe, y.shape)))


def fuse_low_level(ys: Sequence[Tensor]) -> Tensor:
    """Row-concatenate unimodal features in modality order."""
    widths = {y.shape[-1] for y in ys}
    if len(widths) > 1:
        raise DimensionError(f"cannot fuse features of widths {sorted(widths)}")
    return ys[0] if len(ys) == 1 else concat_rows(ys)


class CrossModalStage(Protocol):
    transformer_count: int

    def __call__(self, ys: list[Tensor], y_fusion: Tensor, ctx: RunContext
                 ) -> tuple[list[Tensor], dict[str, list[np.ndarray]]]: ...


StageBuilder = Callable[[ParameterStore, ModelConfig], CrossModalStage]


class OutputHead:
    """Z_hat = Z_F + zeta_a(Z_F); P = softmax(zeta_b(dropout(flatten(Z_hat))))."""

    def __init__(self, store: ParameterStore, fusion_length: int, dim: int, num_classes: int, dropout_rate: float):
        self.zeta_alpha = Linear(store, "head.zeta_alpha", dim, dim)
        self.zeta_beta = Linear(store, "head.zeta_beta", fusion_length * dim, num_classes)
        self.dropout_rate = dropout_rate

    def __call__(self, z_f: Tensor, ctx: RunContext) -> Tensor:
        z_hat = add(z_f, self.zeta_alpha(z_f))
        flat = reshape(z_hat, (z_hat.shape[0], -1))
        flat = dropout(flat, self.dropout_rate, ctx.training, ctx.rng)
        return softmax_rows(self.zeta_beta(flat))


def predict_labels(probabilities: np.ndarray) -> np.ndarray:
    """Argmax per row; ties go to the smallest class index."""
    return np.argmax(probabilities, axis=-1)


@dataclass
class ForwardResult:
    probabilities: Tensor  # [B, c]
    predicted: np.ndarray  # [B]
    dumps: list[AttentionDump] | None = None


class FusionTransformer:
    """Parameters and wiring of one configured variant.

    Construction order fixes the parameter enumeration order: embeddings,
    cross-modal stage, self-attention encoder, output head.
    """

    def __init__(self, cfg: ModelConfig, build_stage: StageBuilder, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        self.store = ParameterStore(np.random.default_rng(seed))
        self.embeddings = [
            ModalityEmbedding(self.store, spec, cfg.hidden_dim, cfg.positional_encoding) for spec in cfg.modalities
        ]
        self.stage = build_stage(self.store, cfg)
        self.encoder = SelfAttentionEncoder(
            self.store, "self_attn", cfg.sa_layers, cfg.hidden_dim, cfg.heads, cfg.d_k, cfg.d_v,
            cfg.ffn_dim, cfg.attn_dropout,
        )
        self.head = OutputHead(self.store, cfg.fusion_length, cfg.hidden_dim, cfg.num_classes, cfg.output_dropout)

    def parameters(self) -> list[Tensor]:
        return self.store.tensors()

    def _as_batch(self, inputs: Sequence[np.ndarray]) -> list[Tensor]:
        if len(inputs) != self.cfg.num_modalities:
            raise DataError(f"got {len(inputs)} modality arrays, expected {self.cfg.num_modalities}")
        batch = []
        sizes = set()
        for arr, spec in zip(inputs, self.cfg.modalities):
            arr = np.asarray(arr, dtype=np.float64)
            if arr.ndim == 2:
                arr = arr[None]
            if arr.ndim != 3 or arr.shape[1:] != (spec.channels, spec.input_dim):
                raise DataError(
                    f"modality {spec.name!r}: expected shape {(spec.channels, spec.input_dim)}, "
                    f"got {arr.shape[1:] if arr.ndim == 3 else arr.shape}"
                )
            sizes.add(arr.shape[0])
            batch.append(Tensor(arr))
        if len(sizes) != 1:
            raise DataError(f"modalities disagree on batch size: {sorted(sizes)}")
        return batch

    def embed(self, inputs: Sequence[np.ndarray]) -> list[Tensor]:
        """Low-level unimodal features Y_i, each [B, L_i, D]."""
        return [emb(x) for emb, x in zip(self.embeddings, self._as_batch(inputs))]

    def forward(self, inputs: Sequence[np.ndarray], training: bool = False,
                rng: np.random.Generator | None = None, dump: bool = False,
                labels: Sequence[int] | None = None) -> ForwardResult:
        """Run the pipeline on a batch (arrays [B, L_i, D_i]) or a single sample."""
        ctx = RunContext(training=training, rng=rng, capture=dump)
        ys = self.embed(inputs)
        y_fusion = fuse_low_level(ys)
        reinforced, cross_weights = self.stage(ys, y_fusion, ctx)
        mid = fuse_low_level(reinforced)
        z_f, self_weights = self.encoder(mid, ctx)
        probs = self.head(z_f, ctx)
        predicted = predict_labels(probs.data)
        result = ForwardResult(probs, predicted)
        if dump:
            result.dumps = [
                AttentionDump(
                    variant=self.cfg.variant,
                    cross_modal={k: [w[b] for w in layers] for k, layers in cross_weights.items()},
                    self_attention=[w[b] for w in self_weights],
                    z_f=z_f.data[b].copy(),
                    probabilities=probs.data[b].copy(),
                    predicted=int(predicted[b]),
                    label=None if labels is None else int(labels[b]),
                )
                for b in range(probs.shape[0])
            ]
        return result

    def predict_sample(self, sample: MultiModalSample, dump: bool = False
                       ) -> tuple[np.ndarray, int, AttentionDump | None]:
        """Eval-mode forward of one sample: (P, predicted label, optional dump)."""
        sample.check(self.cfg.modalities, self.cfg.num_classes)
        result = self.forward(sample.arrays, dump=dump, labels=[sample.label])
        return result.probabilities.data[0], int(result.predicted[0]), (result.dumps[0] if dump else None)
