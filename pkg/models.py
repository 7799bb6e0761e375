"""Data models for the multi-modal fusion engine."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from errors import ConfigError, DataError

VARIANTS = ("husformer", "husfuse", "huspair")


@dataclass
class ModalitySpec:
    """One signal source: L channels by D samples per window, conv kernel k."""
    name: str
    channels: int
    input_dim: int
    kernel_size: int = 1

    def validate(self):
        if not self.name:
            raise ConfigError("modality name must be non-empty")
        if self.channels < 1 or self.input_dim < 1:
            raise ConfigError(
                f"modality {self.name!r}: channels and input_dim must be >= 1, "
                f"got {self.channels}x{self.input_dim}"
            )
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(
                f"modality {self.name!r}: kernel_size must be odd and positive, got {self.kernel_size}"
            )

    def same_layout(self, other: "ModalitySpec") -> bool:
        """Compare name and array shape, ignoring the kernel size."""
        return (self.name, self.channels, self.input_dim) == (other.name, other.channels, other.input_dim)


@dataclass
class ModelConfig:
    """Architecture hyper-parameters. d_k/d_v default to hidden_dim // heads."""
    modalities: list[ModalitySpec]
    hidden_dim: int = 40
    heads: int = 5
    cm_layers: int = 4
    sa_layers: int = 2
    d_k: int | None = None
    d_v: int | None = None
    ffn_dim: int | None = None
    attn_dropout: float = 0.1
    output_dropout: float = 0.1
    num_classes: int = 3
    variant: str = "husformer"
    positional_encoding: bool = True

    def __post_init__(self):
        if self.heads >= 1 and self.hidden_dim % self.heads == 0:
            if self.d_k is None:
                self.d_k = self.hidden_dim // self.heads
            if self.d_v is None:
                self.d_v = self.hidden_dim // self.heads
        if self.ffn_dim is None:
            self.ffn_dim = 4 * self.hidden_dim

    @property
    def num_modalities(self) -> int:
        return len(self.modalities)

    @property
    def fusion_length(self) -> int:
        """L_F, the row count of the low-level fusion representation."""
        return sum(m.channels for m in self.modalities)

    def validate(self):
        if not self.modalities:
            raise ConfigError("at least one modality is required")
        names = [m.name for m in self.modalities]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate modality names: {names}")
        for m in self.modalities:
            m.validate()
        for key in ("hidden_dim", "heads", "cm_layers", "sa_layers", "ffn_dim"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1, got {getattr(self, key)}")
        if self.d_k is None or self.d_v is None:
            raise ConfigError(
                f"hidden_dim {self.hidden_dim} is not divisible by heads {self.heads}; set d_k and d_v explicitly"
            )
        if self.d_k < 1 or self.d_v < 1:
            raise ConfigError(f"d_k and d_v must be >= 1, got {self.d_k}, {self.d_v}")
        for key in ("attn_dropout", "output_dropout"):
            rate = getattr(self, key)
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f"{key} must lie in [0, 1), got {rate}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {', '.join(VARIANTS)}")
        if self.variant == "huspair" and self.num_modalities < 2:
            raise ConfigError("huspair needs at least two modalities")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["modalities"] = [ModalitySpec(**m) for m in d["modalities"]]
        return cls(**d)


@dataclass
class TrainConfig:
    """Optimisation and cross-validation settings."""
    batch_size: int = 64
    learning_rate: float = 1e-3
    epochs: int = 40
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    k_folds: int = 10
    holdout_fraction: float = 0.2
    seed: int = 0
    track_test_loss: bool = False

    def validate(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"Adam betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.adam_eps <= 0:
            raise ConfigError(f"adam_eps must be > 0, got {self.adam_eps}")
        if self.k_folds < 1:
            raise ConfigError(f"k_folds must be >= 1, got {self.k_folds}")
        if self.k_folds == 1 and not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError(
                f"k_folds=1 needs holdout_fraction in (0, 1), got {self.holdout_fraction}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunConfig:
    """Everything one `train` invocation needs."""
    model: ModelConfig
    train: TrainConfig
    dataset: Path
    output_dir: Path
    jobs: int = 1
    dump_attention: list[int] = field(default_factory=list)
    raw: dict = field(default_factory=dict)  # validated JSON, echoed into reports


@dataclass
class MultiModalSample:
    """One labelled record: an L_i x D_i array per modality."""
    arrays: list[np.ndarray]
    label: int

    def check(self, specs: list[ModalitySpec], num_classes: int):
        """Raise DataError unless the sample conforms to specs."""
        if len(self.arrays) != len(specs):
            raise DataError(f"sample has {len(self.arrays)} modalities, expected {len(specs)}")
        for arr, spec in zip(self.arrays, specs):
            expected = (spec.channels, spec.input_dim)
            if arr.shape != expected:
                raise DataError(f"modality {spec.name!r}: expected shape {expected}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"modality {spec.name!r}: non-finite values")
        if not 0 <= self.label < num_classes:
            raise DataError(f"label {self.label} out of range [0, {num_classes})")


@dataclass
class Dataset:
    """Immutable set of samples stored as one (N, L_i, D_i) array per modality."""
    specs: list[ModalitySpec]
    arrays: list[np.ndarray]
    labels: np.ndarray
    num_classes: int

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def sample(self, index: int) -> MultiModalSample:
        return MultiModalSample([a[index] for a in self.arrays], int(self.labels[index]))

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.specs, [a[idx] for a in self.arrays], self.labels[idx], self.num_classes)


@dataclass
class DatasetHeader:
    """Header of an HSF1 file; fixes the byte length of every record."""
    version: int
    num_classes: int
    specs: list[ModalitySpec]
    num_samples: int

    @property
    def num_modalities(self) -> int:
        return len(self.specs)

    @property
    def record_size(self) -> int:
        return sum(8 * s.channels * s.input_dim for s in self.specs) + 2


@dataclass
class AttentionDump:
    """Attention matrices and Z_F captured for one sample.

    cross_modal maps a modality (or "target<-source" for huspair) to a list over
    layers of (heads, rows, cols) arrays; self_attention is a list over layers of
    (heads, L_F, L_F) arrays.
    """
    variant: str
    cross_modal: dict[str, list[np.ndarray]]
    self_attention: list[np.ndarray]
    z_f: np.ndarray
    probabilities: np.ndarray
    predicted: int
    label: int | None = None

    def to_json_dict(self) -> dict:
        return {
            "variant": self.variant,
            "label": self.label,
            "predicted": self.predicted,
            "probabilities": self.probabilities.tolist(),
            "cross_modal": {k: layers[-1].mean(axis=0).tolist() for k, layers in self.cross_modal.items()},
            "cross_modal_layers": {k: [a.tolist() for a in layers] for k, layers in self.cross_modal.items()},
            "self": self.self_attention[-1].mean(axis=0).tolist(),
            "self_layers": [a.tolist() for a in self.self_attention],
            "z_f": self.z_f.tolist(),
        }


@dataclass
class VariantDescriptor:
    kind: str
    cross_modal_transformers: int
    parameter_count: int


@dataclass
class FoldResult:
    """Test metrics and loss traces of one cross-validation fold."""
    fold: int
    train_size: int
    test_size: int
    loss_trace: list[float]
    acc: float
    f1: float
    confusion: list[list[int]]
    hard_mae: float
    test_indices: list[int]
    test_loss_trace: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CrossValidationReport:
    folds: list[FoldResult]
    acc_mean: float
    acc_std: float
    f1_mean: float
    f1_std: float
    seed: int
    variant: VariantDescriptor
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "variant": asdict(self.variant),
            "acc_mean": self.acc_mean,
            "acc_std": self.acc_std,
            "f1_mean": self.f1_mean,
            "f1_std": self.f1_std,
            "folds": [f.to_dict() for f in self.folds],
            "config": self.config,
        }
