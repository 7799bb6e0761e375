"""Training loop, Adam, loss, evaluation and k-fold cross-validation."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ablations import build_variant, describe_variant
from checkpoint import save_checkpoint
from data import batch_iter
from errors import ConfigError, DataError, HusformerError, TrainingError
from fusion_model import FusionTransformer
from metrics import confusion_matrix, hard_label_mae, multiclass_avg_accuracy, multiclass_avg_f1
from models import CrossValidationReport, Dataset, FoldResult, ModelConfig, TrainConfig
from tensor import ComputationTape, Tensor, absolute, no_grad, reshape, scale, sub, sum_all

logger = logging.getLogger(__name__)


def mae_loss(probabilities: Tensor, labels: Sequence[int]) -> Tensor:
    """Batch mean of sum_j |P_j - onehot(y)_j|."""
    if probabilities.ndim == 1:
        probabilities = reshape(probabilities, (1, probabilities.shape[0]))
    batch, num_classes = probabilities.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != batch:
        raise DataError(f"{labels.shape[0]} labels for a batch of {batch}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DataError(f"label out of range [0, {num_classes})")
    onehot = np.zeros((batch, num_classes))
    onehot[np.arange(batch), labels] = 1.0
    return scale(sum_all(absolute(sub(probabilities, Tensor(onehot)))), 1.0 / batch)


@dataclass
class AdamState:
    step: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam update, in place on params.data."""
    state.step += 1
    t = state.step
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        m = state.m.setdefault(i, np.zeros_like(p.data))
        v = state.v.setdefault(i, np.zeros_like(p.data))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)


@dataclass
class Evaluation:
    confusion: np.ndarray
    acc: float
    f1: float
    hard_mae: float
    loss: float
    predictions: np.ndarray


def evaluate(model: FusionTransformer, dataset: Dataset, indices: Sequence[int] | None = None,
             batch_size: int = 256) -> Evaluation:
    """Deterministic eval-mode pass over dataset (or the given indices)."""
    data = dataset if indices is None else dataset.subset(indices)
    if len(data) == 0:
        raise DataError("nothing to evaluate")
    preds, total = [], 0.0
    with no_grad():
        for batch in batch_iter(data, batch_size):
            result = model.forward(batch.arrays)
            total += mae_loss(result.probabilities, batch.labels).item() * len(batch.labels)
            preds.append(result.predicted)
    predictions = np.concatenate(preds)
    cm = confusion_matrix(data.labels, predictions, data.num_classes)
    return Evaluation(
        confusion=cm,
        acc=multiclass_avg_accuracy(cm),
        f1=multiclass_avg_f1(cm),
        hard_mae=hard_label_mae(data.labels, predictions),
        loss=total / len(data),
        predictions=predictions,
    )


@dataclass
class TrainResult:
    loss_trace: list[float]
    test_loss_trace: list[float]
    steps: int


def check_compatible(cfg: ModelConfig, dataset: Dataset):
    """Raise DataError unless the model's modalities match the dataset layout."""
    if len(cfg.modalities) != len(dataset.specs):
        raise DataError(f"model has {len(cfg.modalities)} modalities, dataset has {len(dataset.specs)}")
    for mine, theirs in zip(cfg.modalities, dataset.specs):
        if not mine.same_layout(theirs):
            raise DataError(
                f"modality {mine.name!r}: model expects {mine.channels}x{mine.input_dim}, "
                f"dataset has {theirs.name!r} {theirs.channels}x{theirs.input_dim}"
            )
    if cfg.num_classes != dataset.num_classes:
        raise DataError(f"model predicts {cfg.num_classes} classes, dataset has {dataset.num_classes}")


def train(model: FusionTransformer, dataset: Dataset, tcfg: TrainConfig,
          test_set: Dataset | None = None, seed: int | None = None) -> TrainResult:
    """Mini-batch Adam on the MAE loss; returns the per-epoch mean loss trace.

    Conv kernels, time projections and the head all sit on the same tape.
    """
    tcfg.validate()
    if len(dataset) == 0:
        raise DataError("cannot train on an empty dataset")
    check_compatible(model.cfg, dataset)
    seed = tcfg.seed if seed is None else seed
    dropout_rng = np.random.default_rng([seed, 1])
    shuffle_rng = np.random.default_rng([seed, 2])
    params = model.parameters()
    state = AdamState()
    trace, test_trace = [], []
    step = 0
    for epoch in range(tcfg.epochs):
        total = 0.0
        epoch_seed = int(shuffle_rng.integers(0, 2 ** 32))
        for batch in batch_iter(dataset, tcfg.batch_size, shuffle=True, seed=epoch_seed):
            model.store.zero_grad()
            with ComputationTape() as tape:
                result = model.forward(batch.arrays, training=True, rng=dropout_rng)
                loss = mae_loss(result.probabilities, batch.labels)
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingError("non-finite loss", step=step, loss=value)
                tape.backward(loss)
            adam_step(params, [p.grad for p in params], state, tcfg.learning_rate,
                      tcfg.beta1, tcfg.beta2, tcfg.adam_eps)
            total += value * len(batch.labels)
            step += 1
        trace.append(total / len(dataset))
        if test_set is not None and tcfg.track_test_loss:
            test_trace.append(evaluate(model, test_set).loss)
        logger.info("epoch %d/%d: mean loss %.6f", epoch + 1, tcfg.epochs, trace[-1])
    return TrainResult(trace, test_trace, step)


def kfold_split(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Shuffle 0..n-1 and cut into k folds whose sizes differ by at most one."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if n < k:
        raise ConfigError(f"cannot split {n} samples into {k} folds")
    order = np.random.default_rng(seed).permutation(n)
    return np.array_split(order, k)


def holdout_split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(train, test) indices with round(n * fraction) test samples, at least one of each."""
    if n < 2:
        raise ConfigError(f"holdout needs at least two samples, got {n}")
    n_test = min(max(1, round(n * fraction)), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    return order[n_test:], order[:n_test]


@dataclass
class FoldJob:
    fold: int
    dataset: Dataset
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    train_idx: np.ndarray
    test_idx: np.ndarray
    checkpoint_dir: Path | None


def run_fold(job: FoldJob) -> FoldResult:
    """Train and evaluate one fold; its seed is the run seed plus the fold index."""
    seed = job.train_cfg.seed + job.fold
    logger.info("fold %d: %d train / %d test samples", job.fold, len(job.train_idx), len(job.test_idx))
    model = build_variant(job.model_cfg, seed=seed)
    train_set = job.dataset.subset(job.train_idx)
    test_set = job.dataset.subset(job.test_idx)
    try:
        result = train(model, train_set, job.train_cfg, test_set=test_set, seed=seed)
    except TrainingError as e:
        raise TrainingError("non-finite loss", step=e.step, loss=e.loss, fold=job.fold) from None
    ev = evaluate(model, test_set)
    if job.checkpoint_dir is not None:
        save_checkpoint(model, Path(job.checkpoint_dir) / f"fold_{job.fold:02d}.hsck")
    logger.info("fold %d: acc %.4f, f1 %.4f", job.fold, ev.acc, ev.f1)
    return FoldResult(
        fold=job.fold,
        train_size=len(job.train_idx),
        test_size=len(job.test_idx),
        loss_trace=result.loss_trace,
        acc=ev.acc,
        f1=ev.f1,
        confusion=ev.confusion.tolist(),
        hard_mae=ev.hard_mae,
        test_indices=[int(i) for i in job.test_idx],
        test_loss_trace=result.test_loss_trace,
    )


def _sample_std(values: list[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def aggregate(folds: list[FoldResult], seed: int, descriptor, config: dict | None = None) -> CrossValidationReport:
    accs = [f.acc for f in folds]
    f1s = [f.f1 for f in folds]
    return CrossValidationReport(
        folds=folds,
        acc_mean=float(np.mean(accs)),
        acc_std=_sample_std(accs),
        f1_mean=float(np.mean(f1s)),
        f1_std=_sample_std(f1s),
        seed=seed,
        variant=descriptor,
        config=config or {},
    )


def _fold_jobs(dataset: Dataset, model_cfg: ModelConfig, train_cfg: TrainConfig,
               checkpoint_dir: Path | None) -> list[FoldJob]:
    if train_cfg.k_folds == 1:
        train_idx, test_idx = holdout_split(len(dataset), train_cfg.holdout_fraction, train_cfg.seed)
        return [FoldJob(0, dataset, model_cfg, train_cfg, train_idx, test_idx, checkpoint_dir)]
    folds = kfold_split(len(dataset), train_cfg.k_folds, train_cfg.seed)
    jobs = []
    for i, test_idx in enumerate(folds):
        train_idx = np.concatenate([f for j, f in enumerate(folds) if j != i])
        jobs.append(FoldJob(i, dataset, model_cfg, train_cfg, train_idx, test_idx, checkpoint_dir))
    return jobs


def cross_validate(dataset: Dataset, model_cfg: ModelConfig, train_cfg: TrainConfig, jobs: int = 1,
                   checkpoint_dir: Path | None = None, config_echo: dict | None = None) -> CrossValidationReport:
    """K-fold train/evaluate (or one holdout split when k_folds == 1), then mean and sample std."""
    model_cfg.validate()
    train_cfg.validate()
    check_compatible(model_cfg, dataset)
    fold_jobs = _fold_jobs(dataset, model_cfg, train_cfg, checkpoint_dir)
    descriptor = describe_variant(build_variant(model_cfg, seed=train_cfg.seed))
    results: list[FoldResult] = []
    if jobs > 1 and len(fold_jobs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_fold, job) for job in fold_jobs]
            for job, fut in zip(fold_jobs, futures):
                results.append(_collect(job.fold, fut.result))
    else:
        for job in fold_jobs:
            results.append(_collect(job.fold, lambda job=job: run_fold(job)))
    return aggregate(results, train_cfg.seed, descriptor, config_echo)


def _collect(fold: int, get) -> FoldResult:
    try:
        return get()
    except (TrainingError, ConfigError, DataError):
        raise
    except HusformerError as e:
        raise HusformerError(f"fold {fold} failed: {e}") from e
