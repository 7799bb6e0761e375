import numpy as np
import pytest

from ablations import build_variant
from checkpoint import load_checkpoint
from data import default_specs, select_modalities, synthesize_dataset
from errors import ConfigError, DataError, TrainingError
from models import ModelConfig, TrainConfig
from tensor import Tensor
from training import (
    AdamState, adam_step, check_compatible, cross_validate, evaluate, holdout_split, kfold_split,
    mae_loss, train,
)


def small_model_cfg(specs, num_classes=3, variant="husformer") -> ModelConfig:
    return ModelConfig(
        modalities=specs, hidden_dim=8, heads=2, cm_layers=1, sa_layers=1, ffn_dim=8,
        attn_dropout=0.05, output_dropout=0.05, num_classes=num_classes, variant=variant,
    )


@pytest.fixture
def toy_dataset():
    return synthesize_dataset(2, None, 40, 3, coupling=0.0, seed=11, noise=0.1)


class TestLoss:
    def test_perfect_prediction(self):
        assert mae_loss(Tensor([[0.0, 1.0, 0.0]]), [1]).item() == 0.0

    def test_uniform_two_class(self):
        assert mae_loss(Tensor([[0.5, 0.5]]), [0]).item() == 1.0

    def test_batch_mean(self, rng):
        p = rng.dirichlet(np.ones(4), size=2)
        labels = [3, 1]
        per_sample = [np.abs(p[i] - np.eye(4)[labels[i]]).sum() for i in range(2)]
        assert mae_loss(Tensor(p), labels).item() == pytest.approx(np.mean(per_sample), abs=1e-15)

    def test_label_out_of_range(self):
        with pytest.raises(DataError):
            mae_loss(Tensor([[0.5, 0.5]]), [2])


class TestAdam:
    def test_zero_gradient(self):
        p = Tensor([1.0, -2.0], requires_grad=True)
        adam_step([p], [np.zeros(2)], AdamState(), lr=0.1)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_is_signed_lr(self):
        p = Tensor([1.0, 1.0, 1.0], requires_grad=True)
        adam_step([p], [np.array([0.3, -7.0, 1e-3])], AdamState(), lr=0.01)
        np.testing.assert_allclose(p.data, [0.99, 1.01, 0.99], atol=1e-6)

    def test_quadratic_descent(self):
        p = Tensor([1.0], requires_grad=True)
        state = AdamState()
        trace = [abs(p.data[0])]
        for _ in range(50):
            adam_step([p], [2.0 * p.data], state, lr=0.1)
            trace.append(abs(p.data[0]))
        assert all(b < a for a, b in zip(trace, trace[1:]))

    def test_none_gradient_skipped(self):
        p = Tensor([1.0], requires_grad=True)
        adam_step([p], [None], AdamState(), lr=0.1)
        assert p.data[0] == 1.0


class TestTrain:
    def test_zero_epochs_keeps_initialisation(self, toy_dataset):
        model = build_variant(small_model_cfg(toy_dataset.specs), seed=0)
        before = [p.data.copy() for p in model.parameters()]
        result = train(model, toy_dataset, TrainConfig(epochs=0, batch_size=8))
        assert result.loss_trace == []
        for b, p in zip(before, model.parameters()):
            np.testing.assert_array_equal(b, p.data)

    def test_seeded_runs_are_identical(self, toy_dataset):
        traces = []
        for _ in range(2):
            model = build_variant(small_model_cfg(toy_dataset.specs), seed=5)
            traces.append(train(model, toy_dataset, TrainConfig(epochs=2, batch_size=8, seed=5)).loss_trace)
        assert traces[0] == traces[1]

    def test_loss_decreases_on_separable_data(self):
        data = synthesize_dataset(2, None, 60, 2, coupling=0.0, seed=2, noise=0.05)
        model = build_variant(small_model_cfg(data.specs, num_classes=2), seed=1)
        trace = train(model, data, TrainConfig(epochs=8, batch_size=10, learning_rate=5e-3, seed=1)).loss_trace
        assert len(trace) == 8
        assert trace[-1] < trace[0]

    def test_non_finite_loss_aborts(self, toy_dataset):
        model = build_variant(small_model_cfg(toy_dataset.specs))
        model.head.zeta_beta.bias.data[0] = np.nan
        with pytest.raises(TrainingError) as info:
            train(model, toy_dataset, TrainConfig(epochs=1, batch_size=8))

    def test_test_loss_trace(self, toy_dataset):
        model = build_variant(small_model_cfg(toy_dataset.specs))
        result = train(model, toy_dataset.subset(range(30)), TrainConfig(epochs=3, batch_size=8, track_test_loss=True),
                       test_set=toy_dataset.subset(range(30, 40)))
        assert len(result.test_loss_trace) == 3

    def test_incompatible_dataset(self, toy_dataset):
        cfg = small_model_cfg(default_specs(3))
        with pytest.raises(DataError):
            check_compatible(cfg, toy_dataset)
        with pytest.raises(DataError):
            check_compatible(small_model_cfg(toy_dataset.specs, num_classes=4), toy_dataset)


class TestEvaluate:
    def test_confusion_counts_test_set(self, toy_dataset):
        model = build_variant(small_model_cfg(toy_dataset.specs))
        ev = evaluate(model, toy_dataset, indices=range(7), batch_size=3)
        assert ev.confusion.sum() == 7
        assert 0.0 <= ev.acc <= 1.0 and 0.0 <= ev.f1 <= 1.0

    def test_repeatable(self, toy_dataset):
        model = build_variant(small_model_cfg(toy_dataset.specs))
        a, b = evaluate(model, toy_dataset), evaluate(model, toy_dataset)
        assert (a.acc, a.f1, a.loss) == (b.acc, b.f1, b.loss)


class TestSplits:
    def test_singleton_folds(self):
        folds = kfold_split(10, 10, seed=0)
        assert all(len(f) == 1 for f in folds)
        assert sorted(int(f[0]) for f in folds) == list(range(10))

    def test_remainder_distribution(self):
        sizes = sorted(len(f) for f in kfold_split(103, 10, seed=1))
        assert sizes == [10] * 7 + [11] * 3

    def test_partition_property(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            n = int(rng.integers(10, 500))
            seed = int(rng.integers(0, 2 ** 31))
            folds = kfold_split(n, 10, seed)
            joined = np.concatenate(folds)
            assert sorted(joined.tolist()) == list(range(n))
            sizes = [len(f) for f in folds]
            assert max(sizes) - min(sizes) <= 1

    def test_too_few_samples(self):
        with pytest.raises(ConfigError):
            kfold_split(5, 10, seed=0)

    def test_holdout(self):
        train_idx, test_idx = holdout_split(50, 0.2, seed=3)
        assert len(test_idx) == 10 and len(train_idx) == 40
        assert set(train_idx).isdisjoint(test_idx)


class TestCrossValidate:
    def test_two_folds_on_four_samples(self):
        data = synthesize_dataset(2, None, 4, 2, coupling=0.0, seed=0)
        report = cross_validate(data, small_model_cfg(data.specs, num_classes=2),
                                TrainConfig(epochs=1, batch_size=2, k_folds=2))
        assert [f.test_size for f in report.folds] == [2, 2]
        for f in report.folds:
            assert np.sum(f.confusion) == f.test_size

    def test_aggregates(self, toy_dataset, quick_train):
        quick_train.k_folds = 4
        report = cross_validate(toy_dataset, small_model_cfg(toy_dataset.specs), quick_train)
        accs = [f.acc for f in report.folds]
        assert report.acc_mean == pytest.approx(sum(accs) / len(accs), abs=1e-15)
        mean = sum(accs) / len(accs)
        assert report.acc_std == pytest.approx((sum((a - mean) ** 2 for a in accs) / (len(accs) - 1)) ** 0.5, abs=1e-12)
        assert report.variant.cross_modal_transformers == 2

    def test_deterministic_report(self, toy_dataset, quick_train):
        cfg = small_model_cfg(toy_dataset.specs)
        a = cross_validate(toy_dataset, cfg, quick_train).to_dict()
        b = cross_validate(toy_dataset, cfg, quick_train).to_dict()
        assert a == b

    def test_process_pool_matches_serial(self, toy_dataset, quick_train):
        cfg = small_model_cfg(toy_dataset.specs)
        serial = cross_validate(toy_dataset, cfg, quick_train, jobs=1).to_dict()
        pooled = cross_validate(toy_dataset, cfg, quick_train, jobs=2).to_dict()
        assert serial == pooled

    def test_checkpoint_reproduces_fold_metrics(self, toy_dataset, quick_train, tmp_path):
        report = cross_validate(toy_dataset, small_model_cfg(toy_dataset.specs), quick_train, checkpoint_dir=tmp_path)
        for fold in report.folds:
            model = load_checkpoint(tmp_path / f"fold_{fold.fold:02d}.hsck")
            ev = evaluate(model, toy_dataset, fold.test_indices)
            assert (ev.acc, ev.f1, ev.confusion.tolist()) == (fold.acc, fold.f1, fold.confusion)

    def test_holdout_run(self, toy_dataset):
        report = cross_validate(toy_dataset, small_model_cfg(toy_dataset.specs),
                                TrainConfig(epochs=1, batch_size=8, k_folds=1, holdout_fraction=0.25))
        assert len(report.folds) == 1
        assert report.folds[0].test_size == 10
        assert report.acc_std == 0.0

    def test_fold_failure_names_fold(self, toy_dataset, quick_train):
        toy_dataset.arrays[0][...] = np.inf
        with pytest.raises(TrainingError) as info:
            cross_validate(toy_dataset, small_model_cfg(toy_dataset.specs), quick_train)
        assert info.value.fold == 0
        assert "fold 0" in str(info.value)

    def test_pooled_fold_failure_names_fold(self, toy_dataset, quick_train):
        toy_dataset.arrays[0][...] = np.inf
        with pytest.raises(TrainingError) as info:
            cross_validate(toy_dataset, small_model_cfg(toy_dataset.specs), quick_train, jobs=2)
        assert info.value.fold == 0
        assert "fold 0" in str(info.value)


@pytest.mark.slow
class TestLearningExperiments:
    def test_label_independent_inputs_stay_near_chance(self):
        accs = []
        for seed in range(5):
            data = synthesize_dataset(2, None, 300, 3, coupling=0.0, seed=seed)
            data.labels[:] = np.random.default_rng(seed + 100).permutation(np.arange(300) % 3)
            cfg = small_model_cfg(data.specs)
            report = cross_validate(data, cfg, TrainConfig(epochs=3, batch_size=32, k_folds=10, seed=seed))
            accs.append(report.acc_mean)
        assert all(0.55 <= a <= 0.78 for a in accs)

    def test_single_modality_is_blind_when_fully_coupled(self):
        data = synthesize_dataset(3, None, 2000, 3, coupling=1.0, seed=0)
        only = select_modalities(data, ["m0"])
        report = cross_validate(only, small_model_cfg(only.specs),
                                TrainConfig(epochs=5, batch_size=64, learning_rate=2e-3, k_folds=10))
        assert 0.55 <= report.acc_mean <= 0.78

    def test_single_modality_suffices_when_uncoupled(self):
        data = synthesize_dataset(3, None, 2000, 3, coupling=0.0, seed=0)
        only = select_modalities(data, ["m0"])
        report = cross_validate(only, small_model_cfg(only.specs),
                                TrainConfig(epochs=10, batch_size=64, learning_rate=2e-3, k_folds=10))
        assert report.acc_mean > 0.85

    def _desk_cfg(self, specs, variant):
        return ModelConfig(
            modalities=specs, hidden_dim=40, heads=3, d_k=8, d_v=8, cm_layers=2, sa_layers=1, ffn_dim=40,
            attn_dropout=0.05, output_dropout=0.1, num_classes=3, variant=variant,
        )

    def test_cross_modal_learning(self):
        data = synthesize_dataset(3, None, 2000, 3, coupling=1.0, seed=7)
        accs = []
        for seed in range(3):
            report = cross_validate(data, self._desk_cfg(data.specs, "husformer"),
                                    TrainConfig(epochs=20, batch_size=64, learning_rate=2e-3, k_folds=10, seed=seed))
            accs.append(report.acc_mean)
        assert np.mean(accs) >= 0.90

    def test_removing_cross_modal_stage_hurts(self):
        data = synthesize_dataset(3, None, 2000, 3, coupling=1.0, seed=7)
        gaps = []
        for seed in range(5):
            tcfg = TrainConfig(epochs=20, batch_size=64, learning_rate=2e-3, k_folds=10, seed=seed)
            full = cross_validate(data, self._desk_cfg(data.specs, "husformer"), tcfg).acc_mean
            fuse = cross_validate(data, self._desk_cfg(data.specs, "husfuse"), tcfg).acc_mean
            gaps.append(full - fuse)
        assert np.mean(gaps) > 0
