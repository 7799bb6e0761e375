import numpy as np
import pytest

from models import ModalitySpec, ModelConfig, TrainConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow training experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_specs():
    return [ModalitySpec("a", 2, 4, kernel_size=3), ModalitySpec("b", 3, 5, kernel_size=1)]


@pytest.fixture
def tiny_cfg(tiny_specs):
    """Two modalities, D=8, two heads, one layer per stack."""
    return ModelConfig(
        modalities=tiny_specs, hidden_dim=8, heads=2, cm_layers=1, sa_layers=1, ffn_dim=8,
        attn_dropout=0.1, output_dropout=0.1, num_classes=3,
    )


@pytest.fixture
def tiny_batch(tiny_specs, rng):
    inputs = [rng.standard_normal((2, s.channels, s.input_dim)) for s in tiny_specs]
    labels = np.array([0, 2])
    return inputs, labels


@pytest.fixture
def mocas_specs():
    from presets import preset_specs
    return preset_specs("mocas-raw")


@pytest.fixture
def quick_train():
    return TrainConfig(batch_size=8, learning_rate=5e-3, epochs=2, k_folds=2, seed=3)
