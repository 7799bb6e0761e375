import pytest

from ablations import build_variant, describe_variant
from errors import ConfigError
from models import ModelConfig
from presets import preset_hyperparameters, preset_names, preset_specs


def test_mocas_fusion_length():
    cfg = ModelConfig(modalities=preset_specs("mocas-raw"), hidden_dim=10, heads=2)
    assert sorted(m.channels for m in cfg.modalities) == [1, 1, 1, 5, 25]
    assert cfg.fusion_length == 33


def test_wesad_pairwise_transformers():
    specs = preset_specs("wesad")
    assert len(specs) == 6
    cfg = ModelConfig(modalities=specs, hidden_dim=4, heads=1, cm_layers=1, sa_layers=1, ffn_dim=4, variant="huspair")
    assert describe_variant(build_variant(cfg)).cross_modal_transformers == 30


def test_kernel_size_applied():
    assert {s.kernel_size for s in preset_specs("cogload", kernel_size=3)} == {3}


def test_specs_are_fresh_copies():
    preset_specs("deap-raw")[0].channels = 1
    assert preset_specs("deap-raw")[0].channels == 32


def test_every_preset_builds_a_valid_model():
    for name in preset_names():
        hp = preset_hyperparameters(name)
        cfg = ModelConfig(
            modalities=preset_specs(name), hidden_dim=hp["hidden_dim"], heads=hp["heads"],
            d_k=hp.get("d_k"), d_v=hp.get("d_v"), attn_dropout=hp["attn_dropout"],
            output_dropout=hp["output_dropout"],
        )
        cfg.validate()
        assert cfg.d_k * hp["heads"] <= 40


@pytest.mark.parametrize("lookup", [preset_specs, preset_hyperparameters])
def test_unknown_preset(lookup):
    with pytest.raises(ConfigError, match="unknown preset"):
        lookup("amigos")
