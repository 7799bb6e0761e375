"""Modality layouts and hyper-parameters of the corpora the model was evaluated on.

Layouts are channels x samples per window. The corpora themselves are not
loaded here; the presets drive shape checks, parameter-count comparisons and
`synth --preset`.
"""

from __future__ import annotations

from errors import ConfigError
from models import ModalitySpec

# name -> [(modality, channels, samples per window)]
_LAYOUTS: dict[str, list[tuple[str, int, int]]] = {
    "deap-raw": [("eeg", 32, 512), ("emg", 4, 512), ("eog", 4, 512), ("gsr", 1, 512)],
    "deap-preprocessed": [("eeg", 32, 128), ("emg", 2, 128), ("eog", 2, 128), ("gsr", 1, 128)],
    "wesad": [
        ("gsr_chest", 1, 700), ("bvp_wrist", 1, 64), ("emg_chest", 1, 700),
        ("ecg_chest", 1, 700), ("resp_chest", 1, 700), ("gsr_wrist", 1, 4),
    ],
    "mocas-raw": [("eeg", 5, 128), ("eeg_pow", 25, 8), ("bvp", 1, 128), ("gsr", 1, 6), ("ear", 1, 1)],
    "mocas-preprocessed": [("eeg", 5, 128), ("eeg_pow", 25, 8), ("bvp", 1, 128), ("gsr", 1, 6), ("ear", 1, 1)],
    "cogload": [("hr", 1, 1), ("ibi", 1, 1), ("gsr", 1, 1), ("skt", 1, 1), ("acc", 2, 1)],
}

MODALITY_PRESETS: dict[str, list[ModalitySpec]] = {
    name: [ModalitySpec(m, channels, samples) for m, channels, samples in layout]
    for name, layout in _LAYOUTS.items()
}

# three heads do not divide 40; those presets fix d_k = d_v = 13
HYPERPARAMETER_PRESETS: dict[str, dict] = {
    "deap-raw": {"batch_size": 1024, "learning_rate": 2e-3, "hidden_dim": 40, "heads": 3, "d_k": 13, "d_v": 13,
                 "attn_dropout": 0.1, "output_dropout": 0.1, "epochs": 20},
    "deap-preprocessed": {"batch_size": 1024, "learning_rate": 2e-3, "hidden_dim": 40, "heads": 3, "d_k": 13, "d_v": 13,
                          "attn_dropout": 0.1, "output_dropout": 0.1, "epochs": 20},
    "wesad": {"batch_size": 512, "learning_rate": 1e-3, "hidden_dim": 40, "heads": 3, "d_k": 13, "d_v": 13,
              "attn_dropout": 0.05, "output_dropout": 0.1, "epochs": 60},
    "mocas-raw": {"batch_size": 64, "learning_rate": 1e-3, "hidden_dim": 40, "heads": 5,
                  "attn_dropout": 0.05, "output_dropout": 0.1, "epochs": 40},
    "mocas-preprocessed": {"batch_size": 128, "learning_rate": 1e-3, "hidden_dim": 40, "heads": 5,
                           "attn_dropout": 0.05, "output_dropout": 0.1, "epochs": 40},
    "cogload": {"batch_size": 1024, "learning_rate": 1e-3, "hidden_dim": 40, "heads": 3, "d_k": 13, "d_v": 13,
                "attn_dropout": 0.1, "output_dropout": 0.1, "epochs": 80},
}


def preset_names() -> list[str]:
    return sorted(MODALITY_PRESETS)


def preset_specs(name: str, kernel_size: int = 1) -> list[ModalitySpec]:
    """Fresh ModalitySpec list for a corpus layout."""
    if name not in MODALITY_PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {', '.join(preset_names())}")
    return [ModalitySpec(s.name, s.channels, s.input_dim, kernel_size) for s in MODALITY_PRESETS[name]]


def preset_hyperparameters(name: str) -> dict:
    if name not in HYPERPARAMETER_PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {', '.join(preset_names())}")
    return dict(HYPERPARAMETER_PRESETS[name])
