"""Run configuration loading and viewer settings."""

import json
import logging
import os
import sys
from pathlib import Path

from data import read_header
from errors import ConfigError
from models import ModalitySpec, ModelConfig, RunConfig, TrainConfig
from presets import preset_hyperparameters

logger = logging.getLogger(__name__)

APP_NAME = "ModalFuse"
RECENTS_MAX = 15

REQUIRED_KEYS = ("dataset", "output_dir")

DEFAULT_RUN_CONFIG = {
    "preset": None,  # str | None - corpus hyper-parameters beneath explicit keys
    "variant": "husformer",  # "husformer" | "husfuse" | "huspair"
    "modalities": None,  # list[str] | None - restrict to these dataset modalities
    "hidden_dim": 40,
    "heads": 5,
    "cm_layers": 4,
    "sa_layers": 2,
    "d_k": None,  # int | None - hidden_dim // heads when divisible
    "d_v": None,
    "ffn_dim": None,  # int | None - 4 * hidden_dim
    "attn_dropout": 0.1,
    "output_dropout": 0.1,
    "kernel_sizes": 3,  # int, or dict[modality name, int]
    "positional_encoding": True,
    "batch_size": 64,
    "learning_rate": 1e-3,
    "epochs": 40,
    "beta1": 0.9,
    "beta2": 0.999,
    "adam_eps": 1e-8,
    "k_folds": 10,
    "holdout_fraction": 0.2,  # used only when k_folds == 1
    "seed": 0,
    "jobs": 1,
    "track_test_loss": False,
    "dump_attention": [],  # list[int] - sample indices dumped after training
}

_INT_KEYS = {"hidden_dim", "heads", "cm_layers", "sa_layers", "d_k", "d_v", "ffn_dim", "batch_size",
             "epochs", "k_folds", "seed", "jobs"}
_FLOAT_KEYS = {"attn_dropout", "output_dropout", "learning_rate", "beta1", "beta2", "adam_eps",
               "holdout_fraction"}
_BOOL_KEYS = {"positional_encoding", "track_test_loss"}
_NULLABLE = {"d_k", "d_v", "ffn_dim", "modalities", "preset"}


def _check_types(cfg: dict):
    for key, value in cfg.items():
        if value is None and key in _NULLABLE:
            continue
        if key in _INT_KEYS and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        if key in _FLOAT_KEYS and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        if key in _BOOL_KEYS and not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false, got {value!r}")
    if not isinstance(cfg["variant"], str):
        raise ConfigError(f"variant must be a string, got {cfg['variant']!r}")
    for key in REQUIRED_KEYS:
        if not isinstance(cfg[key], str) or not cfg[key]:
            raise ConfigError(f"{key} must be a non-empty path string, got {cfg[key]!r}")
    dumps = cfg["dump_attention"]
    if not isinstance(dumps, list) or any(isinstance(i, bool) or not isinstance(i, int) or i < 0 for i in dumps):
        raise ConfigError(f"dump_attention must be a list of sample indices, got {dumps!r}")
    names = cfg["modalities"]
    if names is not None and (not isinstance(names, list) or not names
                              or not all(isinstance(n, str) for n in names)):
        raise ConfigError(f"modalities must be a non-empty list of names, got {names!r}")
    if cfg["jobs"] < 1:
        raise ConfigError(f"jobs must be >= 1, got {cfg['jobs']}")


def _kernel_sizes(value, names: list[str]) -> dict[str, int]:
    if isinstance(value, int) and not isinstance(value, bool):
        return {n: value for n in names}
    if isinstance(value, dict):
        unknown = sorted(set(value) - set(names))
        if unknown:
            raise ConfigError(f"kernel_sizes names unknown modalities {unknown}")
        default = DEFAULT_RUN_CONFIG["kernel_sizes"]
        sizes = {n: value.get(n, default) for n in names}
        for n, k in sizes.items():
            if isinstance(k, bool) or not isinstance(k, int):
                raise ConfigError(f"kernel_sizes[{n!r}] must be an integer, got {k!r}")
        return sizes
    raise ConfigError(f"kernel_sizes must be an integer or an object, got {value!r}")


def merge_run_config(raw: dict) -> dict:
    """Reject unknown or missing keys, then fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("run config must be a JSON object")
    unknown = sorted(set(raw) - set(DEFAULT_RUN_CONFIG) - set(REQUIRED_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    missing = [k for k in REQUIRED_KEYS if k not in raw]
    if missing:
        raise ConfigError(f"missing required config keys: {', '.join(missing)}")
    cfg = dict(raw)
    preset = cfg.get("preset")
    if preset is not None:
        if not isinstance(preset, str):
            raise ConfigError(f"preset must be a string, got {preset!r}")
        for k, v in preset_hyperparameters(preset).items():
            if k not in cfg:
                logger.debug("config: %s from preset %s is %r", k, preset, v)
                cfg[k] = v
    for k, v in DEFAULT_RUN_CONFIG.items():
        if k not in cfg:
            logger.debug("config: %s defaults to %r", k, v)
            cfg[k] = v
    _check_types(cfg)
    return cfg


def build_run_config(raw: dict, specs: list[ModalitySpec], num_classes: int, base_dir: Path = Path(".")) -> RunConfig:
    """Validated RunConfig for a dataset with the given modality layout."""
    cfg = merge_run_config(raw)
    if cfg["modalities"] is not None:
        index = {s.name: s for s in specs}
        missing = [n for n in cfg["modalities"] if n not in index]
        if missing:
            raise ConfigError(f"modalities {missing} are not in the dataset ({', '.join(index)})")
        specs = [index[n] for n in cfg["modalities"]]
    kernels = _kernel_sizes(cfg["kernel_sizes"], [s.name for s in specs])
    model = ModelConfig(
        modalities=[ModalitySpec(s.name, s.channels, s.input_dim, kernels[s.name]) for s in specs],
        hidden_dim=cfg["hidden_dim"],
        heads=cfg["heads"],
        cm_layers=cfg["cm_layers"],
        sa_layers=cfg["sa_layers"],
        d_k=cfg["d_k"],
        d_v=cfg["d_v"],
        ffn_dim=cfg["ffn_dim"],
        attn_dropout=float(cfg["attn_dropout"]),
        output_dropout=float(cfg["output_dropout"]),
        num_classes=num_classes,
        variant=cfg["variant"],
        positional_encoding=cfg["positional_encoding"],
    )
    model.validate()
    train = TrainConfig(
        batch_size=cfg["batch_size"],
        learning_rate=float(cfg["learning_rate"]),
        epochs=cfg["epochs"],
        beta1=float(cfg["beta1"]),
        beta2=float(cfg["beta2"]),
        adam_eps=float(cfg["adam_eps"]),
        k_folds=cfg["k_folds"],
        holdout_fraction=float(cfg["holdout_fraction"]),
        seed=cfg["seed"],
        track_test_loss=cfg["track_test_loss"],
    )
    train.validate()
    base_dir = Path(base_dir)
    return RunConfig(
        model=model,
        train=train,
        dataset=base_dir / cfg["dataset"],
        output_dir=base_dir / cfg["output_dir"],
        jobs=cfg["jobs"],
        dump_attention=list(cfg["dump_attention"]),
        raw=cfg,
    )


def load_run_config(path: Path, overrides: dict | None = None) -> RunConfig:
    """Read a JSON run config; relative paths resolve against its directory."""
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    if isinstance(raw, dict) and overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    cfg = merge_run_config(raw)
    header = read_header(path.parent / cfg["dataset"])
    return build_run_config(cfg, header.specs, header.num_classes, base_dir=path.parent)


# Attention viewer settings

DEFAULT_VIEWER_SETTINGS = {
    "recent_dumps": [],  # list[str]
    "last_dump": None,  # str | None
    "window_geometry": None,  # str | None
}


def _config_dir() -> Path:
    """Get the platform-specific configuration directory."""
    if sys.platform.startswith("win"):
        base = os.environ.get("APPDATA") or str(Path.home() / "AppData" / "Roaming")
        return Path(base) / APP_NAME
    elif sys.platform == "darwin":
        return Path.home() / "Library" / "Application Support" / APP_NAME
    else:
        base = os.environ.get("XDG_CONFIG_HOME") or str(Path.home() / ".config")
        return Path(base) / APP_NAME


def _settings_path() -> Path:
    return _config_dir() / "viewer.json"


def load_viewer_settings() -> dict:
    """Load viewer settings, falling back to defaults."""
    try:
        with _settings_path().open("r", encoding="utf-8") as f:
            settings = json.load(f)
        for k, v in DEFAULT_VIEWER_SETTINGS.items():
            settings.setdefault(k, v)
        return settings
    except (OSError, ValueError):
        return {k: (list(v) if isinstance(v, list) else v) for k, v in DEFAULT_VIEWER_SETTINGS.items()}


def save_viewer_settings(settings: dict):
    d = _config_dir()
    d.mkdir(parents=True, exist_ok=True)
    tmp = d / ".viewer.tmp"
    with tmp.open("w", encoding="utf-8") as f:
        json.dump(settings, f, indent=2)
    tmp.replace(_settings_path())


def push_recent_dump(settings: dict, dump_path: Path):
    """Move a dump file to the front of the recent list."""
    s = str(dump_path)
    recents = [r for r in settings.get("recent_dumps", []) if r != s]
    recents.insert(0, s)
    settings["recent_dumps"] = recents[:RECENTS_MAX]
    settings["last_dump"] = s
