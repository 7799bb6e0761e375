"""Flatten an attention dump JSON document into labelled matrices."""

import json
from pathlib import Path

import numpy as np

from errors import DataError


def load_dump(path: Path) -> dict:
    try:
        with Path(path).open("r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: not an attention dump ({e})") from None
    missing = [k for k in ("cross_modal", "self", "z_f") if k not in doc]
    if missing:
        raise DataError(f"{path}: missing keys {missing}")
    return doc


def matrix_entries(doc: dict) -> list[tuple[str, np.ndarray]]:
    """(label, 2-D matrix) pairs in sidebar order.

    Head-averaged final-layer matrices come first, then every layer and head,
    then Z_F.
    """
    entries = []
    for key, m in doc["cross_modal"].items():
        entries.append((f"cross {key} (mean)", np.asarray(m, dtype=np.float64)))
    entries.append(("self (mean)", np.asarray(doc["self"], dtype=np.float64)))
    for key, layers in doc.get("cross_modal_layers", {}).items():
        for u, heads in enumerate(layers):
            for h, m in enumerate(heads):
                entries.append((f"cross {key} L{u} H{h}", np.asarray(m, dtype=np.float64)))
    for u, heads in enumerate(doc.get("self_layers", [])):
        for h, m in enumerate(heads):
            entries.append((f"self L{u} H{h}", np.asarray(m, dtype=np.float64)))
    entries.append(("z_f", np.asarray(doc["z_f"], dtype=np.float64)))
    return entries


def describe(doc: dict) -> str:
    label = doc.get("label")
    truth = "?" if label is None else str(label)
    return f"{doc.get('variant', '?')}: predicted {doc.get('predicted', '?')}, label {truth}"
