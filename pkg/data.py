"""HSF1 dataset files, batching, and the synthetic multi-modal generator.

HSF1 layout (all integers little-endian):

    magic "HSF1" | u32 version | u32 n | u32 c
    n x (u32 name_len | name UTF-8 | u32 L_i | u32 D_i)
    u32 N
    N x record, record = per-modality L_i*D_i real64 (row-major, header order) | u16 label

A converter from a public corpus would write one record per window, e.g.
raw DEAP's 32 x 512 EEG window as an L=32, D=512 modality.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from errors import ConfigError, DataError, DatasetFormatError
from models import Dataset, DatasetHeader, ModalitySpec, MultiModalSample

logger = logging.getLogger(__name__)

MAGIC = b"HSF1"
VERSION = 1
MAX_CLASSES = 1 << 16


def _record_dtype(specs: Sequence[ModalitySpec]) -> np.dtype:
    fields = [(f"m{i}", "<f8", (s.channels, s.input_dim)) for i, s in enumerate(specs)]
    fields.append(("label", "<u2"))
    return np.dtype(fields)


def _encode_header(header: DatasetHeader) -> bytes:
    parts = [MAGIC, struct.pack("<III", header.version, header.num_modalities, header.num_classes)]
    for spec in header.specs:
        name = spec.name.encode("utf-8")
        parts.append(struct.pack("<I", len(name)))
        parts.append(name)
        parts.append(struct.pack("<II", spec.channels, spec.input_dim))
    parts.append(struct.pack("<I", header.num_samples))
    return b"".join(parts)


def _unpack(fmt: str, buf: bytes, offset: int, what: str) -> tuple:
    size = struct.calcsize(fmt)
    if offset + size > len(buf):
        raise DatasetFormatError(f"truncated file while reading {what}", offset)
    return struct.unpack_from(fmt, buf, offset)


def decode_header(buf: bytes) -> tuple[DatasetHeader, int]:
    """Parse the header; returns it with the offset of the first record."""
    if len(buf) < 4:
        raise DatasetFormatError("truncated file while reading magic", 0)
    if buf[:4] != MAGIC:
        raise DatasetFormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}", 0)
    version, n, c = _unpack("<III", buf, 4, "header")
    if version != VERSION:
        raise DatasetFormatError(f"unsupported version {version}", 4)
    offset = 16
    specs = []
    for i in range(n):
        (name_len,) = _unpack("<I", buf, offset, f"modality {i} name length")
        offset += 4
        if offset + name_len > len(buf):
            raise DatasetFormatError(f"truncated file while reading modality {i} name", offset)
        try:
            name = buf[offset:offset + name_len].decode("utf-8")
        except UnicodeDecodeError:
            raise DatasetFormatError(f"modality {i} name is not valid UTF-8", offset) from None
        offset += name_len
        channels, input_dim = _unpack("<II", buf, offset, f"modality {name!r} shape")
        if channels < 1 or input_dim < 1:
            raise DatasetFormatError(f"modality {name!r} has empty shape {channels}x{input_dim}", offset)
        offset += 8
        specs.append(ModalitySpec(name, channels, input_dim))
    (num_samples,) = _unpack("<I", buf, offset, "sample count")
    offset += 4
    return DatasetHeader(version, c, specs, num_samples), offset


def write_dataset(dataset: Dataset, path: Path):
    """Write dataset as HSF1; round-trips bit-exactly through read_dataset."""
    if dataset.num_classes > MAX_CLASSES:
        raise ConfigError(f"at most {MAX_CLASSES} classes fit a u16 label, got {dataset.num_classes}")
    n = len(dataset)
    for spec, arr in zip(dataset.specs, dataset.arrays):
        if arr.shape != (n, spec.channels, spec.input_dim):
            raise DataError(
                f"modality {spec.name!r}: array shape {arr.shape} does not match "
                f"({n}, {spec.channels}, {spec.input_dim})"
            )
    if n and (dataset.labels.min() < 0 or dataset.labels.max() >= dataset.num_classes):
        raise DataError(f"labels out of range [0, {dataset.num_classes})")
    header = DatasetHeader(VERSION, dataset.num_classes, dataset.specs, n)
    records = np.zeros(n, dtype=_record_dtype(dataset.specs))
    for i, arr in enumerate(dataset.arrays):
        records[f"m{i}"] = arr
    records["label"] = dataset.labels
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    with tmp.open("wb") as f:
        f.write(_encode_header(header))
        f.write(records.tobytes())
    tmp.replace(path)
    logger.info("wrote %d samples (%d modalities, %d classes) to %s", n, len(dataset.specs), dataset.num_classes, path)


def read_header(path: Path) -> DatasetHeader:
    return decode_header(Path(path).read_bytes())[0]


def read_dataset(path: Path) -> Dataset:
    buf = Path(path).read_bytes()
    header, offset = decode_header(buf)
    dtype = _record_dtype(header.specs)
    expected = offset + header.num_samples * dtype.itemsize
    if len(buf) < expected:
        raise DatasetFormatError(
            f"truncated file: {header.num_samples} records need {expected} bytes, file has {len(buf)}", len(buf)
        )
    if len(buf) > expected:
        raise DatasetFormatError(f"{len(buf) - expected} trailing bytes after the last record", expected)
    if header.num_samples == 0:
        arrays = [np.zeros((0, s.channels, s.input_dim)) for s in header.specs]
        return Dataset(header.specs, arrays, np.zeros(0, dtype=np.int64), header.num_classes)
    records = np.frombuffer(buf, dtype=dtype, count=header.num_samples, offset=offset)
    labels = records["label"].astype(np.int64)
    bad = np.flatnonzero(labels >= header.num_classes)
    if bad.size:
        first = int(bad[0])
        label_offset = offset + first * dtype.itemsize + dtype.fields["label"][1]
        raise DatasetFormatError(
            f"record {first}: label {labels[first]} >= class count {header.num_classes}", label_offset
        )
    arrays = [np.array(records[f"m{i}"], dtype=np.float64) for i in range(header.num_modalities)]
    return Dataset(header.specs, arrays, labels, header.num_classes)


def dataset_from_samples(samples: Sequence[MultiModalSample], specs: list[ModalitySpec], num_classes: int) -> Dataset:
    for i, s in enumerate(samples):
        try:
            s.check(specs, num_classes)
        except DataError as e:
            raise DataError(f"sample {i}: {e}") from None
    arrays = [
        np.array([s.arrays[m] for s in samples], dtype=np.float64).reshape(len(samples), spec.channels, spec.input_dim)
        for m, spec in enumerate(specs)
    ]
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return Dataset(list(specs), arrays, labels, num_classes)


def select_modalities(dataset: Dataset, names: Sequence[str]) -> Dataset:
    """Restrict a dataset to a subset of modalities, in the given order."""
    index = {s.name: i for i, s in enumerate(dataset.specs)}
    missing = [n for n in names if n not in index]
    if missing:
        raise DataError(f"unknown modalities {missing}; dataset has {list(index)}")
    picked = [index[n] for n in names]
    return Dataset([dataset.specs[i] for i in picked], [dataset.arrays[i] for i in picked],
                   dataset.labels, dataset.num_classes)


@dataclass
class Batch:
    indices: np.ndarray
    arrays: list[np.ndarray]
    labels: np.ndarray


def batch_iter(dataset: Dataset, batch_size: int, shuffle: bool = False, seed: int = 0) -> Iterator[Batch]:
    """ceil(N / batch_size) batches; the last one may be short."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    n = len(dataset)
    order = np.random.default_rng(seed).permutation(n) if shuffle else np.arange(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield Batch(idx, [a[idx] for a in dataset.arrays], dataset.labels[idx])


def default_specs(n_modalities: int) -> list[ModalitySpec]:
    """Small mixed layouts: channel counts cycle 2, 3, 1 and window lengths 16, 24, 8."""
    channels = (2, 3, 1)
    dims = (16, 24, 8)
    return [ModalitySpec(f"m{i}", channels[i % 3], dims[i % 3], kernel_size=3) for i in range(n_modalities)]


def synthesize_dataset(n_modalities: int, specs: list[ModalitySpec] | None, num_samples: int, num_classes: int,
                       coupling: float, seed: int, noise: float = 0.5, cycles: float = 2.0) -> Dataset:
    """Band-limited sinusoids whose phases encode the class.

    Each modality carries cos(2*pi*cycles*t + phase) per channel (fixed random
    channel gains) plus Gaussian noise. The signal mixes two components:
      - absolute: phase = 2*pi*y/c + jitter, informative on its own;
      - relative: phase = phi + i*2*pi*y/c with phi uniform per sample, so a
        single modality's phase is uniform for every class while the phase
        difference of neighbouring modalities reveals y.
    Amplitudes are sqrt(1 - coupling) and sqrt(coupling) respectively.
    """
    if specs is None:
        specs = default_specs(n_modalities)
    if len(specs) != n_modalities or n_modalities < 1:
        raise ConfigError(f"need {n_modalities} modality specs, got {len(specs)}")
    for s in specs:
        s.validate()
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    if num_samples < num_classes:
        raise ConfigError(f"num_samples ({num_samples}) must be >= num_classes ({num_classes})")
    if not 0.0 <= coupling <= 1.0:
        raise ConfigError(f"coupling must lie in [0, 1], got {coupling}")
    if noise < 0:
        raise ConfigError(f"noise must be >= 0, got {noise}")

    rng = np.random.default_rng(seed)
    gains = [rng.uniform(0.5, 1.5, size=s.channels) for s in specs]
    labels = rng.integers(0, num_classes, size=num_samples)
    step = 2.0 * np.pi * labels / num_classes
    phi = rng.uniform(0.0, 2.0 * np.pi, size=num_samples)
    a_abs, a_rel = np.sqrt(1.0 - coupling), np.sqrt(coupling)

    arrays = []
    for i, (spec, g) in enumerate(zip(specs, gains)):
        t = np.arange(spec.input_dim) / spec.input_dim
        carrier = 2.0 * np.pi * cycles * t[None, :]
        theta_abs = step + rng.normal(0.0, 0.1, size=num_samples)
        theta_rel = phi + i * step
        wave = a_abs * np.cos(carrier + theta_abs[:, None]) + a_rel * np.cos(carrier + theta_rel[:, None])
        signal = g[None, :, None] * wave[:, None, :]
        signal = signal + noise * rng.standard_normal(signal.shape)
        arrays.append(np.ascontiguousarray(signal))
    return Dataset(list(specs), arrays, labels.astype(np.int64), num_classes)


def manifest_path(dataset_path: Path) -> Path:
    dataset_path = Path(dataset_path)
    return dataset_path.with_name(dataset_path.name + ".json")


def write_manifest(dataset_path: Path, params: dict):
    """Record generator parameters in a JSON sidecar next to the dataset."""
    p = manifest_path(dataset_path)
    with p.open("w", encoding="utf-8") as f:
        json.dump(params, f, indent=2, sort_keys=True)
