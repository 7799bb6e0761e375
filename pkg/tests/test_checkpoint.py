import struct

import numpy as np
import pytest

from ablations import build_variant
from checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from data import synthesize_dataset
from errors import DatasetFormatError
from models import ModelConfig, TrainConfig
from training import evaluate, train


@pytest.mark.parametrize("variant", ["husformer", "husfuse", "huspair"])
def test_reload_is_bit_exact(tiny_cfg, tmp_path, variant):
    tiny_cfg.variant = variant
    model = build_variant(tiny_cfg, seed=3)
    path = tmp_path / "m.hsck"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert back.cfg == model.cfg
    assert back.store.names() == model.store.names()
    for (_, a), (_, b) in zip(model.store.items(), back.store.items()):
        assert a.data.tobytes() == b.data.tobytes()
    assert not list(tmp_path.glob(".*.tmp"))


def test_trained_model_evaluates_identically(tmp_path):
    data = synthesize_dataset(2, None, 24, 3, coupling=0.0, seed=1)
    cfg = ModelConfig(modalities=data.specs, hidden_dim=8, heads=2, cm_layers=1, sa_layers=1, ffn_dim=8)
    model = build_variant(cfg, seed=0)
    train(model, data, TrainConfig(epochs=1, batch_size=8))
    before = evaluate(model, data)
    save_checkpoint(model, tmp_path / "m.hsck")
    after = evaluate(load_checkpoint(tmp_path / "m.hsck"), data)
    assert (after.acc, after.f1, after.loss) == (before.acc, before.f1, before.loss)
    np.testing.assert_array_equal(after.confusion, before.confusion)


class TestMalformedCheckpoint:
    def test_bad_magic(self, tiny_cfg):
        buf = encode_checkpoint(build_variant(tiny_cfg))
        with pytest.raises(DatasetFormatError, match="magic"):
            decode_checkpoint(b"XXXX" + buf[4:])

    def test_truncated(self, tiny_cfg):
        buf = encode_checkpoint(build_variant(tiny_cfg))
        with pytest.raises(DatasetFormatError, match="truncated"):
            decode_checkpoint(buf[:-3])

    def test_trailing_bytes(self, tiny_cfg):
        buf = encode_checkpoint(build_variant(tiny_cfg))
        with pytest.raises(DatasetFormatError, match="trailing"):
            decode_checkpoint(buf + b"\x00")

    def test_corrupt_tensor_name(self, tiny_cfg):
        buf = bytearray(encode_checkpoint(build_variant(tiny_cfg)))
        (cfg_len,) = struct.unpack_from("<I", buf, 8)
        first = 12 + cfg_len + 4
        buf[first + 4] = 0xff
        with pytest.raises(DatasetFormatError, match="UTF-8") as info:
            decode_checkpoint(bytes(buf))
        assert info.value.offset == first
