import struct

import numpy as np
import pytest

from app.autograd.snapshot import (
    CHECKPOINT_MAGIC,
    TENSOR_MAGIC,
    atomic_write,
    decode_tensor,
    encode_tensor,
    load_checkpoint,
    save_checkpoint,
)
from app.exceptions import CheckpointError, FormatError


def test_tensor_layout():
    payload = encode_tensor(np.array([[1.0, 2.0, 3.0]]))
    assert payload[:4] == TENSOR_MAGIC
    assert struct.unpack_from("<QQQ", payload, 4) == (2, 1, 3)
    assert struct.unpack_from("<3d", payload, 28) == (1.0, 2.0, 3.0)


def test_scalar_tensor():
    value = np.array(2.5)
    decoded, end = decode_tensor(encode_tensor(value))
    assert decoded.shape == ()
    assert float(decoded) == 2.5
    assert end == len(encode_tensor(value))


def test_decode_rejects_bad_magic_and_truncation():
    payload = encode_tensor(np.ones(4))
    with pytest.raises(FormatError):
        decode_tensor(b"XXXX" + payload[4:])
    with pytest.raises(FormatError):
        decode_tensor(payload[:-8])


def test_checkpoint_round_trip(tmp_path):
    path = tmp_path / "model.ckpt"
    tensors = {"a.weight": np.arange(6.0).reshape(2, 3), "b": np.array([0.5])}
    save_checkpoint(path, tensors, {"epoch": 3})
    assert path.read_bytes()[:4] == CHECKPOINT_MAGIC
    loaded, metadata = load_checkpoint(path)
    assert list(loaded) == ["a.weight", "b"]
    np.testing.assert_array_equal(loaded["a.weight"], tensors["a.weight"])
    assert metadata == {"epoch": 3}


def test_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")
    bogus = tmp_path / "bogus.ckpt"
    bogus.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(bogus)

    path = tmp_path / "trailing.ckpt"
    save_checkpoint(path, {"x": np.ones(2)}, {})
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "nested" / "file.bin"
    atomic_write(target, b"first")
    atomic_write(target, b"second")
    assert target.read_bytes() == b"second"
    assert [p.name for p in target.parent.iterdir()] == ["file.bin"]
