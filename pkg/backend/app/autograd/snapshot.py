"""
Tensor Snapshots and Checkpoint Container
Binary tensor codec ("CYT1") and the named-tensor checkpoint file ("CYCK")
"""

from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union
import json
import logging
import os
import struct
import tempfile

import numpy as np

from app.exceptions import CheckpointError, FormatError

logger = logging.getLogger(__name__)

TENSOR_MAGIC = b"CYT1"
CHECKPOINT_MAGIC = b"CYCK"
_U64 = struct.Struct("<Q")


def encode_tensor(array: np.ndarray) -> bytes:
    """Header (magic, rank, extents as LE u64) followed by LE f64 values"""
    array = np.ascontiguousarray(array, dtype="<f8")
    header = [TENSOR_MAGIC, _U64.pack(array.ndim)]
    header.extend(_U64.pack(extent) for extent in array.shape)
    return b"".join(header) + array.tobytes(order="C")


def decode_tensor(buffer: bytes, offset: int = 0) -> Tuple[np.ndarray, int]:
    """Decode one snapshot starting at ``offset``; returns the array and the next offset"""
    if buffer[offset:offset + 4] != TENSOR_MAGIC:
        raise FormatError(f"Bad tensor magic at byte {offset}: {buffer[offset:offset + 4]!r}")
    offset += 4
    try:
        (rank,) = _U64.unpack_from(buffer, offset)
        offset += 8
        shape = tuple(_U64.unpack_from(buffer, offset + 8 * i)[0] for i in range(rank))
    except struct.error:
        raise FormatError("Truncated tensor header") from None
    offset += 8 * rank
    count = int(np.prod(shape)) if shape else 1
    end = offset + 8 * count
    if end > len(buffer):
        raise FormatError(f"Truncated tensor data: need {end} bytes, have {len(buffer)}")
    array = np.frombuffer(buffer, dtype="<f8", count=count, offset=offset).astype(np.float64)
    return array.reshape(shape), end


def atomic_write(path: Union[str, Path], payload: bytes) -> None:
    """Write to a sibling temp file and rename over the target"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(dir=path.parent, prefix=f".{path.name}.", delete=False)
    try:
        with handle:
            handle.write(payload)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(handle.name, path)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise


def save_checkpoint(
    path: Union[str, Path],
    tensors: Mapping[str, np.ndarray],
    metadata: Dict[str, Any],
) -> None:
    """
    Write named tensors plus a JSON manifest.

    Layout: "CYCK", LE u64 manifest length, UTF-8 JSON manifest, then one
    CYT1 snapshot per tensor in manifest order.
    """
    manifest = {
        "tensors": [{"name": name, "shape": list(np.shape(value))} for name, value in tensors.items()],
        "metadata": metadata,
    }
    encoded = json.dumps(manifest, sort_keys=True).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, _U64.pack(len(encoded)), encoded]
    parts.extend(encode_tensor(np.asarray(value)) for value in tensors.values())
    atomic_write(path, b"".join(parts))
    logger.info(f"Checkpoint written: {path} ({len(tensors)} tensors)")


def load_checkpoint(path: Union[str, Path]) -> Tuple["OrderedDict[str, np.ndarray]", Dict[str, Any]]:
    """Read a checkpoint written by ``save_checkpoint``"""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}")
    buffer = path.read_bytes()
    if buffer[:4] != CHECKPOINT_MAGIC or len(buffer) < 12:
        raise CheckpointError(f"{path} is not a checkpoint file")

    (length,) = _U64.unpack_from(buffer, 4)
    try:
        manifest = json.loads(buffer[12:12 + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Corrupt manifest in {path}: {e}") from None

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    offset = 12 + length
    try:
        for entry in manifest["tensors"]:
            array, offset = decode_tensor(buffer, offset)
            if list(array.shape) != entry["shape"]:
                raise CheckpointError(
                    f"{path}: tensor {entry['name']} has shape {array.shape}, manifest says {entry['shape']}"
                )
            tensors[entry["name"]] = array
    except FormatError as e:
        raise CheckpointError(f"Corrupt checkpoint {path}: {e}") from None
    if offset != len(buffer):
        raise CheckpointError(f"{path}: {len(buffer) - offset} trailing bytes after last tensor")
    return tensors, manifest.get("metadata", {})
