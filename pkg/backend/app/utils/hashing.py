"""
Hashing Utilities
Content hashes for checkpoints and safe names for scene files
"""

from pathlib import Path
from typing import Union
import hashlib
import re


def hash_bytes(payload: bytes) -> str:
    """SHA-256 hex digest of a byte string"""
    return hashlib.sha256(payload).hexdigest()


def hash_file(path: Union[str, Path], chunk_size: int = 1 << 20) -> str:
    """SHA-256 hex digest of a file, read in chunks"""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sanitize_scene_id(name: str) -> str:
    """Sanitize a scene identifier for use as a file stem"""
    name = re.sub(r"[^\w\s.-]", "", name)
    name = re.sub(r"[-\s]+", "-", name)
    return name.strip("-.") or "scene"


def sample_name(scene_id: str, seed: int) -> str:
    """File stem for one generated sample"""
    return f"{sanitize_scene_id(scene_id)}_seed{seed:04d}"
