"""
Voxel File Formats
Headerless u16 label volumes, 8-bit PGM condition maps, palettes and label keywords
"""

from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union
import json
import logging

import numpy as np
from PIL import Image, UnidentifiedImageError

from app.autograd.snapshot import atomic_write
from app.exceptions import FormatError, InvariantError
from app.schemas.voxel import ConditionPair, PaletteEntry, SemanticPalette, VoxelGrid

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

LABEL_SUFFIX = ".lbl"
SKETCH_SUFFIX = ".sketch.pgm"
PSA_SUFFIX = ".psa.pgm"
KEYWORD_SUFFIX = ".txt"

TOY_CLASSES: List[Tuple[str, Tuple[int, int, int]]] = [
    ("empty", (0, 0, 0)),
    ("ground", (150, 120, 90)),
    ("road", (128, 64, 128)),
    ("sidewalk", (244, 35, 232)),
    ("building", (70, 70, 70)),
    ("vegetation", (107, 142, 35)),
    ("car", (0, 0, 142)),
    ("pole", (153, 153, 153)),
]

KITTI_CLASSES: List[str] = [
    "empty", "car", "bicycle", "motorcycle", "truck", "other-vehicle", "person",
    "bicyclist", "motorcyclist", "road", "parking", "sidewalk", "other-ground",
    "building", "fence", "vegetation", "trunk", "terrain", "pole", "traffic-sign",
]


# Label volumes

def read_voxel_labels(path: PathLike, dims: Tuple[int, int, int], num_classes: int) -> VoxelGrid:
    """Decode little-endian u16 labels, x outermost and z innermost"""
    path = Path(path)
    expected = 2 * int(np.prod(dims))
    try:
        payload = path.read_bytes()
    except OSError as e:
        raise FormatError(f"Cannot read label file {path}: {e}") from None
    if len(payload) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for dims {tuple(dims)}, found {len(payload)}"
        )
    flat = np.frombuffer(payload, dtype="<u2")
    bad = np.flatnonzero(flat >= num_classes)
    if bad.size:
        index = int(bad[0])
        raise InvariantError(
            f"{path}: label {int(flat[index])} at index {index} is not below num_classes={num_classes}"
        )
    return VoxelGrid.from_flat(tuple(dims), num_classes, flat)


def write_voxel_labels(path: PathLike, grid: VoxelGrid) -> None:
    """Inverse of read_voxel_labels"""
    atomic_write(path, grid.flat().astype("<u2").tobytes())


# PGM rasters

def _check_pgm_header(path: Path) -> None:
    with open(path, "rb") as handle:
        magic = handle.read(2)
    if magic != b"P5":
        raise FormatError(f"{path} is not a binary PGM (P5) file, header starts with {magic!r}")


def read_pgm(path: PathLike) -> np.ndarray:
    """Read an 8-bit binary PGM as an (rows, cols) uint8 array"""
    path = Path(path)
    try:
        _check_pgm_header(path)
        with Image.open(path) as image:
            if image.mode != "L":
                raise FormatError(f"{path}: expected 8-bit grayscale PGM, got mode {image.mode}")
            return np.array(image, dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as e:
        raise FormatError(f"Cannot read PGM {path}: {e}") from None


def write_pgm(path: PathLike, values: np.ndarray) -> None:
    """Write an (rows, cols) array with values in 0..255 as binary PGM"""
    values = np.asarray(values)
    if values.ndim != 2:
        raise InvariantError(f"PGM rasters must be 2D, got shape {values.shape}")
    if values.size and (values.min() < 0 or values.max() > 255):
        raise InvariantError("PGM values must lie within 0..255")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(values.astype(np.uint8)).save(path, format="PPM")


def read_condition_pair(sketch_path: PathLike, psa_path: PathLike, num_classes: int) -> ConditionPair:
    sketch = read_pgm(sketch_path)
    psa = read_pgm(psa_path)
    if sketch.shape != psa.shape:
        raise InvariantError(
            f"dimension mismatch: sketch {sketch_path} is {sketch.shape}, psa {psa_path} is {psa.shape}"
        )
    return ConditionPair(sketch=sketch, psa=psa, num_classes=num_classes)


def write_condition_pair(sketch_path: PathLike, psa_path: PathLike, pair: ConditionPair) -> None:
    if pair.num_classes > 256:
        raise InvariantError("8-bit PSA files hold at most 256 classes")
    write_pgm(sketch_path, pair.sketch)
    write_pgm(psa_path, pair.psa)


# Palette and keywords

def default_palette(num_classes: int) -> SemanticPalette:
    """Toy palette for C=8, SemanticKITTI names for C=20, generic names otherwise"""
    if num_classes == len(TOY_CLASSES):
        entries = [PaletteEntry(id=i, name=n, color=c) for i, (n, c) in enumerate(TOY_CLASSES)]
    elif num_classes == len(KITTI_CLASSES):
        entries = [PaletteEntry(id=i, name=n) for i, n in enumerate(KITTI_CLASSES)]
    else:
        entries = [PaletteEntry(id=0, name="empty")] + [
            PaletteEntry(id=i, name=f"class_{i}") for i in range(1, num_classes)
        ]
    return SemanticPalette(classes=entries)


def load_palette(path: Optional[PathLike], num_classes: int) -> SemanticPalette:
    """Read a JSON palette ({"classes": [{id, name, color}, ...]}) or fall back to the default"""
    if path is None:
        return default_palette(num_classes)
    try:
        palette = SemanticPalette.model_validate(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"Cannot read palette {path}: {e}") from None
    if palette.num_classes != num_classes:
        raise InvariantError(
            f"palette {path} defines {palette.num_classes} classes, config says {num_classes}"
        )
    return palette


def label_keywords(grid: VoxelGrid, palette: SemanticPalette) -> List[str]:
    """Names of the non-empty classes present in a scene"""
    present = np.flatnonzero(grid.class_histogram())
    return [palette.name_of(int(c)) for c in present if c != 0]


def write_label_keywords(path: PathLike, keywords: Iterable[str]) -> None:
    atomic_write(path, ("\n".join(keywords) + "\n").encode("utf-8"))


def list_label_files(directory: PathLike) -> List[Path]:
    """Sorted .lbl files of a directory"""
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"Not a directory: {directory}")
    return sorted(directory.glob(f"*{LABEL_SUFFIX}"))


def scene_id(path: PathLike) -> str:
    name = Path(path).name
    for suffix in (LABEL_SUFFIX, SKETCH_SUFFIX, PSA_SUFFIX):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return Path(path).stem


def condition_paths(directory: PathLike, scene: str) -> Tuple[Path, Path]:
    directory = Path(directory)
    return directory / f"{scene}{SKETCH_SUFFIX}", directory / f"{scene}{PSA_SUFFIX}"
