"""
Dataset Service
Procedural toy scenes, sketch/PSA preparation and scene loading
"""

from pathlib import Path
from typing import Dict, List, Optional, Tuple
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.config import RunConfig
from app.exceptions import CymbaError, FormatError
from app.schemas.voxel import ConditionPair, SemanticPalette, VoxelGrid
from app.services.voxel_ops import make_condition_pair
from app.utils.voxel_io import (
    KEYWORD_SUFFIX,
    LABEL_SUFFIX,
    condition_paths,
    label_keywords,
    list_label_files,
    load_palette,
    read_condition_pair,
    read_voxel_labels,
    scene_id,
    write_condition_pair,
    write_label_keywords,
    write_voxel_labels,
)

logger = logging.getLogger(__name__)

TOY_ROLES = ("ground", "road", "sidewalk", "building", "vegetation", "car", "pole")


def role_class(role: str, num_classes: int) -> int:
    """Class ID of a toy role; roles wrap around when fewer than eight classes exist"""
    return 1 + TOY_ROLES.index(role) % (num_classes - 1)


class ToySceneParameters(BaseModel):
    """Inclusive count ranges for the procedural toy scenes"""
    roads: Tuple[int, int] = (1, 2)
    buildings: Tuple[int, int] = (2, 4)
    vegetation: Tuple[int, int] = (1, 3)
    cars: Tuple[int, int] = (1, 3)
    poles: Tuple[int, int] = (2, 5)
    max_building_fraction: float = Field(default=0.25, gt=0, le=1)


class Scene(BaseModel):
    """A labelled scene with its condition pair"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str
    grid: VoxelGrid
    condition: ConditionPair


class DatasetService:
    """Builds and reads scene directories: NAME.lbl, NAME.sketch.pgm, NAME.psa.pgm, NAME.txt"""

    def __init__(self, config: RunConfig, parameters: Optional[ToySceneParameters] = None):
        self.config = config
        self.parameters = parameters or ToySceneParameters()
        self.palette: SemanticPalette = load_palette(config.PALETTE_PATH, config.NUM_CLASSES)

    # Toy generation

    def _count(self, rng: np.random.Generator, bounds: Tuple[int, int]) -> int:
        return int(rng.integers(bounds[0], bounds[1] + 1))

    def toy_scene(self, seed: int, index: int) -> VoxelGrid:
        """
        One procedural scene: ground plane, road strips with sidewalks, boxes
        for buildings, low vegetation patches, cars on the road and pole columns.
        """
        rng = np.random.default_rng([seed, index])
        length, width, height = self.config.dims
        c = self.config.NUM_CLASSES
        p = self.parameters
        labels = np.zeros((length, width, height), dtype=np.uint16)
        labels[:, :, 0] = role_class("ground", c)

        road = np.zeros((length, width), dtype=bool)
        sidewalk = np.zeros((length, width), dtype=bool)
        lane = max(1, min(length, width) // 8)
        for _ in range(self._count(rng, p.roads)):
            along_x = bool(rng.integers(2))
            extent = width if along_x else length
            start = int(rng.integers(1, max(2, extent - lane - 1)))
            stop = min(extent, start + lane)
            if along_x:
                road[:, start:stop] = True
                sidewalk[:, max(0, start - 1):start] = True
                sidewalk[:, stop:stop + 1] = True
            else:
                road[start:stop, :] = True
                sidewalk[max(0, start - 1):start, :] = True
                sidewalk[stop:stop + 1, :] = True
        sidewalk &= ~road
        labels[sidewalk, 0] = role_class("sidewalk", c)
        labels[road, 0] = role_class("road", c)

        free = ~(road | sidewalk)
        side = max(1, int(np.sqrt(p.max_building_fraction * length * width / max(p.buildings[1], 1))))
        for _ in range(self._count(rng, p.buildings)):
            bx, by = (int(rng.integers(1, side + 1)) for _ in range(2))
            x0 = int(rng.integers(0, max(1, length - bx + 1)))
            y0 = int(rng.integers(0, max(1, width - by + 1)))
            footprint = np.zeros_like(free)
            footprint[x0:x0 + bx, y0:y0 + by] = True
            footprint &= free
            top = int(rng.integers(min(2, height - 1), height)) if height > 1 else 0
            for z in range(1, top + 1):
                labels[footprint, z] = role_class("building", c)
            free &= ~footprint

        for _ in range(self._count(rng, p.vegetation)):
            cx, cy = int(rng.integers(length)), int(rng.integers(width))
            radius = int(rng.integers(1, max(2, lane + 1)))
            xs, ys = np.ogrid[:length, :width]
            patch = ((xs - cx) ** 2 + (ys - cy) ** 2 <= radius ** 2) & free
            if height > 1:
                labels[patch, 1] = role_class("vegetation", c)
            free &= ~patch

        road_cells = np.argwhere(road)
        if road_cells.size and height > 1:
            for _ in range(self._count(rng, p.cars)):
                x, y = road_cells[int(rng.integers(len(road_cells)))]
                body = np.zeros_like(road)
                body[x:x + 2, y:y + 1] = True
                body &= road
                labels[body, 1] = role_class("car", c)

        candidates = np.argwhere(sidewalk | free)
        if candidates.size and height > 1:
            for _ in range(self._count(rng, p.poles)):
                x, y = candidates[int(rng.integers(len(candidates)))]
                if labels[x, y, 1] == 0:
                    labels[x, y, 1:] = role_class("pole", c)

        return VoxelGrid(dims=self.config.dims, num_classes=c, labels=labels)

    def condition_for(self, grid: VoxelGrid) -> ConditionPair:
        return make_condition_pair(grid, self.config.CANNY_LOW, self.config.CANNY_HIGH)

    def write_scene(self, directory: Path, name: str, grid: VoxelGrid, pair: Optional[ConditionPair] = None) -> Path:
        directory = Path(directory)
        label_path = directory / f"{name}{LABEL_SUFFIX}"
        write_voxel_labels(label_path, grid)
        sketch_path, psa_path = condition_paths(directory, name)
        write_condition_pair(sketch_path, psa_path, pair or self.condition_for(grid))
        write_label_keywords(directory / f"{name}{KEYWORD_SUFFIX}", label_keywords(grid, self.palette))
        return label_path

    def generate_toy(self, directory: Path, count: int, seed: int) -> List[Path]:
        """Write ``count`` seeded toy scenes with sketches, synthetic PSAs and keywords"""
        paths = []
        for index in range(count):
            grid = self.toy_scene(seed, index)
            paths.append(self.write_scene(directory, f"toy_{index:04d}", grid))
        logger.info(f"Generated {count} toy scenes in {directory} (seed {seed})")
        return paths

    # Sketch preparation

    def make_sketches(self, label_dir: Path, out_dir: Optional[Path] = None) -> Dict[str, str]:
        """
        Sketch, synthetic PSA and keywords for every label file of a directory.

        Per-file failures are logged and collected; the mapping of failed
        scene IDs to error messages is returned.
        """
        out_dir = Path(out_dir or label_dir)
        failures: Dict[str, str] = {}
        files = list_label_files(label_dir)
        for path in files:
            name = scene_id(path)
            try:
                grid = read_voxel_labels(path, self.config.dims, self.config.NUM_CLASSES)
                pair = self.condition_for(grid)
                sketch_path, psa_path = condition_paths(out_dir, name)
                write_condition_pair(sketch_path, psa_path, pair)
                write_label_keywords(out_dir / f"{name}{KEYWORD_SUFFIX}", label_keywords(grid, self.palette))
            except (CymbaError, OSError) as e:
                logger.error(f"make-sketch failed for {path}: {e}")
                failures[name] = str(e)
        logger.info(f"Prepared conditions for {len(files) - len(failures)}/{len(files)} scenes in {out_dir}")
        return failures

    # Loading

    def load_scenes(self, directory: Path, limit: Optional[int] = None) -> List[Scene]:
        """
        Scenes of a directory in file-name order.

        Missing condition files are synthesized from the labels.
        """
        files = list_label_files(directory)
        if not files:
            raise FormatError(f"No {LABEL_SUFFIX} files in {directory}")
        if limit is not None:
            files = files[:limit]
        scenes = []
        for path in files:
            name = scene_id(path)
            grid = read_voxel_labels(path, self.config.dims, self.config.NUM_CLASSES)
            sketch_path, psa_path = condition_paths(path.parent, name)
            if sketch_path.is_file() and psa_path.is_file():
                pair = read_condition_pair(sketch_path, psa_path, self.config.NUM_CLASSES)
            else:
                pair = self.condition_for(grid)
            scenes.append(Scene(name=name, grid=grid, condition=pair))
        return scenes

    def load_grids(self, directory: Path) -> List[VoxelGrid]:
        files = list_label_files(directory)
        if not files:
            raise FormatError(f"No {LABEL_SUFFIX} files in {directory}")
        return [read_voxel_labels(path, self.config.dims, self.config.NUM_CLASSES) for path in files]
