"""
Sampling Service
Scene generation over condition files and seeds, with a JSON-lines manifest
"""

from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple
import logging

from app.autograd.snapshot import atomic_write
from app.config import RunConfig
from app.exceptions import FormatError
from app.schemas.manifest import SampleRecord
from app.services.checkpoints import CheckpointService
from app.services.diffusion import SceneGenerator, make_schedule
from app.utils.hashing import sample_name
from app.utils.voxel_io import (
    LABEL_SUFFIX,
    PSA_SUFFIX,
    SKETCH_SUFFIX,
    condition_paths,
    read_condition_pair,
    scene_id,
    write_voxel_labels,
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"


def resolve_conditions(paths: Iterable[Path]) -> List[Tuple[str, Path, Path]]:
    """
    (scene id, sketch, psa) triples from directories or sketch files.

    A directory contributes every ``*.sketch.pgm`` it holds; each sketch
    needs its ``.psa.pgm`` sibling.
    """
    triples = []
    for path in paths:
        path = Path(path)
        sketches = sorted(path.glob(f"*{SKETCH_SUFFIX}")) if path.is_dir() else [path]
        for sketch in sketches:
            if not sketch.name.endswith(SKETCH_SUFFIX):
                raise FormatError(f"{sketch} is not a {SKETCH_SUFFIX} condition file")
            name = scene_id(sketch)
            _, psa = condition_paths(sketch.parent, name)
            if not sketch.is_file() or not psa.is_file():
                raise FormatError(f"Condition {name} needs both {sketch} and its {PSA_SUFFIX} sibling")
            triples.append((name, sketch, psa))
    if not triples:
        raise FormatError("No condition files found")
    return triples


class SamplingService:
    """Loads the trained pipeline once and generates one scene per (condition, seed)"""

    def __init__(self, config: RunConfig, checkpoints: Optional[CheckpointService] = None):
        self.config = config
        self.checkpoints = checkpoints or CheckpointService(config)
        self._generator: Optional[SceneGenerator] = None
        self._checkpoint_hash: Optional[str] = None

    @property
    def generator(self) -> SceneGenerator:
        if self._generator is None:
            vae, ssen, model, metadata = self.checkpoints.load_pipeline()
            self._generator = SceneGenerator(
                vae, ssen, model, make_schedule(self.config), self.config.dims,
                latent_scale=metadata.latent_scale or 1.0,
            )
        return self._generator

    @property
    def checkpoint_hash(self) -> str:
        if self._checkpoint_hash is None:
            self._checkpoint_hash = self.checkpoints.digest("diffusion")
        return self._checkpoint_hash

    def sample(
        self,
        conditions: Sequence[Tuple[str, Path, Path]],
        seeds: Sequence[int],
        out_dir: Optional[Path] = None,
    ) -> List[SampleRecord]:
        """Write NAME_seedXXXX.lbl per pair and seed, plus manifest.jsonl in the output directory"""
        out_dir = Path(out_dir or self.config.OUTPUT_DIR)
        generator = self.generator
        records = []
        for name, sketch_path, psa_path in conditions:
            pair = read_condition_pair(sketch_path, psa_path, self.config.NUM_CLASSES)
            for seed in seeds:
                try:
                    grid = generator.generate(pair, seed)
                    output = out_dir / f"{sample_name(name, seed)}{LABEL_SUFFIX}"
                    write_voxel_labels(output, grid)
                except Exception as e:
                    logger.error(f"Sampling failed for {name} seed {seed}: {e}")
                    raise
                records.append(SampleRecord(
                    seed=seed,
                    sketch_path=str(sketch_path),
                    psa_path=str(psa_path),
                    output_path=str(output),
                    checkpoint_hash=self.checkpoint_hash,
                ))
        manifest = "".join(record.model_dump_json() + "\n" for record in records)
        atomic_write(out_dir / MANIFEST_NAME, manifest.encode("utf-8"))
        logger.info(f"Wrote {len(records)} samples and {MANIFEST_NAME} to {out_dir}")
        return records
