"""Synthetic dataset shards.

Layout::

    <root>/<split>/<scene_id>/audio_pair{0,90,180,270}.wav   stereo float32
                             labels.pgm                      P5, ids 0..3
                             depth.f32                       little-endian, row-major
                             scene.json                      sources + seeds
    <root>/<split>/manifest.json                             ids + config hash
"""
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List

import numpy as np
from tqdm import tqdm

from config.settings import settings
from src.dsp.audio_io import read_wav, write_wav
from src.simulator.ground_truth import DepthGrid, LabelGrid, ground_truth_depth, ground_truth_semantic
from src.simulator.rig import DEFAULT_RIG, RigClip, RigConfig, render_rig
from src.simulator.sources import SOURCE_CLASSES, MIN_SEPARATION_DEG, Scene, SourceSpec, angular_gap
from src.utils.config import GenConfig
from src.utils.errors import DataMissing, IoFailure
from src.utils.images import read_pgm, write_pgm
from src.utils.logging import get_logger

logger = get_logger(__name__)

SPLITS = ("train", "val", "test")
AZIMUTH_STEP = 0.25  # exact in binary, keeps rotations bitwise


def split_counts(n_scenes: int, percentages) -> Dict[str, int]:
    train = n_scenes * percentages[0] // 100
    val = n_scenes * percentages[1] // 100
    return {"train": train, "val": val, "test": n_scenes - train - val}


def generate_scene(index: int, cfg: GenConfig) -> Scene:
    """Scene number ``index``; depends only on (gen_seed, index)."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.gen_seed, index]))
    count = int(rng.integers(cfg.min_sources, cfg.max_sources + 1))
    azimuths: List[float] = []
    attempts = 0
    while len(azimuths) < count and attempts < 1000:
        attempts += 1
        candidate = float(rng.integers(0, int(360 / AZIMUTH_STEP))) * AZIMUTH_STEP
        if all(angular_gap(candidate, a) >= MIN_SEPARATION_DEG for a in azimuths):
            azimuths.append(candidate)

    sources = [
        SourceSpec(
            cls=SOURCE_CLASSES[int(rng.integers(len(SOURCE_CLASSES)))],
            azimuth=azimuth,
            distance=round(float(rng.uniform(cfg.distance_min, cfg.distance_max)), 2),
            seed=int(rng.integers(2 ** 31)),
        )
        for azimuth in azimuths
    ]
    return Scene(
        sources=sources,
        ambient_level=cfg.ambient_level,
        duration=cfg.duration,
        seed=int(rng.integers(2 ** 31)),
    )


@dataclass(frozen=True)
class SceneSample:
    scene_id: str
    scene: Scene
    clip: RigClip
    labels: LabelGrid
    depth: DepthGrid


def render_sample(scene_id: str, scene: Scene, cfg: GenConfig, rig: RigConfig = DEFAULT_RIG) -> SceneSample:
    H, W = cfg.label_grid
    return SceneSample(
        scene_id=scene_id,
        scene=scene,
        clip=render_rig(scene, rig, cfg.sample_rate),
        labels=ground_truth_semantic(scene, H, W),
        depth=ground_truth_depth(scene, H, W, cfg.far_depth),
    )


def write_sample(directory: Path, sample: SceneSample) -> Path:
    target = directory / sample.scene_id
    try:
        target.mkdir(parents=True, exist_ok=True)
        for orientation in sample.clip.rig.pair_orientations:
            left, right = sample.clip.pair(orientation)
            write_wav(target / f"audio_pair{orientation}.wav", np.stack([left.samples, right.samples]), sample.clip.sample_rate)
        write_pgm(target / "labels.pgm", sample.labels.cells)
        (target / "depth.f32").write_bytes(sample.depth.cells.astype("<f4").tobytes(order="C"))
        (target / "scene.json").write_text(sample.scene.to_json(), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write scene {sample.scene_id}: {exc}") from exc
    return target


def generate_dataset(cfg: GenConfig, root, config_hash: str, rig: RigConfig = DEFAULT_RIG) -> Dict[str, int]:
    """Render and write every split; returns per-split scene counts."""
    root = Path(root)
    counts = split_counts(cfg.n_scenes, cfg.splits)
    logger.info(f"🚀 Generating {cfg.n_scenes} scenes into {root}")

    offset = 0
    for split in SPLITS:
        ids = [f"scene_{offset + i:05d}" for i in range(counts[split])]
        split_dir = root / split

        def build(item):
            position, scene_id = item
            sample = render_sample(scene_id, generate_scene(offset + position, cfg), cfg, rig)
            write_sample(split_dir, sample)
            return scene_id

        with ThreadPoolExecutor(max_workers=max(1, settings.THREADS)) as pool:
            written = list(tqdm(pool.map(build, enumerate(ids)), total=len(ids), desc=split, disable=None))

        manifest = {
            "split": split,
            "scene_ids": written,
            "config_hash": config_hash,
            "sample_rate": cfg.sample_rate,
            "duration": cfg.duration,
            "label_grid": list(cfg.label_grid),
            "far_depth": cfg.far_depth,
            "generator": cfg.model_dump(mode="json"),
        }
        try:
            split_dir.mkdir(parents=True, exist_ok=True)
            (split_dir / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot write manifest for {split}: {exc}") from exc
        logger.info(f"📊 {split}: {len(written)} scenes")
        offset += counts[split]

    logger.info(f"✅ Dataset ready at {root}")
    return counts


def load_manifest(root, split: str) -> dict:
    path = Path(root) / split / "manifest.json"
    if not path.is_file():
        raise DataMissing(f"no manifest for split '{split}' under {root}")
    return json.loads(path.read_text(encoding="utf-8"))


def load_sample(root, split: str, scene_id: str, manifest: dict, rig: RigConfig = DEFAULT_RIG) -> SceneSample:
    directory = Path(root) / split / scene_id
    if not directory.is_dir():
        raise DataMissing(f"scene {scene_id} missing from {directory.parent}")
    H, W = manifest["label_grid"]
    channels = None
    sample_rate = manifest["sample_rate"]
    for orientation in rig.pair_orientations:
        stereo, sample_rate = read_wav(directory / f"audio_pair{orientation}.wav")
        if channels is None:
            channels = np.zeros((8, stereo.shape[1]))
        left_index, right_index = rig.pair_channels(orientation)
        channels[left_index], channels[right_index] = stereo[0], stereo[1]

    depth_path = directory / "depth.f32"
    if not depth_path.is_file():
        raise DataMissing(f"depth raster missing for {scene_id}")
    depth = np.frombuffer(depth_path.read_bytes(), dtype="<f4").astype(np.float64).reshape(H, W)
    scene = Scene.model_validate_json((directory / "scene.json").read_text(encoding="utf-8"))
    return SceneSample(
        scene_id=scene_id,
        scene=scene,
        clip=RigClip(channels, sample_rate, rig),
        labels=LabelGrid(read_pgm(directory / "labels.pgm")),
        depth=DepthGrid(depth),
    )
