"""Exact semantic and depth ground truth painted from a scene.

Sources are rectangular blobs on a panoramic (H, W) grid: columns span
azimuth [0, 360), the blob centre sits at column W*azimuth/360 and the
rows form a band around the horizon. Blob width is the class base width
scaled by 2 m / distance. Nearer sources are painted first and never
overwritten.
"""
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from config.settings import settings
from src.simulator.sources import CLASS_IDS, Scene, SourceSpec
from src.utils.errors import BadConfig, ShapeMismatch

BASE_WIDTH_DEG = {"car": 30.0, "motorcycle": 18.0, "train": 60.0}
REFERENCE_DISTANCE = 2.0
SIM_CLASS_TABLE = {class_id: name for name, class_id in CLASS_IDS.items()}


@dataclass(frozen=True)
class LabelGrid:
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int64)
        if cells.ndim != 2:
            raise ShapeMismatch(f"label grids are 2-D, got shape {cells.shape}")
        if cells.size and cells.min() < 0:
            raise BadConfig("class ids must be non-negative")
        object.__setattr__(self, "cells", cells)

    @property
    def shape(self):
        return self.cells.shape


@dataclass(frozen=True)
class DepthGrid:
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.float64)
        if cells.ndim != 2:
            raise ShapeMismatch(f"depth grids are 2-D, got shape {cells.shape}")
        if not np.all(np.isfinite(cells)) or (cells.size and cells.min() <= 0):
            raise BadConfig("depth cells must be finite and positive")
        object.__setattr__(self, "cells", cells)

    @property
    def shape(self):
        return self.cells.shape


def _round(x: float) -> int:
    return int(np.floor(x + 0.5))


def blob_extent(source: SourceSpec, H: int, W: int):
    """Row range and (wrapped) column indices covered by one source."""
    width_deg = BASE_WIDTH_DEG[source.cls] * REFERENCE_DISTANCE / source.distance
    width = max(1, _round(W * width_deg / 360.0))
    centre = _round(W * source.azimuth / 360.0)
    cols = (centre - (width - 1) // 2 + np.arange(width)) % W

    band = H // 3
    height = max(1, min(band, _round(band * REFERENCE_DISTANCE / source.distance)))
    top = H // 2 - height // 2
    return slice(top, top + height), cols


def paint_owners(sources: Sequence[SourceSpec], H: int, W: int) -> np.ndarray:
    """Index into ``sources`` of the source owning each cell, -1 for none."""
    if H < 8 or W < 8:
        raise BadConfig(f"grids must be at least 8x8, got {H}x{W}")
    owners = np.full((H, W), -1, dtype=np.int64)
    order = sorted(range(len(sources)), key=lambda i: sources[i].distance)
    for index in order:
        rows, cols = blob_extent(sources[index], H, W)
        region = owners[rows][:, cols]
        region[region < 0] = index
        owners[rows, cols] = region
    return owners


def ground_truth_semantic(scene: Scene, H: int, W: int) -> LabelGrid:
    owners = paint_owners(scene.sources, H, W)
    lookup = np.array([0] + [s.class_id for s in scene.sources], dtype=np.int64)
    return LabelGrid(lookup[owners + 1])


def ground_truth_depth(scene: Scene, H: int, W: int, far_depth: float = settings.FAR_DEPTH) -> DepthGrid:
    if any(s.distance >= far_depth for s in scene.sources):
        raise BadConfig(f"far_depth {far_depth} must exceed every source distance")
    owners = paint_owners(scene.sources, H, W)
    lookup = np.array([far_depth] + [s.distance for s in scene.sources], dtype=np.float64)
    return DepthGrid(lookup[owners + 1])


# Street layout used by synthetic label stacks (segmentation-model style ids).
STREET_CLASS_TABLE = {0: "road", 1: "building", 2: "sky", 3: "car", 4: "motorcycle", 5: "train"}
STREET_IDS = {name: class_id for class_id, name in STREET_CLASS_TABLE.items()}


def _street_layout(H: int, W: int) -> np.ndarray:
    layout = np.full((H, W), STREET_IDS["building"], dtype=np.int64)
    layout[: H // 3] = STREET_IDS["sky"]
    layout[2 * H // 3:] = STREET_IDS["road"]
    return layout


def synth_label_stack(scene: Scene, H: int, W: int, frames: int,
                      parked: Optional[Sequence[SourceSpec]] = None,
                      drift_deg: Optional[float] = None) -> Dict[str, object]:
    """Per-frame street label maps for one location.

    ``parked`` objects stay put in every frame; the scene's sources drift by
    ``drift_deg`` per frame and sit at their scene azimuth in the middle
    frame. Returns the frames, the middle index and the class table.
    """
    if frames < 1:
        raise BadConfig("a label stack needs at least one frame")
    drift = 360.0 / frames if drift_deg is None else drift_deg
    base = _street_layout(H, W)
    parked = list(parked or ())
    if parked:
        owners = paint_owners(parked, H, W)
        street = np.array([STREET_IDS[p.cls] for p in parked])
        base = np.where(owners >= 0, street[np.maximum(owners, 0)], base)

    middle = frames // 2
    stack = []
    for t in range(frames):
        moved = [s.rotated(drift * (t - middle)) for s in scene.sources]
        frame = base.copy()
        if moved:
            owners = paint_owners(moved, H, W)
            street = np.array([STREET_IDS[s.cls] for s in moved])
            frame = np.where(owners >= 0, street[np.maximum(owners, 0)], frame)
        stack.append(LabelGrid(frame))
    return {"frames": stack, "middle": middle, "class_table": dict(STREET_CLASS_TABLE)}
