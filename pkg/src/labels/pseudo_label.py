"""Sound-making object collection from per-frame label maps.

The background of a location is the per-cell mode over its frames; a cell
of frame t is sound-making when its class is a target class and differs
from the background (parked cars and static scenery drop out).
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Sequence

import numpy as np
from scipy import stats

from src.simulator.ground_truth import SIM_CLASS_TABLE, LabelGrid
from src.utils.errors import BadConfig, EmptyStack, ShapeMismatch, UnknownClass
from src.utils.images import read_pgm, write_pgm
from src.utils.logging import get_logger

logger = get_logger(__name__)

# Compact training ids; street-scene segmenters call trains "tram".
COMPACT_IDS = {"car": 1, "motorcycle": 2, "train": 3, "tram": 3}
DEFAULT_FRAMES = 150


@dataclass(frozen=True)
class LabelStack:
    frames: Sequence[LabelGrid]
    class_table: Dict[int, str] = field(default_factory=lambda: dict(SIM_CLASS_TABLE))

    def __post_init__(self):
        if len(self.frames) < 1:
            raise EmptyStack("a label stack needs at least one frame")
        shapes = {frame.shape for frame in self.frames}
        if len(shapes) != 1:
            raise ShapeMismatch(f"frames disagree on shape: {sorted(shapes)}")
        unknown = set(np.unique(self.as_array())) - set(self.class_table)
        if unknown:
            raise UnknownClass(f"ids {sorted(unknown)} are not in the class table")

    def as_array(self) -> np.ndarray:
        return np.stack([frame.cells for frame in self.frames])

    def ids_for(self, names: Iterable[str]):
        wanted = set(names)
        return {class_id for class_id, name in self.class_table.items() if name in wanted}


@dataclass(frozen=True)
class SoundMask:
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.uint8)
        if cells.ndim != 2 or cells.max(initial=0) > 1:
            raise ShapeMismatch("a sound mask is a 2-D grid of 0/1")
        object.__setattr__(self, "cells", cells)


def mode_background(stack: LabelStack) -> LabelGrid:
    """Per-cell most frequent id; ties go to the smallest id."""
    if not stack.frames:
        raise EmptyStack("cannot take the mode of zero frames")
    result = stats.mode(stack.as_array(), axis=0, keepdims=False)
    return LabelGrid(np.asarray(result.mode))


def sound_mask(Y_t: LabelGrid, Y_bg: LabelGrid, targets: Iterable[int]) -> SoundMask:
    if Y_t.shape != Y_bg.shape:
        raise ShapeMismatch(f"frame {Y_t.shape} and background {Y_bg.shape} differ")
    moving = np.isin(Y_t.cells, list(targets)) & (Y_t.cells != Y_bg.cells)
    return SoundMask(moving)


def to_training_target(mask: SoundMask, Y_t: LabelGrid, class_table: Dict[int, str]) -> LabelGrid:
    """Masked cells take compact ids (car 1, motorcycle 2, train 3), the rest 0."""
    if mask.cells.shape != Y_t.shape:
        raise ShapeMismatch(f"mask {mask.cells.shape} and frame {Y_t.shape} differ")
    out = np.zeros(Y_t.shape, dtype=np.int64)
    for class_id in np.unique(Y_t.cells[mask.cells == 1]):
        name = class_table.get(int(class_id))
        if name not in COMPACT_IDS:
            raise UnknownClass(f"masked class {class_id} ({name}) is not a sound-making target")
        out[(Y_t.cells == class_id) & (mask.cells == 1)] = COMPACT_IDS[name]
    return LabelGrid(out)


def pseudo_labels(stack: LabelStack, frame_index: int) -> LabelGrid:
    """Full chain for one frame of a location."""
    background = mode_background(stack)
    targets = stack.ids_for(COMPACT_IDS)
    mask = sound_mask(stack.frames[frame_index], background, targets)
    return to_training_target(mask, stack.frames[frame_index], stack.class_table)


def load_class_table(path) -> Dict[int, str]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return {int(class_id): str(name) for class_id, name in raw.items()}
    except (AttributeError, ValueError) as exc:
        raise BadConfig(f"class table {path} must map integer ids to names") from exc


def load_label_stack(directory, class_table: Dict[int, str], frames: int = DEFAULT_FRAMES) -> LabelStack:
    """The first ``frames`` P5 PGM files of ``directory`` in name order."""
    paths = sorted(Path(directory).glob("*.pgm"))[:frames]
    if not paths:
        raise EmptyStack(f"no .pgm label maps under {directory}")
    logger.info(f"📊 Loaded {len(paths)} label frames from {directory}")
    return LabelStack([LabelGrid(read_pgm(p)) for p in paths], class_table)


def write_sound_mask(path, mask: SoundMask) -> Path:
    return write_pgm(path, mask.cells.astype(np.int64) * 255)
