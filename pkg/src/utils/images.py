"""Binary PGM (P5) label rasters."""
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from src.utils.errors import BadConfig, IoFailure


def write_pgm(path, cells: np.ndarray) -> Path:
    path = Path(path)
    cells = np.asarray(cells)
    if cells.ndim != 2 or cells.min(initial=0) < 0 or cells.max(initial=0) > 255:
        raise BadConfig(f"PGM rasters hold 2-D values in 0..255, got shape {cells.shape}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(cells.astype(np.uint8), mode="L").save(path, format="PPM")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def read_pgm(path) -> np.ndarray:
    path = Path(path)
    try:
        with Image.open(path) as image:
            if image.mode != "L":
                raise BadConfig(f"{path} is not a greyscale PGM (mode {image.mode})")
            return np.asarray(image, dtype=np.int64).copy()
    except (OSError, UnidentifiedImageError) as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
