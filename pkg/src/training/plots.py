"""Static SVG figures written next to run artifacts."""
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from src.utils.errors import IoFailure


def _save(fig, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(str(path), format="svg", bbox_inches="tight", metadata={"Date": None})
    except OSError as exc:
        raise IoFailure(f"cannot write figure {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path


def plot_loss_curve(record, path) -> Path:
    epochs = [e.epoch for e in record.epochs]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [e.train_loss for e in record.epochs], marker="o", label="train")
    val = [(e.epoch, e.val_loss) for e in record.epochs if e.val_loss is not None]
    if val:
        ax.plot([v[0] for v in val], [v[1] for v in val], marker="s", label="val")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(f"run {record.config_hash}")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_ablation(cells: Sequence[str], medians: Sequence[float], path, title: str = "mIoU") -> Path:
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(cells)), 4))
    ax.bar(range(len(cells)), [100 * m for m in medians], color="tab:blue")
    ax.set_xticks(range(len(cells)))
    ax.set_xticklabels(cells, rotation=30, ha="right")
    ax.set_ylabel(f"{title} (%)")
    ax.grid(True, axis="y", alpha=0.3)
    return _save(fig, path)
