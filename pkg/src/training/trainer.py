"""Training loop with per-epoch checkpoints and validation early stopping."""
import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field
from tqdm import tqdm

from src.autodiff.checkpoint import save_checkpoint
from src.autodiff.optim import Adam
from src.autodiff.tensor import Tensor, no_grad
from src.metrics.reports import DepthReport, S3RReport, SemanticReport
from src.models.binaural_net import BinauralPerceptionNet
from src.training.data import SceneDataset, batch_indices, open_splits
from src.training.evaluate import evaluate_model
from src.training.losses import LossWeights, total_loss
from src.training.plots import plot_loss_curve
from src.training.runs import CHECKPOINT_NAME, RUN_RECORD_NAME, build_model, write_run_config
from src.utils.config import Config
from src.utils.errors import DataMissing, DivergedLoss, IoFailure, NonFiniteValue
from src.utils.logging import get_logger

logger = get_logger(__name__)


class EpochLog(BaseModel):
    epoch: int
    steps: int
    train_loss: float
    components: Dict[str, float]
    val_loss: Optional[float] = None


class RunRecord(BaseModel):
    config_hash: str
    seed: int
    epochs: List[EpochLog] = Field(default_factory=list)
    semantic: Optional[SemanticReport] = None
    depth: Optional[DepthReport] = None
    s3r: Optional[S3RReport] = None
    stopped_early: bool = False
    diverged: bool = False
    wall_time: float = 0.0
    checkpoint: Optional[str] = None

    def comparable(self) -> dict:
        """Everything except timing and where the run was written."""
        return self.model_dump(exclude={"wall_time", "checkpoint"})

    def save(self, path) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot write run record {path}: {exc}") from exc
        return path


def validation_loss(model: BinauralPerceptionNet, dataset: SceneDataset, cfg: Config, weights: LossWeights) -> float:
    model.eval()
    values = []
    with no_grad():
        for indices in batch_indices(list(range(len(dataset))), cfg.train.batch):
            batch = dataset.batch(indices)
            outputs = model.forward_multitask(Tensor(batch.inputs))
            loss, _ = total_loss(outputs, batch, weights, dataset.far_depth, cfg.tasks)
            values.append(loss.item() * len(batch))
    model.train()
    return float(np.sum(values) / max(len(dataset), 1))


def train(cfg: Config, out_dir, evaluate_after: bool = True) -> RunRecord:
    """Train on the train split, validate each epoch, evaluate on test."""
    out_dir = Path(out_dir)
    started = time.perf_counter()
    datasets = open_splits(cfg)
    train_set, val_set = datasets["train"], datasets.get("val")
    if len(train_set) == 0:
        raise DataMissing("the train split is empty")

    model = build_model(cfg, train_set)
    optimizer = Adam(model.parameters(), lr=cfg.train.lr)
    weights = LossWeights(lambda1=cfg.train.lambda1, lambda2=cfg.train.lambda2)
    rng = np.random.default_rng(cfg.train.seed)
    record = RunRecord(config_hash=cfg.digest(), seed=cfg.train.seed)
    checkpoint_path = out_dir / CHECKPOINT_NAME
    write_run_config(cfg, out_dir)

    logger.info(
        f"🚀 Training {model.parameter_count()} parameters on {len(train_set)} scenes "
        f"(tasks {','.join(cfg.tasks)}, inputs {cfg.train.input_mics})"
    )
    best_val, stale, steps = float("inf"), 0, 0
    for epoch in range(cfg.train.epochs):
        model.train()
        order = rng.permutation(len(train_set)).tolist()
        epoch_loss, epoch_parts, seen = 0.0, {}, 0
        for indices in tqdm(batch_indices(order, cfg.train.batch), desc=f"epoch {epoch}", disable=None):
            batch = train_set.batch(indices)
            model.zero_grad()
            try:
                outputs = model.forward_multitask(Tensor(batch.inputs))
                loss, parts = total_loss(outputs, batch, weights, train_set.far_depth, cfg.tasks)
                loss.backward()
            except NonFiniteValue as exc:
                record.diverged = True
                record.wall_time = time.perf_counter() - started
                record.save(out_dir / RUN_RECORD_NAME)
                raise DivergedLoss(f"epoch {epoch}, step {steps}: {exc.detail}") from exc
            optimizer.step()
            steps += 1
            epoch_loss += loss.item() * len(batch)
            for task, value in parts.items():
                epoch_parts[task] = epoch_parts.get(task, 0.0) + value.item() * len(batch)
            seen += len(batch)
            if cfg.train.max_steps and steps >= cfg.train.max_steps:
                break

        entry = EpochLog(
            epoch=epoch,
            steps=steps,
            train_loss=epoch_loss / max(seen, 1),
            components={task: value / max(seen, 1) for task, value in epoch_parts.items()},
        )
        if val_set is not None and len(val_set):
            entry.val_loss = validation_loss(model, val_set, cfg, weights)
        record.epochs.append(entry)
        save_checkpoint(model, out_dir / "checkpoints" / f"epoch_{epoch:03d}.bapn")
        save_checkpoint(model, checkpoint_path)
        logger.info(f"📊 Epoch {epoch}: train {entry.train_loss:.4f}"
                    + (f", val {entry.val_loss:.4f}" if entry.val_loss is not None else ""))

        if cfg.train.max_steps and steps >= cfg.train.max_steps:
            break
        if entry.val_loss is not None:
            if entry.val_loss < best_val:
                best_val, stale = entry.val_loss, 0
            else:
                stale += 1
                if stale >= cfg.train.patience:
                    logger.info(f"⚠️ Validation loss flat for {stale} epochs, stopping")
                    record.stopped_early = True
                    break

    record.checkpoint = str(checkpoint_path)
    if evaluate_after and "test" in datasets:
        result = evaluate_model(model, datasets["test"], cfg, datasets["train"])
        record.semantic, record.depth, record.s3r = result.semantic, result.depth, result.s3r
    record.wall_time = time.perf_counter() - started
    record.save(out_dir / RUN_RECORD_NAME)
    plot_loss_curve(record, out_dir / "loss_curve.svg")
    logger.info(f"✅ Training finished in {record.wall_time:.1f}s, checkpoint at {checkpoint_path}")
    return record
