"""Run directory artifacts: model construction, config sidecar, checkpoint loading."""
import json
from pathlib import Path

from src.autodiff.checkpoint import load_checkpoint
from src.models.binaural_net import BinauralPerceptionNet
from src.training.data import SceneDataset
from src.utils.config import Config, build_config, format_value
from src.utils.errors import BadConfig, CheckpointCorrupt, IoFailure

CHECKPOINT_NAME = "model.bapn"
RUN_CONFIG_NAME = "run_config.json"
RUN_RECORD_NAME = "run_record.json"


def build_model(cfg: Config, dataset: SceneDataset) -> BinauralPerceptionNet:
    return BinauralPerceptionNet(
        cfg.model,
        in_channels=len(dataset.mic_ids),
        spec_shape=dataset.spec_shape,
        seed=cfg.train.seed,
        far_depth=dataset.far_depth,
    )


def write_run_config(cfg: Config, out_dir) -> Path:
    path = Path(out_dir) / RUN_CONFIG_NAME
    payload = {"config_hash": cfg.digest(), "config": cfg.flat()}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=list), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def read_run_config(checkpoint, overrides: dict = None) -> Config:
    """Config stored next to ``checkpoint``, with ``overrides`` applied on top."""
    path = Path(checkpoint).parent / RUN_CONFIG_NAME
    if not path.is_file():
        raise CheckpointCorrupt(f"no {RUN_CONFIG_NAME} next to {checkpoint}")
    try:
        stored = json.loads(path.read_text(encoding="utf-8"))["config"]
    except (ValueError, KeyError) as exc:
        raise CheckpointCorrupt(f"{path} is not a run config") from exc
    try:
        cfg = build_config({key: format_value(value) for key, value in stored.items()})
    except BadConfig as exc:
        raise CheckpointCorrupt(f"stored config no longer validates: {exc.detail}") from exc
    return cfg.with_overrides(overrides) if overrides else cfg


def restore_model(checkpoint, cfg: Config, dataset: SceneDataset) -> BinauralPerceptionNet:
    if not Path(checkpoint).is_file():
        raise CheckpointCorrupt(f"checkpoint not found: {checkpoint}")
    model = build_model(cfg, dataset)
    load_checkpoint(model, checkpoint)
    return model.eval()
