"""Ablation grids: every cell is a full training run repeated over seeds.

Cells run in worker processes when ``BAPN_THREADS`` > 1; a failing run is
recorded in its row instead of aborting the grid.
"""
import json
import re
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from statistics import median
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from config.settings import settings
from src.training.plots import plot_ablation
from src.training.trainer import train
from src.utils.config import Config, build_config, format_value
from src.utils.errors import BAPNError, BadConfig, IoFailure
from src.utils.logging import get_logger

logger = get_logger(__name__)

Cell = Tuple[str, Dict[str, str]]
DEFAULT_SEEDS = 3

GRIDS: Dict[str, List[Cell]] = {
    "inputs": [
        ("mono", {"input_mics": "mono", "tasks_enabled": "semantic"}),
        ("binaural", {"input_mics": "pair", "tasks_enabled": "semantic"}),
        ("two_pairs", {"input_mics": "two_pairs", "tasks_enabled": "semantic"}),
        ("four_pairs", {"input_mics": "four_pairs", "tasks_enabled": "semantic"}),
    ],
    "orientation": [
        (f"pair_{deg}", {"input_mics": f"pair:{deg}", "tasks_enabled": "semantic"}) for deg in (0, 90, 180, 270)
    ],
    "output_pairs": [
        ("1_pair", {"tasks_enabled": "semantic,s3r", "target_pairs": "90"}),
        ("2_pairs", {"tasks_enabled": "semantic,s3r", "target_pairs": "90,180"}),
        ("3_pairs", {"tasks_enabled": "semantic,s3r", "target_pairs": "90,180,270"}),
    ],
    "tasks": [
        ("B", {"tasks_enabled": "semantic"}),
        ("B:D", {"tasks_enabled": "semantic,depth"}),
        ("B:S", {"tasks_enabled": "semantic,s3r"}),
        ("B:SD", {"tasks_enabled": "semantic,depth,s3r"}),
    ],
    "aspp": [
        ("aspp", {"use_aspp": "true", "tasks_enabled": "semantic"}),
        ("no_aspp", {"use_aspp": "false", "tasks_enabled": "semantic"}),
    ],
    "minimal": [
        ("mono", {"input_mics": "mono", "tasks_enabled": "semantic"}),
        ("binaural", {"input_mics": "pair", "tasks_enabled": "semantic"}),
    ],
}


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_]+", "_", name).strip("_") or "cell"


def _run_cell(job: dict) -> dict:
    """Worker entry: one (cell, seed) training run; never raises."""
    try:
        cfg = build_config(job["values"])
        record = train(cfg, job["out_dir"])
        return {
            "cell": job["cell"],
            "seed": job["seed"],
            "config_hash": record.config_hash,
            "mean_iou": record.semantic.mean_iou if record.semantic else None,
            "depth_rmse": record.depth.rmse if record.depth else None,
            "s3r_mse": (sum(record.s3r.s3r_mse) / len(record.s3r.s3r_mse)) if record.s3r and record.s3r.s3r_mse else None,
            "error": None,
        }
    except BAPNError as exc:
        return {"cell": job["cell"], "seed": job["seed"], "config_hash": None, "error": exc.to_dict()}


def plan_jobs(base: Config, cells: Sequence[Cell], seeds: int, out_dir: Path) -> List[dict]:
    jobs = []
    for name, overrides in cells:
        for offset in range(seeds):
            seed = base.train.seed + offset
            cfg = base.with_overrides({**overrides, "seed": seed})
            jobs.append({
                "cell": name,
                "seed": seed,
                "values": {key: format_value(value) for key, value in cfg.flat().items()},
                "out_dir": str(out_dir / _slug(name) / f"seed_{seed}"),
            })
    return jobs


def run_jobs(jobs: Sequence[dict], workers: int) -> List[dict]:
    if workers <= 1 or len(jobs) < 2:
        return [_run_cell(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, jobs))


def summarize(cells: Sequence[Cell], results: Sequence[dict]) -> pd.DataFrame:
    """One row per cell in grid order, seeds merged by (config hash, seed)."""
    ordered = sorted(results, key=lambda r: (r.get("config_hash") or "", r["seed"]))
    rows = []
    for name, overrides in cells:
        runs = [r for r in ordered if r["cell"] == name]
        scores = [r["mean_iou"] for r in runs if r.get("error") is None and r.get("mean_iou") is not None]
        failures = [f"seed {r['seed']}: {r['error']['error']}" for r in runs if r.get("error")]
        rows.append({
            "cell": name,
            "overrides": " ".join(f"{k}={v}" for k, v in sorted(overrides.items())),
            "seeds": len(runs),
            "median_miou": median(scores) if scores else float("nan"),
            "miou_per_seed": " ".join(f"{s:.4f}" for s in scores),
            "status": "ok" if not failures else "; ".join(failures),
        })
    return pd.DataFrame(rows, columns=["cell", "overrides", "seeds", "median_miou", "miou_per_seed", "status"])


def ablate(base: Config, grid: str, out_dir, seeds: int = DEFAULT_SEEDS,
           cells: Optional[Sequence[Cell]] = None) -> pd.DataFrame:
    """Run every cell of ``grid`` over ``seeds`` seeds and write the tables."""
    if cells is None:
        if grid not in GRIDS:
            raise BadConfig(f"unknown grid '{grid}', choose from {', '.join(GRIDS)}")
        cells = GRIDS[grid]
    if seeds < 1:
        raise BadConfig("seeds must be >= 1")
    if seeds < DEFAULT_SEEDS:
        logger.warning(f"⚠️ {seeds} seed(s) per cell; trend comparisons want at least {DEFAULT_SEEDS}")
    out_dir = Path(out_dir)

    jobs = plan_jobs(base, cells, seeds, out_dir)
    logger.info(f"🚀 Ablation '{grid}': {len(cells)} cells x {seeds} seeds")
    results = run_jobs(jobs, max(1, settings.THREADS))
    table = summarize(cells, results)

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "ablation.txt").write_text(
            table.to_string(index=False, float_format=lambda v: f"{v:.4f}", na_rep="-") + "\n", encoding="utf-8")
        table.to_csv(out_dir / "ablation.csv", index=False)
        (out_dir / "ablation.json").write_text(json.dumps(results, indent=2, sort_keys=True), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write ablation tables under {out_dir}: {exc}") from exc
    plot_ablation(table["cell"].tolist(), table["median_miou"].tolist(), out_dir / "ablation.svg")
    logger.info(f"✅ Ablation tables written to {out_dir}")
    return table
