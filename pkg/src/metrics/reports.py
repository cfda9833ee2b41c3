"""Report models and their JSON / plain-text renderings."""
import json
import math
from typing import Dict, List, Mapping, Optional

import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator

SEMANTIC_COLUMNS = {"car": "Car", "motorcycle": "MC", "train": "Train"}


def _finite_nonnegative(value: float) -> float:
    if not math.isfinite(value) or value < 0:
        raise ValueError("metric values must be finite and non-negative")
    return value


class SemanticReport(BaseModel):
    per_class_iou: Dict[str, float]
    mean_iou: float = Field(ge=0.0, le=1.0)

    @field_validator("per_class_iou")
    @classmethod
    def _range(cls, value):
        if any(not 0.0 <= v <= 1.0 for v in value.values()):
            raise ValueError("IoU values lie in [0, 1]")
        return value


class DepthReport(BaseModel):
    abs_rel: float
    sq_rel: float
    rmse: float
    mse: float

    @field_validator("abs_rel", "sq_rel", "rmse", "mse")
    @classmethod
    def _valid(cls, value):
        return _finite_nonnegative(value)


class S3RReport(BaseModel):
    channels: List[str]
    s3r_mse: List[float]
    s3r_env: List[float]

    @model_validator(mode="after")
    def _lengths(self):
        if not len(self.channels) == len(self.s3r_mse) == len(self.s3r_env):
            raise ValueError("one MSE and one ENV value per channel")
        for value in self.s3r_mse + self.s3r_env:
            _finite_nonnegative(value)
        return self

    @property
    def mse_per_channel(self) -> List[float]:
        return self.s3r_mse

    @property
    def env_per_channel(self) -> List[float]:
        return self.s3r_env


def reports_to_json(reports: Mapping[str, Optional[BaseModel]]) -> str:
    """Stable JSON: sorted keys, skipped empty reports."""
    payload = {name: report.model_dump() for name, report in reports.items() if report is not None}
    return json.dumps(payload, indent=2, sort_keys=True)


def semantic_table(rows: Mapping[str, SemanticReport]) -> pd.DataFrame:
    records = {}
    for name, report in rows.items():
        record = {column: report.per_class_iou.get(key, float("nan")) * 100 for key, column in SEMANTIC_COLUMNS.items()}
        record["All"] = report.mean_iou * 100
        records[name] = record
    return pd.DataFrame.from_dict(records, orient="index", columns=[*SEMANTIC_COLUMNS.values(), "All"])


def depth_table(rows: Mapping[str, DepthReport]) -> pd.DataFrame:
    frame = pd.DataFrame.from_dict({name: r.model_dump() for name, r in rows.items()}, orient="index")
    return frame.rename(columns={"abs_rel": "Abs Rel", "sq_rel": "Sq Rel", "rmse": "RMSE", "mse": "MSE"})


def s3r_table(rows: Mapping[str, S3RReport]) -> pd.DataFrame:
    records = {}
    for name, report in rows.items():
        record = {f"MSE-{c}": v for c, v in zip(report.channels, report.s3r_mse)}
        record.update({f"ENV-{c}": v for c, v in zip(report.channels, report.s3r_env)})
        records[name] = record
    return pd.DataFrame.from_dict(records, orient="index")


def render_table(frame: pd.DataFrame, digits: int = 4) -> str:
    if frame.empty:
        return "(no rows)"
    return frame.to_string(float_format=lambda v: f"{v:.{digits}f}", na_rep="-")
