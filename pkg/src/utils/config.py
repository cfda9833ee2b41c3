"""Flat ``key = value`` experiment configuration.

Keys are spread over three pydantic schemas (generation, model, training).
A config file may set any of them; ``--set key=value`` overrides apply on
top. Everything is validated before any work starts.
"""
import hashlib
import json
import re
import typing
from pathlib import Path
from typing import Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config.settings import settings
from src.utils.errors import BadConfig

TASKS = ("semantic", "depth", "s3r")
INPUT_MICS_PATTERN = re.compile(r"^(mono(:[1-8])?|pair(:(0|90|180|270))?|two_pairs|four_pairs)$")


class _FlatSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    @field_validator("*", mode="before")
    @classmethod
    def _split_commas(cls, value, info):
        annotation = cls.model_fields[info.field_name].annotation
        if isinstance(value, str) and typing.get_origin(annotation) is tuple:
            return tuple(part.strip() for part in value.split(",") if part.strip())
        return value


class GenConfig(_FlatSection):
    n_scenes: int = Field(100, ge=1, description="scenes generated across all splits")
    splits: Tuple[int, int, int] = Field((80, 10, 10), description="train/val/test percentages")
    min_sources: int = Field(1, ge=0, le=4, description="fewest sources per scene")
    max_sources: int = Field(2, ge=0, le=4, description="most sources per scene")
    distance_min: float = Field(2.0, ge=2.0, description="closest source distance (m)")
    distance_max: float = Field(40.0, description="farthest source distance (m)")
    ambient_level: float = Field(0.005, ge=0.0, description="std of white ambient noise")
    sample_rate: int = Field(settings.SAMPLE_RATE, gt=0, description="rendering sample rate (Hz)")
    duration: float = Field(settings.CLIP_SECONDS, gt=0.0, description="clip length (s)")
    label_grid: Tuple[int, int] = Field((32, 64), description="H,W of label and depth grids")
    far_depth: float = Field(settings.FAR_DEPTH, gt=0.0, description="depth of background cells (m)")
    gen_seed: int = Field(0, description="master seed for scene generation")

    @model_validator(mode="after")
    def _check(self):
        if self.min_sources > self.max_sources:
            raise ValueError("min_sources must not exceed max_sources")
        if not self.distance_min <= self.distance_max < self.far_depth:
            raise ValueError("need distance_min <= distance_max < far_depth")
        if sum(self.splits) != 100 or min(self.splits) < 0:
            raise ValueError("splits must be non-negative percentages summing to 100")
        if min(self.label_grid) < 8:
            raise ValueError("label_grid dimensions must be >= 8")
        return self


class ModelConfig(_FlatSection):
    base_channels: int = Field(32, ge=1, description="width of the first strided conv")
    aspp_filters: int = Field(64, ge=8, description="filters per ASPP branch")
    dilations: Tuple[int, int, int] = Field((6, 12, 18), description="ASPP dilation rates")
    dilation_scale: float = Field(1.0, gt=0.0, description="multiplier applied to ASPP dilations")
    use_aspp: bool = Field(True, description="route encoder features through ASPP")
    decoder_channels: int = Field(32, ge=1, description="width of the 1x1 decoder convs")
    output_grid: Tuple[int, int] = Field((32, 64), description="H,W of semantic/depth outputs")
    target_pairs: Tuple[int, ...] = Field((90, 180, 270), description="S3R output pair orientations")
    tasks_enabled: Tuple[str, ...] = Field(TASKS, description="subset of semantic,depth,s3r")
    s3r_strides: Tuple[int, int, int, int, int] = Field((2, 2, 2, 2, 1), description="strides of the 5 up-convs")
    head_init: Literal["default", "zero"] = Field("default", description="final conv init of each head")

    @field_validator("target_pairs")
    @classmethod
    def _pairs(cls, value):
        if any(p not in (90, 180, 270) for p in value) or len(set(value)) != len(value):
            raise ValueError("target_pairs must be distinct values among 90,180,270")
        return value

    @field_validator("tasks_enabled")
    @classmethod
    def _tasks(cls, value):
        if not value or any(t not in TASKS for t in value):
            raise ValueError(f"tasks_enabled must be a non-empty subset of {','.join(TASKS)}")
        return tuple(t for t in TASKS if t in value)

    @field_validator("s3r_strides")
    @classmethod
    def _strides(cls, value):
        if any(s not in (1, 2) for s in value):
            raise ValueError("s3r_strides entries must be 1 or 2")
        return value

    def effective_dilations(self) -> Tuple[int, ...]:
        return tuple(max(1, int(round(d * self.dilation_scale))) for d in self.dilations)


class TrainConfig(_FlatSection):
    input_mics: str = Field("pair", description="mono[:id] | pair[:deg] | two_pairs | four_pairs")
    seed: int = Field(0, description="seed for init and batch order")
    epochs: int = Field(10, ge=1, description="maximum training epochs")
    max_steps: int = Field(0, ge=0, description="stop after this many steps (0 = no cap)")
    lr: float = Field(1e-5, ge=0.0, description="Adam learning rate")
    batch: int = Field(2, ge=1, description="clips per optimisation step")
    lambda1: float = Field(0.2, ge=0.0, description="depth loss weight")
    lambda2: float = Field(0.2, ge=0.0, description="S3R loss weight")
    patience: int = Field(3, ge=1, description="epochs without val improvement before stopping")
    window: int = Field(settings.STFT_WINDOW, description="STFT window (samples)")
    hop: int = Field(settings.STFT_HOP, description="STFT hop (samples)")
    target_rms: float = Field(settings.TARGET_RMS, gt=0.0, description="RMS after normalisation")
    normalization: Literal["clip", "dataset"] = Field("clip", description="clip gain or dataset mean-RMS gain")
    limit_scenes: int = Field(0, ge=0, description="use only the first N scenes per split (0 = all)")
    data_root: str = Field(settings.DATA_ROOT, description="dataset root written by gen")
    cache_spectrograms: bool = Field(False, description="keep per-mic STFTs under each scene directory")

    @field_validator("input_mics")
    @classmethod
    def _mics(cls, value):
        if not INPUT_MICS_PATTERN.match(value):
            raise ValueError("input_mics must be mono[:id], pair[:deg], two_pairs or four_pairs")
        return value

    @model_validator(mode="after")
    def _stft(self):
        if self.window % 2 or not 0 < self.hop <= self.window // 2:
            raise ValueError("window must be even and 0 < hop <= window/2")
        return self


SECTIONS = {"gen": GenConfig, "model": ModelConfig, "train": TrainConfig}


class Config(BaseModel):
    model_config = ConfigDict(frozen=True)

    gen: GenConfig = GenConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()

    @model_validator(mode="after")
    def _cross(self):
        if tuple(self.model.output_grid) != tuple(self.gen.label_grid):
            raise ValueError("output_grid must equal label_grid")
        if "s3r" in self.model.tasks_enabled:
            if not self.model.target_pairs:
                raise ValueError("s3r needs at least one target pair")
            if self.train.input_mics.startswith("mono") or self.train.input_mics in ("pair:90", "pair:180", "pair:270"):
                raise ValueError("s3r needs the 0 degree pair among the inputs")
        return self

    @property
    def tasks(self) -> Tuple[str, ...]:
        return self.model.tasks_enabled

    def flat(self) -> dict:
        out = {}
        for section in SECTIONS:
            out.update(getattr(self, section).model_dump())
        return out

    def digest(self) -> str:
        """Hash of everything except where the data lives and how it is cached."""
        flat = self.flat()
        flat.pop("data_root", None)
        flat.pop("cache_spectrograms", None)
        blob = json.dumps(flat, sort_keys=True, default=list)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def to_text(self) -> str:
        lines = []
        for section, schema in SECTIONS.items():
            lines.append(f"# [{section}]")
            for key, value in getattr(self, section).model_dump().items():
                lines.append(f"{key} = {format_value(value)}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, overrides: dict) -> "Config":
        flat = {key: format_value(value) for key, value in self.flat().items()}
        flat.update({k: format_value(v) for k, v in overrides.items()})
        return build_config(flat)


def format_value(value) -> str:
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _owner(key: str) -> str:
    for section, schema in SECTIONS.items():
        if key in schema.model_fields:
            return section
    raise BadConfig(f"unknown config key '{key}'")


def parse_kv_text(text: str) -> dict:
    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadConfig(f"line {number}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def parse_overrides(pairs: Sequence[str]) -> dict:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise BadConfig(f"override '{pair}' is not key=value")
        key, value = (part.strip() for part in pair.split("=", 1))
        out[key] = value
    return out


def build_config(values: dict) -> Config:
    grouped = {section: {} for section in SECTIONS}
    for key, value in values.items():
        grouped[_owner(key)][key] = value
    try:
        return Config(**{section: SECTIONS[section](**fields) for section, fields in grouped.items()})
    except ValidationError as exc:
        raise BadConfig(_summarize(exc)) from exc


def load_config(path: Optional[str] = None, overrides: Sequence[str] = ()) -> Config:
    values = {}
    if path:
        config_path = Path(path)
        if not config_path.is_file():
            raise BadConfig(f"config file not found: {path}")
        values.update(parse_kv_text(config_path.read_text(encoding="utf-8")))
    values.update(parse_overrides(overrides))
    return build_config(values)


def _summarize(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err.get("loc", ())) or "config"
        parts.append(f"{where}: {err.get('msg')}")
    return "; ".join(parts)


def describe_keys() -> str:
    """One line per key with its default, straight from the schemas."""
    lines = []
    for section, schema in SECTIONS.items():
        lines.append(f"[{section}]")
        for key, field in schema.model_fields.items():
            lines.append(f"  {key} = {format_value(field.default)}    {field.description or ''}")
    return "\n".join(lines)
