"""Scene description and the class archetype signals of the simulator."""
from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.signal import butter, sosfilt

from src.dsp.core import Waveform
from src.utils.errors import BadConfig

SOURCE_CLASSES = ("car", "motorcycle", "train")
CLASS_IDS = {"background": 0, "car": 1, "motorcycle": 2, "train": 3}
MIN_SEPARATION_DEG = 15.0
MAX_SOURCES = 4
# Azimuths live on a grid of hundredths of a degree so rotations stay exact.
AZIMUTH_STEPS_PER_DEG = 100
FULL_TURN_STEPS = 360 * AZIMUTH_STEPS_PER_DEG


def azimuth_steps(degrees: float) -> int:
    return int(round(degrees * AZIMUTH_STEPS_PER_DEG)) % FULL_TURN_STEPS


def relative_azimuth(azimuth: float, orientation: float) -> float:
    """Azimuth seen from a pair facing ``orientation``, in [0, 360)."""
    return ((azimuth_steps(azimuth) - azimuth_steps(orientation)) % FULL_TURN_STEPS) / AZIMUTH_STEPS_PER_DEG


class SourceSpec(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    cls: str = Field(alias="class")
    azimuth: float = Field(ge=0.0, lt=360.0)
    distance: float = Field(ge=2.0, le=50.0)
    seed: int
    gain: float = Field(1.0, gt=0.0)

    @field_validator("cls")
    @classmethod
    def _known(cls, value):
        if value not in SOURCE_CLASSES:
            raise ValueError(f"class must be one of {SOURCE_CLASSES}, got {value!r}")
        return value

    @field_validator("azimuth")
    @classmethod
    def _on_grid(cls, value):
        return azimuth_steps(value) / AZIMUTH_STEPS_PER_DEG

    @property
    def class_id(self) -> int:
        return CLASS_IDS[self.cls]

    def rotated(self, delta: float) -> "SourceSpec":
        steps = (azimuth_steps(self.azimuth) + azimuth_steps(delta)) % FULL_TURN_STEPS
        return self.model_copy(update={"azimuth": steps / AZIMUTH_STEPS_PER_DEG})


def angular_gap(a: float, b: float) -> float:
    gap = abs(a - b) % 360.0
    return min(gap, 360.0 - gap)


class Scene(BaseModel):
    model_config = ConfigDict(frozen=True)

    sources: List[SourceSpec] = Field(default_factory=list, max_length=MAX_SOURCES)
    ambient_level: float = Field(0.0, ge=0.0)
    duration: float = Field(2.0, gt=0.0)
    seed: int = 0

    @model_validator(mode="after")
    def _separated(self):
        for i, first in enumerate(self.sources):
            for second in self.sources[i + 1:]:
                if angular_gap(first.azimuth, second.azimuth) < MIN_SEPARATION_DEG:
                    raise ValueError(
                        f"sources at {first.azimuth} and {second.azimuth} deg are closer than {MIN_SEPARATION_DEG} deg"
                    )
        return self

    def rotated(self, delta: float) -> "Scene":
        return self.model_copy(update={"sources": [s.rotated(delta) for s in self.sources]})

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True, indent=2)


def _unit_rms(x: np.ndarray) -> np.ndarray:
    level = np.sqrt(np.mean(x ** 2))
    return x / level if level > 0 else x


def _harmonic_stack(t: np.ndarray, f0: float, count: int, rng: np.random.Generator, nyquist: float) -> np.ndarray:
    out = np.zeros_like(t)
    for k in range(1, count + 1):
        if k * f0 >= nyquist:
            break
        out += np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) / k
    return out


def _pink_noise(n: int, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    spectrum /= np.sqrt(np.maximum(freqs, 20.0))
    spectrum[0] = 0.0
    return np.fft.irfft(spectrum, n=n)


def _band_noise(n: int, sample_rate: int, low: float, high: float, rng: np.random.Generator) -> np.ndarray:
    high = min(high, 0.45 * sample_rate)
    low = min(low, 0.5 * high)
    sos = butter(4, [low, high], btype="bandpass", fs=sample_rate, output="sos")
    return sosfilt(sos, rng.standard_normal(n))


def synth_source_signal(spec: SourceSpec, duration: float, sample_rate: int) -> Waveform:
    """Deterministic class archetype at unit RMS, scaled by ``spec.gain``."""
    if duration <= 0:
        raise BadConfig(f"duration must be positive, got {duration}")
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    nyquist = sample_rate / 2
    rng = np.random.default_rng(spec.seed)

    if spec.cls == "car":
        engine = _harmonic_stack(t, rng.uniform(80.0, 120.0), 6, rng, nyquist)
        road = _pink_noise(n, sample_rate, rng)
        signal = np.sqrt(0.6) * _unit_rms(engine) + np.sqrt(0.4) * _unit_rms(road)
    elif spec.cls == "motorcycle":
        engine = _harmonic_stack(t, rng.uniform(140.0, 220.0), 8, rng, nyquist)
        pulse = (0.5 * (1.0 + np.sin(2 * np.pi * rng.uniform(10.0, 14.0) * t + rng.uniform(0, 2 * np.pi)))) ** 2
        signal = _unit_rms(engine) * pulse + 0.1 * _unit_rms(rng.standard_normal(n))
    else:  # train
        hum = _harmonic_stack(t, rng.uniform(40.0, 60.0), 3, rng, nyquist)
        screech = _band_noise(n, sample_rate, 2000.0, 4000.0, rng)
        signal = np.sqrt(0.4) * _unit_rms(hum) + np.sqrt(0.6) * _unit_rms(screech)

    return Waveform(_unit_rms(signal) * spec.gain, sample_rate)


def spectral_centroid(w: Waveform) -> float:
    """Power-weighted mean frequency in Hz."""
    power = np.abs(np.fft.rfft(w.samples)) ** 2
    freqs = np.fft.rfftfreq(len(w), d=1.0 / w.sample_rate)
    total = power.sum()
    return float((freqs * power).sum() / total) if total > 0 else 0.0
