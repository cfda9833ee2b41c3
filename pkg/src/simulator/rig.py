"""Binaural rendering for the four-pair rig.

Each pair sees a source at relative azimuth theta = azimuth - orientation
(theta = 90 deg is the listener's right). Per-ear delays are
+-(ear_separation/2) sin(theta) / c on top of a common latency, applied as
fractional delays by linear interpolation; per-ear gains are
(1 -+ 0.35 sin(theta)) times a front/back shading shared by both ears;
distance attenuation is 1/d. No reverberation, no pinna filtering.
"""
import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.signal import correlate, correlation_lags

from config.settings import settings
from src.dsp.core import Waveform
from src.simulator.sources import Scene, relative_azimuth, synth_source_signal
from src.utils.errors import BadOrientation, ShapeMismatch

ILD_DEPTH = 0.35
LEFT, RIGHT = 0, 1


class RigConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    pair_orientations: Tuple[int, int, int, int] = settings.PAIR_ORIENTATIONS
    ear_separation: float = Field(settings.EAR_SEPARATION, gt=0.0)
    speed_of_sound: float = Field(settings.SPEED_OF_SOUND, gt=0.0)
    # orientation -> (left mic id, right mic id); pair (3, 8) faces front
    mic_ids: Dict[int, Tuple[int, int]] = {0: (3, 8), 90: (1, 6), 180: (4, 7), 270: (2, 5)}

    @model_validator(mode="after")
    def _layout(self):
        if tuple(self.pair_orientations) != (0, 90, 180, 270):
            raise ValueError("the rig has pairs at exactly 0, 90, 180 and 270 degrees")
        if set(self.mic_ids) != set(self.pair_orientations):
            raise ValueError("mic_ids must map every pair orientation")
        ids = sorted(i for pair in self.mic_ids.values() for i in pair)
        if ids != list(range(1, 9)):
            raise ValueError("mic ids must be a permutation of 1..8")
        return self

    def channel_index(self, mic_id: int) -> int:
        return mic_id - 1

    def pair_channels(self, orientation: int) -> Tuple[int, int]:
        left, right = self.mic_ids[orientation]
        return self.channel_index(left), self.channel_index(right)


DEFAULT_RIG = RigConfig()


@dataclass(frozen=True)
class RigClip:
    """Eight sample-aligned channels; mic id k lives at row k-1."""

    channels: np.ndarray
    sample_rate: int
    rig: RigConfig = DEFAULT_RIG

    def __post_init__(self):
        if self.channels.ndim != 2 or self.channels.shape[0] != 8:
            raise ShapeMismatch(f"rig clips carry 8 channels, got shape {self.channels.shape}")

    def pair(self, orientation: int) -> Tuple[Waveform, Waveform]:
        if orientation not in self.rig.mic_ids:
            raise BadOrientation(f"no pair at {orientation} deg")
        left, right = self.rig.pair_channels(orientation)
        return Waveform(self.channels[left], self.sample_rate), Waveform(self.channels[right], self.sample_rate)

    def mic(self, mic_id: int) -> Waveform:
        return Waveform(self.channels[self.rig.channel_index(mic_id)], self.sample_rate)


def fractional_delay(signal: np.ndarray, delay_samples: float) -> np.ndarray:
    """Delay by a non-negative fractional amount, zero-filled at the start."""
    n = signal.shape[0]
    positions = np.arange(n, dtype=np.float64)
    return np.interp(positions - delay_samples, positions, signal, left=0.0, right=0.0)


def ear_gains(theta_deg: float) -> Tuple[float, float]:
    theta = np.deg2rad(theta_deg)
    s, c = np.sin(theta), np.cos(theta)
    shade = 0.85 + 0.15 * c
    return shade * (1.0 - ILD_DEPTH * s), shade * (1.0 + ILD_DEPTH * s)


def ear_delays(theta_deg: float, rig: RigConfig, sample_rate: int) -> Tuple[float, float]:
    """Left/right delays in samples; the common latency keeps both >= 0."""
    latency = rig.ear_separation / 2.0 / rig.speed_of_sound
    half_itd = rig.ear_separation / 2.0 * np.sin(np.deg2rad(theta_deg)) / rig.speed_of_sound
    return (latency + half_itd) * sample_rate, (latency - half_itd) * sample_rate


def _ambient(scene: Scene, side: int, n: int) -> np.ndarray:
    # Seeded by scene and ear side only, so every pair hears the same field.
    rng = np.random.default_rng([scene.seed, side])
    return scene.ambient_level * rng.standard_normal(n)


def render_binaural(scene: Scene, orientation: int, rig: RigConfig = DEFAULT_RIG,
                    sr: int = settings.SAMPLE_RATE) -> Tuple[Waveform, Waveform]:
    if orientation not in rig.pair_orientations:
        raise BadOrientation(f"orientation {orientation} is not one of {rig.pair_orientations}")
    n = int(round(scene.duration * sr))
    left = np.zeros(n)
    right = np.zeros(n)

    for source in scene.sources:
        signal = synth_source_signal(source, scene.duration, sr).samples
        theta = relative_azimuth(source.azimuth, orientation)
        gain_left, gain_right = ear_gains(theta)
        delay_left, delay_right = ear_delays(theta, rig, sr)
        attenuation = 1.0 / source.distance
        left += attenuation * gain_left * fractional_delay(signal, delay_left)
        right += attenuation * gain_right * fractional_delay(signal, delay_right)

    if scene.ambient_level > 0:
        left += _ambient(scene, LEFT, n)
        right += _ambient(scene, RIGHT, n)
    return Waveform(left, sr), Waveform(right, sr)


def render_rig(scene: Scene, rig: RigConfig = DEFAULT_RIG, sr: int = settings.SAMPLE_RATE) -> RigClip:
    n = int(round(scene.duration * sr))
    channels = np.zeros((8, n))
    for orientation in rig.pair_orientations:
        left, right = render_binaural(scene, orientation, rig, sr)
        left_index, right_index = rig.pair_channels(orientation)
        channels[left_index] = left.samples
        channels[right_index] = right.samples
    return RigClip(channels, sr, rig)


def estimate_itd_samples(left: Waveform, right: Waveform, max_lag: int) -> int:
    """Cross-correlation lag; positive when the right ear leads."""
    xcorr = correlate(left.samples, right.samples, mode="full", method="fft")
    lags = correlation_lags(len(left), len(right), mode="full")
    window = np.abs(lags) <= max_lag
    return int(lags[window][np.argmax(xcorr[window])])


def max_itd_samples(rig: RigConfig, sample_rate: int) -> int:
    return int(math.ceil(rig.ear_separation / rig.speed_of_sound * sample_rate))
