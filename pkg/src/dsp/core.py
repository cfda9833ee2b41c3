"""Signal-processing kernels: normalisation, STFT/ISTFT, log-spectrograms,
complex-mask algebra, envelopes and difference-signal reconstruction.

All functions are pure; inputs are never modified.
"""
from dataclasses import dataclass, field
from typing import Optional

import librosa
import numpy as np
from scipy.signal import hilbert

from config.settings import settings
from src.utils.errors import BadConfig, ShapeMismatch, SilentInput

ALPHAS = (90, 180, 270)
# mask entries may exceed 1 by this much (float32 decoder outputs)
MASK_TOLERANCE = 1e-6


@dataclass(frozen=True)
class StftPreset:
    """Clip length and STFT framing; ``shape`` is the (freq_bins, frames) grid they give."""

    sample_rate: int
    clip_seconds: float
    window: int
    hop: int

    @property
    def n_samples(self) -> int:
        return int(round(self.sample_rate * self.clip_seconds))

    @property
    def shape(self):
        return self.window // 2 + 1, frames_for(self.n_samples, self.hop)


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ShapeMismatch(f"waveform must be 1-D, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise BadConfig(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise BadConfig("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def rms(self) -> float:
        return rms(self)


@dataclass(frozen=True)
class ComplexSpectrogram:
    bins: np.ndarray
    window: int
    hop: int
    sample_rate: int
    length: Optional[int] = None

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.complex128)
        if bins.ndim != 2 or bins.shape[1] < 1:
            raise ShapeMismatch(f"spectrogram must be (freq_bins, frames), got {bins.shape}")
        if bins.shape[0] != self.window // 2 + 1:
            raise ShapeMismatch(f"{bins.shape[0]} freq bins do not match window {self.window}")
        if not np.all(np.isfinite(bins)):
            raise BadConfig("spectrogram contains non-finite values")
        object.__setattr__(self, "bins", bins)

    @property
    def freq_bins(self) -> int:
        return self.bins.shape[0]

    @property
    def frames(self) -> int:
        return self.bins.shape[1]

    @property
    def shape(self):
        return self.bins.shape

    def replace_bins(self, bins: np.ndarray) -> "ComplexSpectrogram":
        return ComplexSpectrogram(bins, self.window, self.hop, self.sample_rate, self.length)


@dataclass(frozen=True)
class ComplexMask:
    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        real = np.asarray(self.real, dtype=np.float64)
        imag = np.asarray(self.imag, dtype=np.float64)
        if real.shape != imag.shape or real.ndim != 2:
            raise ShapeMismatch(f"mask parts differ: {real.shape} vs {imag.shape}")
        limit = 1.0 + MASK_TOLERANCE
        if np.abs(real).max(initial=0.0) > limit or np.abs(imag).max(initial=0.0) > limit:
            raise BadConfig("mask entries must lie in [-1, 1]")
        object.__setattr__(self, "real", real)
        object.__setattr__(self, "imag", imag)

    @property
    def shape(self):
        return self.real.shape


@dataclass(frozen=True)
class DifferenceSignal:
    wave: Waveform
    alpha: int
    channel: str = field(default="left")

    def __post_init__(self):
        if self.alpha not in ALPHAS:
            raise BadConfig(f"alpha must be one of {ALPHAS}, got {self.alpha}")
        if self.channel not in ("left", "right"):
            raise BadConfig(f"channel must be left or right, got {self.channel}")


def frames_for(n_samples: int, hop: int) -> int:
    """Frame count under center padding."""
    return n_samples // hop + 1


def rms(w: Waveform) -> float:
    return float(np.sqrt(np.mean(np.square(w.samples)))) if len(w) else 0.0


def rms_gain(w: Waveform, target_rms: float = settings.TARGET_RMS,
             silence_floor: float = settings.SILENCE_FLOOR) -> float:
    """Scale factor that brings ``w`` to ``target_rms``."""
    if len(w) == 0:
        raise SilentInput("empty waveform")
    level = rms(w)
    if level <= silence_floor:
        raise SilentInput(f"RMS {level:.3g} is at or below the silence floor {silence_floor:g}")
    return target_rms / level


def rms_normalize(w: Waveform, target_rms: float = settings.TARGET_RMS,
                  silence_floor: float = settings.SILENCE_FLOOR) -> Waveform:
    return Waveform(w.samples * rms_gain(w, target_rms, silence_floor), w.sample_rate)


def _check_stft_params(window: int, hop: int) -> None:
    if window <= 0 or window % 2:
        raise BadConfig(f"window must be a positive even number, got {window}")
    if not 0 < hop <= window:
        raise BadConfig(f"hop must satisfy 0 < hop <= window, got {hop}")


def stft(w: Waveform, window: int = settings.STFT_WINDOW, hop: int = settings.STFT_HOP) -> ComplexSpectrogram:
    """Hann-windowed STFT with center (zero) padding."""
    _check_stft_params(window, hop)
    if len(w) < 1:
        raise BadConfig("cannot transform an empty waveform")
    bins = librosa.stft(
        w.samples,
        n_fft=window,
        hop_length=hop,
        win_length=window,
        window="hann",
        center=True,
        pad_mode="constant",
    )
    return ComplexSpectrogram(bins, window, hop, w.sample_rate, length=len(w))


def istft(s: ComplexSpectrogram, length: Optional[int] = None) -> Waveform:
    """Overlap-add inverse, normalised by the summed squared window."""
    _check_stft_params(s.window, s.hop)
    if s.hop > s.window // 2:
        raise BadConfig(f"hop {s.hop} > window/2 breaks Hann overlap-add reconstruction")
    if length is None:
        length = s.length if s.length is not None else (s.frames - 1) * s.hop
    samples = librosa.istft(
        s.bins,
        hop_length=s.hop,
        win_length=s.window,
        n_fft=s.window,
        window="hann",
        center=True,
        length=length,
    )
    return Waveform(samples, s.sample_rate)


def log_magnitude(s: ComplexSpectrogram) -> np.ndarray:
    return np.log1p(np.abs(s.bins))


def apply_complex_mask(s: ComplexSpectrogram, m: ComplexMask) -> ComplexSpectrogram:
    if s.shape != m.shape:
        raise ShapeMismatch(f"mask {m.shape} does not match spectrogram {s.shape}")
    return s.replace_bins(s.bins * (m.real + 1j * m.imag))


def difference_signal(reference: Waveform, target: Waveform, alpha: int, channel: str = "left") -> DifferenceSignal:
    """x^D = x^0 - x^alpha for one ear."""
    if len(reference) != len(target) or reference.sample_rate != target.sample_rate:
        raise ShapeMismatch("reference and target must share length and sample rate")
    return DifferenceSignal(Waveform(reference.samples - target.samples, reference.sample_rate), alpha, channel)


def reconstruct_target(reference: Waveform, diff_spec: ComplexSpectrogram) -> Waveform:
    """Invert the difference construction: x^alpha = x^0 - istft(diff)."""
    if diff_spec.sample_rate != reference.sample_rate:
        raise ShapeMismatch(f"sample rates differ: {diff_spec.sample_rate} vs {reference.sample_rate}")
    if frames_for(len(reference), diff_spec.hop) != diff_spec.frames:
        raise ShapeMismatch(
            f"{diff_spec.frames} frames cannot come from a {len(reference)}-sample reference at hop {diff_spec.hop}"
        )
    if diff_spec.length is not None and diff_spec.length != len(reference):
        raise ShapeMismatch(f"difference spans {diff_spec.length} samples, reference {len(reference)}")
    diff = istft(diff_spec, length=len(reference))
    return Waveform(reference.samples - diff.samples, reference.sample_rate)


def envelope(w: Waveform) -> np.ndarray:
    """Magnitude of the analytic signal."""
    if len(w) == 0:
        raise ShapeMismatch("envelope of an empty waveform")
    return np.abs(hilbert(w.samples))


def interior_snr_db(reference: Waveform, estimate: Waveform, margin: int) -> float:
    """SNR of ``estimate`` against ``reference`` ignoring ``margin`` edge samples."""
    if len(reference) != len(estimate):
        raise ShapeMismatch("SNR needs equal lengths")
    ref = reference.samples[margin:len(reference) - margin]
    err = ref - estimate.samples[margin:len(estimate) - margin]
    noise = float(np.sum(err ** 2))
    signal = float(np.sum(ref ** 2))
    if noise == 0.0:
        return float("inf")
    if signal == 0.0:
        return float("-inf")
    return 10.0 * np.log10(signal / noise)
