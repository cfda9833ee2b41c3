"""WAV and spectrogram-cache files.

WAVs are 32-bit IEEE float, mono or interleaved multi-channel. The cache is
raw little-endian float32 (real, imag) pairs, row-major [freq][frame], with
a JSON header next to it.
"""
import json
from pathlib import Path

import numpy as np
import soundfile as sf

from src.dsp.core import ComplexSpectrogram
from src.utils.errors import BadAudioFormat, IoFailure


def write_wav(path, channels: np.ndarray, sample_rate: int) -> Path:
    """Write ``channels`` shaped (C, T) or (T,) as float32 PCM."""
    path = Path(path)
    data = np.asarray(channels, dtype=np.float32)
    if data.ndim == 2:
        data = data.T  # soundfile wants (T, C)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        sf.write(str(path), data, sample_rate, subtype="FLOAT", format="WAV")
    except (OSError, RuntimeError) as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def read_wav(path):
    """Return (samples shaped (C, T) as float64, sample_rate)."""
    path = Path(path)
    if not path.is_file():
        raise BadAudioFormat(f"no such audio file: {path}")
    try:
        data, sample_rate = sf.read(str(path), dtype="float64", always_2d=True)
    except (RuntimeError, ValueError) as exc:
        raise BadAudioFormat(f"{path} is not readable audio: {exc}") from exc
    return data.T.copy(), int(sample_rate)


def _header_path(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def save_spectrogram(path, spec: ComplexSpectrogram) -> Path:
    path = Path(path)
    pairs = np.empty(spec.shape + (2,), dtype="<f4")
    pairs[..., 0] = spec.bins.real
    pairs[..., 1] = spec.bins.imag
    header = {
        "freq_bins": spec.freq_bins,
        "frames": spec.frames,
        "window": spec.window,
        "hop": spec.hop,
        "sample_rate": spec.sample_rate,
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(pairs.tobytes(order="C"))
        _header_path(path).write_text(json.dumps(header, indent=2), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def load_spectrogram(path) -> ComplexSpectrogram:
    path = Path(path)
    header_path = _header_path(path)
    if not path.is_file() or not header_path.is_file():
        raise BadAudioFormat(f"spectrogram cache incomplete at {path}")
    header = json.loads(header_path.read_text(encoding="utf-8"))
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    expected = header["freq_bins"] * header["frames"] * 2
    if raw.size != expected:
        raise BadAudioFormat(f"{path} holds {raw.size} floats, header promises {expected}")
    pairs = raw.reshape(header["freq_bins"], header["frames"], 2).astype(np.float64)
    return ComplexSpectrogram(
        pairs[..., 0] + 1j * pairs[..., 1],
        window=header["window"],
        hop=header["hop"],
        sample_rate=header["sample_rate"],
    )
