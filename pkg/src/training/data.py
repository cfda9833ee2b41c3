"""Turning dataset scenes into model inputs and training targets."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import settings
from src.dsp.audio_io import load_spectrogram, save_spectrogram
from src.dsp.core import ComplexSpectrogram, StftPreset, Waveform, log_magnitude, rms, rms_gain, stft
from src.simulator.dataset import SceneSample, load_manifest, load_sample
from src.simulator.rig import DEFAULT_RIG, RigClip, RigConfig
from src.utils.config import Config
from src.utils.errors import BadConfig, DataMissing, SilentInput
from src.utils.logging import get_logger

logger = get_logger(__name__)

REFERENCE_ORIENTATION = 0
SIDES = ("L", "R")


def input_mic_ids(input_mics: str, rig: RigConfig = DEFAULT_RIG) -> List[int]:
    """Mic ids feeding the encoder branches, in branch order.

    Mono duplicates one mic into two branches so the architecture is unchanged.
    """
    kind, _, arg = input_mics.partition(":")
    if kind == "mono":
        mic = int(arg) if arg else rig.mic_ids[REFERENCE_ORIENTATION][0]
        return [mic, mic]
    if kind == "pair":
        return list(rig.mic_ids[int(arg) if arg else REFERENCE_ORIENTATION])
    if kind == "two_pairs":
        return [*rig.mic_ids[0], *rig.mic_ids[90]]
    if kind == "four_pairs":
        return [mic for orientation in rig.pair_orientations for mic in rig.mic_ids[orientation]]
    raise BadConfig(f"unknown input_mics '{input_mics}'")


def spec_shape(sample_rate: int, duration: float, window: int, hop: int) -> Tuple[int, int]:
    return StftPreset(sample_rate, duration, window, hop).shape


def clip_gain(clip: RigClip, target_rms: float) -> float:
    """One gain per clip, measured on the reference pair."""
    left, right = clip.pair(REFERENCE_ORIENTATION)
    joint = Waveform(np.concatenate([left.samples, right.samples]), clip.sample_rate)
    return rms_gain(joint, target_rms)


@dataclass
class Example:
    scene_id: str
    inputs: np.ndarray            # [K, Fb, Tf] log-magnitude
    labels: np.ndarray            # [H, W] class ids
    depth: np.ndarray             # [H, W] depth / far_depth
    reference: np.ndarray         # [2, Fb, Tf] complex, reference pair L/R
    differences: np.ndarray       # [P, 2, Fb, Tf] complex, stft(x0 - x_alpha)
    gains: np.ndarray             # [K] gain applied to each input channel


@dataclass
class Batch:
    scene_ids: List[str]
    inputs: np.ndarray
    labels: np.ndarray
    depth: np.ndarray
    reference: np.ndarray
    differences: np.ndarray

    def __len__(self) -> int:
        return len(self.scene_ids)


def collate(examples: Sequence[Example], dtype=np.float32) -> Batch:
    return Batch(
        scene_ids=[e.scene_id for e in examples],
        inputs=np.stack([e.inputs for e in examples]).astype(dtype),
        labels=np.stack([e.labels for e in examples]),
        depth=np.stack([e.depth for e in examples])[:, None].astype(dtype),
        reference=np.stack([e.reference for e in examples]),
        differences=np.stack([e.differences for e in examples]),
    )


class SceneDataset:
    """One split of a generated dataset, encoded on demand."""

    def __init__(self, cfg: Config, split: str, rig: RigConfig = DEFAULT_RIG,
                 channel_gains: Optional[np.ndarray] = None):
        self.cfg = cfg
        self.split = split
        self.rig = rig
        self.root = cfg.train.data_root
        self.manifest = load_manifest(self.root, split)
        ids = list(self.manifest["scene_ids"])
        if cfg.train.limit_scenes:
            ids = ids[: cfg.train.limit_scenes]
        self.scene_ids = ids
        self.mic_ids = input_mic_ids(cfg.train.input_mics, rig)
        self.far_depth = float(self.manifest["far_depth"])
        self.sample_rate = int(self.manifest["sample_rate"])
        self.spec_shape = spec_shape(self.sample_rate, float(self.manifest["duration"]), cfg.train.window, cfg.train.hop)
        if tuple(self.manifest["label_grid"]) != tuple(cfg.model.output_grid):
            raise BadConfig(f"dataset grid {self.manifest['label_grid']} != output_grid {cfg.model.output_grid}")
        self.channel_gains = channel_gains

    def __len__(self) -> int:
        return len(self.scene_ids)

    def sample(self, index: int) -> SceneSample:
        return load_sample(self.root, self.split, self.scene_ids[index], self.manifest, self.rig)

    def gains_for(self, clip: RigClip) -> np.ndarray:
        if self.cfg.train.normalization == "dataset":
            if self.channel_gains is None:
                raise BadConfig("dataset normalisation needs channel gains from the train split")
            return np.asarray(self.channel_gains, dtype=np.float64)
        return np.full(8, clip_gain(clip, self.cfg.train.target_rms))

    def needed_mics(self) -> List[int]:
        ids = set(self.mic_ids) | set(self.rig.mic_ids[REFERENCE_ORIENTATION])
        for alpha in self.cfg.model.target_pairs:
            ids |= set(self.rig.mic_ids[alpha])
        return sorted(ids)

    def cache_dir(self, scene_id: str) -> Path:
        return Path(self.root) / self.split / scene_id / f"stft_{self.cfg.train.window}_{self.cfg.train.hop}"

    def spectra(self, sample: SceneSample) -> Dict[int, ComplexSpectrogram]:
        """Unscaled per-mic STFTs, read from or written to the scene's cache."""
        window, hop = self.cfg.train.window, self.cfg.train.hop
        folder = self.cache_dir(sample.scene_id)
        out = {}
        for mic_id in self.needed_mics():
            path = folder / f"mic{mic_id}.f32"
            if path.is_file():
                out[mic_id] = load_spectrogram(path)
                continue
            wave = Waveform(sample.clip.channels[self.rig.channel_index(mic_id)], sample.clip.sample_rate)
            spec = stft(wave, window, hop)
            save_spectrogram(path, spec)
            # same rounding as a later cache hit
            out[mic_id] = spec.replace_bins(spec.bins.astype(np.complex64))
        return out

    def encode(self, sample: SceneSample) -> Example:
        spectra = self.spectra(sample) if self.cfg.train.cache_spectrograms else None
        return encode_example(sample, self.cfg, self.mic_ids, self.gains_for(sample.clip), self.far_depth, self.rig,
                              spectra=spectra)

    def example(self, index: int) -> Example:
        return self.encode(self.sample(index))

    def examples(self, indices: Sequence[int]) -> List[Example]:
        workers = max(1, settings.THREADS)
        if workers == 1 or len(indices) < 2:
            return [self.example(i) for i in indices]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self.example, indices))

    def batch(self, indices: Sequence[int], dtype=np.float32) -> Batch:
        return collate(self.examples(indices), dtype)


def encode_example(sample: SceneSample, cfg: Config, mic_ids: Sequence[int], gains: np.ndarray,
                   far_depth: float, rig: RigConfig = DEFAULT_RIG,
                   spectra: Optional[Dict[int, ComplexSpectrogram]] = None) -> Example:
    """Log-magnitude inputs plus every task's target for one scene.

    ``gains`` holds one factor per rig channel (mic id k at index k-1).
    With ``spectra`` (unscaled STFTs per mic id) nothing is re-transformed;
    the STFT is linear, so gains and differences apply to the bins.
    """
    window, hop = cfg.train.window, cfg.train.hop
    clip = sample.clip

    def scaled(mic_id: int) -> Waveform:
        index = rig.channel_index(mic_id)
        return Waveform(clip.channels[index] * gains[index], clip.sample_rate)

    def spectrum(mic_id: int) -> ComplexSpectrogram:
        if spectra is None:
            return stft(scaled(mic_id), window, hop)
        cached = spectra[mic_id]
        return cached.replace_bins(cached.bins * gains[rig.channel_index(mic_id)])

    def difference(ref_id: int, target_id: int) -> np.ndarray:
        if spectra is None:
            diff = Waveform(scaled(ref_id).samples - scaled(target_id).samples, clip.sample_rate)
            return stft(diff, window, hop).bins
        return spectrum(ref_id).bins - spectrum(target_id).bins

    inputs = np.stack([log_magnitude(spectrum(m)) for m in mic_ids])
    ref_ids = rig.mic_ids[REFERENCE_ORIENTATION]
    reference = np.stack([spectrum(m).bins for m in ref_ids])
    differences = []
    for alpha in cfg.model.target_pairs:
        differences.append(np.stack([difference(r, t) for r, t in zip(ref_ids, rig.mic_ids[alpha])]))
    return Example(
        scene_id=sample.scene_id,
        inputs=inputs,
        labels=sample.labels.cells,
        depth=sample.depth.cells / far_depth,
        reference=reference.astype(np.complex64),
        differences=np.stack(differences).astype(np.complex64) if differences else np.zeros((0, 2) + reference.shape[1:], np.complex64),
        gains=np.asarray([gains[rig.channel_index(m)] for m in mic_ids]),
    )


def dataset_channel_gains(train: SceneDataset) -> np.ndarray:
    """target_rms / mean RMS of each rig channel over the train split."""
    if len(train) == 0:
        raise DataMissing("dataset normalisation needs a non-empty train split")
    levels = np.zeros(8)
    for index in range(len(train)):
        clip = train.sample(index).clip
        levels += [rms(Waveform(channel, clip.sample_rate)) for channel in clip.channels]
    levels /= len(train)
    if np.any(levels <= settings.SILENCE_FLOOR):
        raise SilentInput("a rig channel is silent across the whole train split")
    gains = train.cfg.train.target_rms / levels
    logger.info(f"📊 Dataset gains per channel: {np.round(gains, 3).tolist()}")
    return gains


def open_splits(cfg: Config, splits: Sequence[str] = ("train", "val", "test"),
                rig: RigConfig = DEFAULT_RIG) -> Dict[str, SceneDataset]:
    """Datasets for ``splits``; missing non-train splits are skipped."""
    datasets: Dict[str, SceneDataset] = {}
    train = SceneDataset(cfg, "train", rig)
    gains = dataset_channel_gains(train) if cfg.train.normalization == "dataset" else None
    train.channel_gains = gains
    for split in splits:
        if split == "train":
            datasets[split] = train
            continue
        try:
            datasets[split] = SceneDataset(cfg, split, rig, channel_gains=gains)
        except DataMissing:
            logger.warning(f"⚠️ No '{split}' split under {cfg.train.data_root}")
    return datasets


def batch_indices(order: Sequence[int], batch: int) -> List[List[int]]:
    """Consecutive chunks; a trailing single clip joins the previous chunk."""
    chunks = [list(order[i:i + batch]) for i in range(0, len(order), batch)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2].extend(chunks.pop())
    return chunks
