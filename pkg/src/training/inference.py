"""S3R inference: predict the 90/180/270 degree pairs from one 0 degree stereo WAV."""
from pathlib import Path
from typing import Dict

import numpy as np

from src.autodiff.checkpoint import load_checkpoint
from src.autodiff.tensor import Tensor, no_grad
from src.dsp.audio_io import read_wav, write_wav
from src.dsp.core import Waveform, log_magnitude, rms_gain, stft
from src.models.binaural_net import BinauralPerceptionNet
from src.simulator.rig import DEFAULT_RIG
from src.training.data import REFERENCE_ORIENTATION, input_mic_ids, spec_shape
from src.training.evaluate import predict_targets
from src.training.runs import read_run_config
from src.utils.errors import BadAudioFormat, BadConfig, CheckpointCorrupt
from src.utils.logging import get_logger

logger = get_logger(__name__)


def fit_length(channels: np.ndarray, length: int) -> np.ndarray:
    """Center-crop or symmetrically zero-pad (C, T) to ``length`` samples."""
    current = channels.shape[1]
    if current >= length:
        start = (current - length) // 2
        return channels[:, start:start + length]
    before = (length - current) // 2
    return np.pad(channels, ((0, 0), (before, length - current - before)))


def infer_s3r(checkpoint, wav_path, out_dir) -> Dict[int, Path]:
    """Write ``pred_<alpha>.wav`` per target pair; returns the written paths."""
    cfg = read_run_config(checkpoint)
    if "s3r" not in cfg.tasks:
        raise CheckpointCorrupt("this checkpoint was trained without the s3r task")
    rig = DEFAULT_RIG
    reference_ids = rig.mic_ids[REFERENCE_ORIENTATION]
    mic_ids = input_mic_ids(cfg.train.input_mics, rig)
    if any(m not in reference_ids for m in mic_ids):
        raise BadConfig(f"input_mics '{cfg.train.input_mics}' needs more than the 0 degree pair")

    stereo, sample_rate = read_wav(wav_path)
    if stereo.shape[0] != 2:
        raise BadAudioFormat(f"expected a stereo WAV, got {stereo.shape[0]} channel(s)")
    if sample_rate != cfg.gen.sample_rate:
        raise BadAudioFormat(f"sample rate {sample_rate} Hz, the model was trained at {cfg.gen.sample_rate} Hz")
    original_length = stereo.shape[1]
    length = int(round(cfg.gen.sample_rate * cfg.gen.duration))
    if original_length != length:
        logger.warning(f"⚠️ Input has {original_length} samples, fitting to {length}")
        stereo = fit_length(stereo, length)

    window, hop = cfg.train.window, cfg.train.hop
    gain = rms_gain(Waveform(stereo.reshape(-1), sample_rate), cfg.train.target_rms)
    reference = [Waveform(channel * gain, sample_rate) for channel in stereo]
    by_mic = dict(zip(reference_ids, reference))
    ref_specs = np.stack([stft(w, window, hop).bins for w in reference])
    inputs = np.stack([log_magnitude(stft(by_mic[m], window, hop)) for m in mic_ids])[None].astype(np.float32)

    model = BinauralPerceptionNet(
        cfg.model, in_channels=len(mic_ids), spec_shape=spec_shape(sample_rate, cfg.gen.duration, window, hop),
        seed=cfg.train.seed, far_depth=cfg.gen.far_depth,
    )
    load_checkpoint(model, checkpoint)
    model.eval()
    with no_grad():
        masks = model.decode_s3r(model.encode(Tensor(inputs))).data[0].astype(np.float64)

    estimates = predict_targets(reference, masks, ref_specs, cfg.model.target_pairs, window, hop)
    out_dir = Path(out_dir)
    written = {}
    for pair, alpha in enumerate(cfg.model.target_pairs):
        channels = np.stack([estimates[2 * pair].samples, estimates[2 * pair + 1].samples]) / gain
        if original_length != length:
            channels = fit_length(channels, original_length)
        written[alpha] = write_wav(out_dir / f"pred_{alpha}.wav", channels, sample_rate)
        logger.info(f"💾 Wrote {written[alpha]}")
    return written
