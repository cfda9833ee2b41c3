"""Release checks: round trips, gradient checks, oracle equivalences, simulator physics."""
import tempfile
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.autodiff import ops
from src.autodiff.checkpoint import decode_checkpoint, load_checkpoint, save_checkpoint
from src.autodiff.gradcheck import GRAD_CHECKS, SEEDS_PER_OP
from src.autodiff.tensor import Tensor, precision
from src.dsp.core import Waveform, difference_signal, istft, interior_snr_db, reconstruct_target, rms, rms_normalize, stft
from src.labels.pseudo_label import COMPACT_IDS, LabelStack, mode_background, sound_mask
from src.models.binaural_net import BinauralPerceptionNet
from src.models.selfcheck import TINY_SPEC_SHAPE, model_grad_check, parameter_grad_check, tiny_model_config
from src.simulator.ground_truth import LabelGrid, STREET_CLASS_TABLE
from src.simulator.rig import DEFAULT_RIG, ILD_DEPTH, estimate_itd_samples, max_itd_samples, render_binaural, render_rig
from src.simulator.sources import Scene, SourceSpec
from src.utils.errors import BAPNError
from src.utils.logging import get_logger

logger = get_logger(__name__)

OP_TOLERANCE = 1e-4
MODEL_TOLERANCE = 1e-3
SNR_FLOOR_DB = 60.0
ILD_TOLERANCE = 0.05

Check = Tuple[str, str, Callable[[], Tuple[bool, str]]]


def _roundtrip() -> Tuple[bool, str]:
    rng = np.random.default_rng(0)
    worst = float("inf")
    for _ in range(50):
        w = Waveform(rng.standard_normal(32000) * 0.1, 16000)
        worst = min(worst, interior_snr_db(w, istft(stft(w, 512, 160)), 512))
    return worst >= SNR_FLOOR_DB, f"min SNR {worst:.1f} dB over 50 clips"


def _normalize_idempotent() -> Tuple[bool, str]:
    w = Waveform(np.random.default_rng(1).standard_normal(16000), 16000)
    once = rms_normalize(w)
    twice = rms_normalize(once)
    gap = float(np.max(np.abs(once.samples - twice.samples)))
    return gap <= 1e-12, f"max gap {gap:.2e}"


def _op_check(name: str) -> Callable[[], Tuple[bool, str]]:
    def run():
        worst = max(GRAD_CHECKS[name](seed) for seed in range(SEEDS_PER_OP))
        return worst <= OP_TOLERANCE, f"max rel err {worst:.2e} ({SEEDS_PER_OP} seeds)"
    return run


def _model_check() -> Tuple[bool, str]:
    worst = model_grad_check(seed=0)
    return worst <= MODEL_TOLERANCE, f"max rel err {worst:.2e}"


def _weight_check() -> Tuple[bool, str]:
    worst = parameter_grad_check(seed=0)
    part = max(worst, key=worst.get)
    return worst[part] <= MODEL_TOLERANCE, f"max rel err {worst[part]:.2e} (in {part}, {len(worst)} parts)"


def _conv_oracle() -> Tuple[bool, str]:
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(10):
        x = rng.standard_normal((2, 3, 9, 11))
        w = rng.standard_normal((4, 3, 3, 3))
        stride, dilation, padding = int(rng.integers(1, 3)), int(rng.integers(1, 3)), int(rng.integers(0, 3))
        with precision(np.float64):
            fast = ops.conv2d(Tensor(x), Tensor(w), stride=stride, dilation=dilation, padding=padding).data
        slow = ops.conv2d_direct(x, w, stride, dilation, padding)
        worst = max(worst, float(np.max(np.abs(fast - slow))))
    return worst <= 1e-6, f"max gap {worst:.2e}"


def _histogram_mode(stack: np.ndarray) -> np.ndarray:
    T, H, W = stack.shape
    out = np.zeros((H, W), dtype=np.int64)
    for r in range(H):
        for c in range(W):
            counts = np.bincount(stack[:, r, c])
            out[r, c] = int(np.argmax(counts))
    return out


def _mode_oracle() -> Tuple[bool, str]:
    rng = np.random.default_rng(3)
    for trial in range(100):
        frames = rng.integers(0, 6, size=(int(rng.integers(1, 8)), 4, 5))
        got = mode_background(LabelStack([LabelGrid(f) for f in frames], dict(STREET_CLASS_TABLE))).cells
        if not np.array_equal(got, _histogram_mode(frames)):
            return False, f"mismatch on stack {trial}"
    return True, "100 random stacks"


def _mask_oracle() -> Tuple[bool, str]:
    rng = np.random.default_rng(4)
    stack = LabelStack([LabelGrid(f) for f in rng.integers(0, 6, size=(5, 6, 7))], dict(STREET_CLASS_TABLE))
    targets = stack.ids_for(COMPACT_IDS)
    background = mode_background(stack)
    for frame in stack.frames:
        got = sound_mask(frame, background, targets).cells
        expected = np.array([[int(v in targets and v != b) for v, b in zip(row, brow)]
                             for row, brow in zip(frame.cells, background.cells)], dtype=np.uint8)
        if not np.array_equal(got, expected):
            return False, "set-logic mismatch"
    return True, "5 frames"


def _reconstruction_chain() -> Tuple[bool, str]:
    scene = Scene(sources=[SourceSpec(cls="car", azimuth=40.0, distance=6.0, seed=5)], ambient_level=0.002,
                  duration=1.0, seed=7)
    clip = render_rig(scene, sr=16000)
    worst = float("inf")
    for alpha in (90, 180, 270):
        for side, (ref, target) in enumerate(zip(clip.pair(0), clip.pair(alpha))):
            diff = difference_signal(ref, target, alpha, ("left", "right")[side])
            estimate = reconstruct_target(ref, stft(diff.wave, 512, 160))
            worst = min(worst, interior_snr_db(target, estimate, 512))
    return worst >= SNR_FLOOR_DB, f"min SNR {worst:.1f} dB"


def _itd() -> Tuple[bool, str]:
    sr = 16000
    worst = 0.0
    for theta in (-90.0, -45.0, 0.0, 45.0, 90.0):
        scene = Scene(sources=[SourceSpec(cls="car", azimuth=theta % 360, distance=4.0, seed=11)],
                      ambient_level=0.0, duration=1.0, seed=1)
        left, right = render_binaural(scene, 0, DEFAULT_RIG, sr)
        expected = DEFAULT_RIG.ear_separation * np.sin(np.deg2rad(theta)) / DEFAULT_RIG.speed_of_sound * sr
        worst = max(worst, abs(estimate_itd_samples(left, right, max_itd_samples(DEFAULT_RIG, sr) + 1) - expected))
    return worst <= 1.0, f"max ITD error {worst:.2f} samples"


def _ild() -> Tuple[bool, str]:
    worst = 0.0
    for theta in (-90.0, -45.0, 45.0, 90.0):
        scene = Scene(sources=[SourceSpec(cls="motorcycle", azimuth=theta % 360, distance=4.0, seed=13)],
                      ambient_level=0.0, duration=1.0, seed=1)
        left, right = render_binaural(scene, 0, DEFAULT_RIG, 16000)
        s = np.sin(np.deg2rad(theta))
        expected = (1.0 + ILD_DEPTH * s) / (1.0 - ILD_DEPTH * s)
        worst = max(worst, abs(rms(right) / rms(left) / expected - 1.0))
    return worst <= ILD_TOLERANCE, f"max ILD error {100 * worst:.2f}%"


def _distance_energy() -> Tuple[bool, str]:
    levels = []
    for distance in (2.0, 4.0, 8.0, 16.0):
        scene = Scene(sources=[SourceSpec(cls="train", azimuth=70.0, distance=distance, seed=17)],
                      ambient_level=0.0, duration=0.5, seed=1)
        levels.append(sum(rms(w) for w in render_binaural(scene, 0, DEFAULT_RIG, 16000)))
    worst = max(abs(far / near - 0.5) for near, far in zip(levels, levels[1:]))
    return worst <= 1e-9, f"RMS ratio per doubled distance off 0.5 by {worst:.1e}"


def _rotation() -> Tuple[bool, str]:
    scene = Scene(sources=[SourceSpec(cls="motorcycle", azimuth=30.0, distance=5.0, seed=3)],
                  ambient_level=0.003, duration=0.5, seed=2)
    rotated = scene.rotated(90.0)
    a = np.stack([w.samples for w in render_binaural(scene, 90, DEFAULT_RIG, 16000)])
    b = np.stack([w.samples for w in render_binaural(rotated, 180, DEFAULT_RIG, 16000)])
    return bool(np.array_equal(a, b)), "pair(90) of scene == pair(180) of scene rotated by 90"


def _checkpoint_roundtrip() -> Tuple[bool, str]:
    model = BinauralPerceptionNet(tiny_model_config(), 2, TINY_SPEC_SHAPE, seed=0)
    model(Tensor(np.random.default_rng(0).standard_normal((2, 2) + TINY_SPEC_SHAPE)))
    with tempfile.TemporaryDirectory() as tmp:
        path = save_checkpoint(model, Path(tmp) / "tiny.bapn")
        restored = load_checkpoint(BinauralPerceptionNet(tiny_model_config(), 2, TINY_SPEC_SHAPE, seed=1), path)
    before, after = model.state_arrays(), restored.state_arrays()
    same = before.keys() == after.keys() and all(
        np.array_equal(np.float32(before[k]), np.float32(after[k])) for k in before)
    return same, "parameters and running stats restored"


def _checkpoint_file(path) -> Callable[[], Tuple[bool, str]]:
    def run():
        records = decode_checkpoint(Path(path).read_bytes())
        return True, f"{len(records)} records"
    return run


def build_checks(checkpoint: Optional[str] = None) -> List[Check]:
    checks: List[Check] = [
        ("round-trip", "stft/istft", _roundtrip),
        ("round-trip", "rms_normalize idempotent", _normalize_idempotent),
        ("round-trip", "checkpoint", _checkpoint_roundtrip),
    ]
    checks += [("grad-check", name, _op_check(name)) for name in GRAD_CHECKS]
    checks.append(("grad-check", "full tiny model", _model_check))
    checks.append(("grad-check", "tiny model weights per part", _weight_check))
    checks += [
        ("oracle", "conv2d im2col vs loops", _conv_oracle),
        ("oracle", "mode_background vs histogram", _mode_oracle),
        ("oracle", "sound_mask vs set logic", _mask_oracle),
        ("oracle", "difference reconstruction", _reconstruction_chain),
        ("simulator", "ITD", _itd),
        ("simulator", "ILD", _ild),
        ("simulator", "distance energy", _distance_energy),
        ("simulator", "rotation equivariance", _rotation),
    ]
    if checkpoint:
        checks.append(("checkpoint", str(checkpoint), _checkpoint_file(checkpoint)))
    return checks


def run_selftest(checkpoint: Optional[str] = None) -> pd.DataFrame:
    rows = []
    for section, name, check in build_checks(checkpoint):
        try:
            passed, detail = check()
        except BAPNError as exc:
            passed, detail = False, f"{exc.name}: {exc.detail}"
        except Exception as exc:  # a crashing check is a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        logger.info(f"{'✅' if passed else '❌'} {section} / {name}: {detail}")
        rows.append({"section": section, "check": name, "status": "PASS" if passed else "FAIL", "detail": detail})
    return pd.DataFrame(rows, columns=["section", "check", "status", "detail"])
