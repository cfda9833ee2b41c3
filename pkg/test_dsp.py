import sys
import os
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.dsp.audio_io import load_spectrogram, read_wav, save_spectrogram, write_wav
from src.dsp.core import (
    MASK_TOLERANCE,
    ComplexMask,
    ComplexSpectrogram,
    StftPreset,
    Waveform,
    apply_complex_mask,
    difference_signal,
    envelope,
    frames_for,
    interior_snr_db,
    istft,
    log_magnitude,
    reconstruct_target,
    rms,
    rms_normalize,
    stft,
)
from src.utils.errors import BadAudioFormat, BadConfig, ShapeMismatch, SilentInput

SR = 16000


def _noise(n=SR, seed=0, scale=0.1):
    return Waveform(np.random.default_rng(seed).standard_normal(n) * scale, SR)


def test_rms_normalize_halves_a_louder_clip():
    samples = np.random.default_rng(1).standard_normal(4000)
    samples *= 0.2 / np.sqrt(np.mean(samples ** 2))
    out = rms_normalize(Waveform(samples, SR), target_rms=0.1)
    np.testing.assert_allclose(out.samples, samples / 2, rtol=1e-12)


@given(seed=st.integers(0, 10_000), scale=st.floats(1e-3, 10.0))
@settings(max_examples=30, deadline=None)
def test_rms_normalize_hits_target(seed, scale):
    out = rms_normalize(_noise(1000, seed, scale))
    assert abs(np.sqrt(np.sum(out.samples ** 2) / 1000) - 0.1) < 1e-9


def test_rms_normalize_is_idempotent():
    once = rms_normalize(_noise(seed=3))
    np.testing.assert_allclose(rms_normalize(once).samples, once.samples, atol=1e-12)


def test_silent_clip_is_rejected():
    with pytest.raises(SilentInput):
        rms_normalize(Waveform(np.zeros(100), SR))
    with pytest.raises(SilentInput):
        rms_normalize(Waveform(np.zeros(0), SR))


def test_stft_shape_follows_the_framing():
    desk = StftPreset(SR, 2.0, 512, 160)
    spec = stft(_noise(desk.n_samples))
    assert spec.shape == (257, 201) == desk.shape
    # 96 kHz field clips: the grid is derived, never the 257x601 sometimes quoted
    assert StftPreset(96000, 2.0, 512, 160).shape == (257, 1201)
    assert frames_for(32000, 160) == 201


def test_stft_of_zeros_is_zero():
    assert not np.any(stft(Waveform(np.zeros(4000), SR)).bins)


def test_sine_peaks_at_its_bin():
    k = 40
    t = np.arange(SR) / SR
    spec = stft(Waveform(np.sin(2 * np.pi * k * SR / 512 * t), SR))
    assert int(np.argmax(np.abs(spec.bins).mean(axis=1))) == k


@pytest.mark.parametrize("window,hop", [(511, 160), (512, 0), (512, 600), (0, 1)])
def test_bad_stft_parameters(window, hop):
    with pytest.raises(BadConfig):
        stft(_noise(2000), window, hop)


def test_istft_rejects_sparse_hop():
    spec = stft(_noise(4000), 512, 300)
    with pytest.raises(BadConfig):
        istft(spec)


def test_round_trip_snr():
    for seed in range(5):
        w = _noise(2 * SR, seed)
        assert interior_snr_db(w, istft(stft(w)), 512) >= 60.0
    zeros = Waveform(np.zeros(4000), SR)
    assert not np.any(istft(stft(zeros)).samples)


def test_log_magnitude():
    bins = np.full((257, 3), np.e - 1, dtype=complex)
    spec = ComplexSpectrogram(bins, 512, 160, SR)
    np.testing.assert_allclose(log_magnitude(spec), 1.0)
    assert not np.any(log_magnitude(spec.replace_bins(np.zeros((257, 3)))))


@given(st.lists(st.floats(0.0, 1e4, allow_nan=False), min_size=2, max_size=30))
@settings(max_examples=50, deadline=None)
def test_log_magnitude_is_monotone_in_magnitude(magnitudes):
    ordered = np.sort(np.asarray(magnitudes))
    spec = ComplexSpectrogram(np.tile(-ordered, (257, 1)), 512, 160, SR)
    assert np.all(np.diff(log_magnitude(spec), axis=1) >= 0.0)


def test_complex_mask_multiplies_per_cell():
    bins = np.zeros((257, 2), dtype=complex)
    bins[5, 1] = 1 + 2j
    spec = ComplexSpectrogram(bins, 512, 160, SR)
    real = np.full((257, 2), 0.5)
    imag = np.full((257, 2), -0.5)
    out = apply_complex_mask(spec, ComplexMask(real, imag))
    assert out.bins[5, 1] == pytest.approx(1.5 - 0.5j)
    assert apply_complex_mask(spec, ComplexMask(np.ones((257, 2)), np.zeros((257, 2)))).bins[5, 1] == 1 + 2j
    with pytest.raises(ShapeMismatch):
        apply_complex_mask(spec, ComplexMask(np.ones((257, 3)), np.zeros((257, 3))))


def test_mask_range_enforced():
    with pytest.raises(BadConfig):
        ComplexMask(np.full((2, 2), 1.5), np.zeros((2, 2)))
    with pytest.raises(BadConfig):
        ComplexMask(np.zeros((2, 2)), np.full((2, 2), -1.0 - 2 * MASK_TOLERANCE))
    edge = 1.0 + 0.5 * MASK_TOLERANCE
    assert ComplexMask(np.full((2, 2), edge), np.full((2, 2), -edge)).shape == (2, 2)
    ulp = float(np.nextafter(np.float32(1.0), np.float32(2.0)))
    ComplexMask(np.full((1, 3), ulp), np.full((1, 3), -ulp))


def test_reconstruction_with_zero_difference_returns_reference():
    ref = _noise(4000, 7)
    zero = ComplexSpectrogram(np.zeros((257, frames_for(4000, 160))), 512, 160, SR, length=4000)
    np.testing.assert_array_equal(reconstruct_target(ref, zero).samples, ref.samples)


def test_reconstruction_recovers_target():
    ref, target = _noise(SR, 8), _noise(SR, 9)
    diff = difference_signal(ref, target, 90, "right")
    estimate = reconstruct_target(ref, stft(diff.wave))
    assert interior_snr_db(target, estimate, 512) >= 60.0


def test_reconstruction_sign_convention():
    impulse = np.zeros(4000)
    impulse[2000] = 1.0
    ref = Waveform(impulse, SR)
    estimate = reconstruct_target(ref, stft(ref))
    assert np.max(np.abs(estimate.samples)) < 1e-6


def test_reconstruction_rejects_mismatched_frames():
    ref = _noise(4000)
    with pytest.raises(ShapeMismatch):
        reconstruct_target(ref, stft(_noise(8000)))


def test_difference_signal_validates_alpha():
    with pytest.raises(BadConfig):
        difference_signal(_noise(100), _noise(100, 1), 45)


@pytest.mark.parametrize("amplitude", [1.0, 0.5])
def test_envelope_of_sine(amplitude):
    t = np.arange(SR) / SR
    env = envelope(Waveform(amplitude * np.sin(2 * np.pi * 440 * t), SR))
    interior = env[1000:-1000]
    assert np.max(np.abs(interior - amplitude)) < 0.02 * amplitude
    assert not np.any(envelope(Waveform(np.zeros(100), SR)))


def test_waveform_validation():
    with pytest.raises(ShapeMismatch):
        Waveform(np.zeros((2, 2)), SR)
    with pytest.raises(BadConfig):
        Waveform(np.array([np.nan]), SR)
    assert rms(Waveform(np.full(10, 0.3), SR)) == pytest.approx(0.3)


def test_wav_files(tmp_path):
    channels = np.random.default_rng(0).uniform(-0.5, 0.5, (2, 800)).astype(np.float32)
    path = write_wav(tmp_path / "pair.wav", channels, SR)
    loaded, rate = read_wav(path)
    assert rate == SR
    np.testing.assert_array_equal(loaded.astype(np.float32), channels)
    with pytest.raises(BadAudioFormat):
        read_wav(tmp_path / "missing.wav")
    (tmp_path / "junk.wav").write_bytes(b"not audio")
    with pytest.raises(BadAudioFormat):
        read_wav(tmp_path / "junk.wav")


def test_spectrogram_cache(tmp_path):
    spec = stft(_noise(2000))
    loaded = load_spectrogram(save_spectrogram(tmp_path / "s.f32", spec))
    assert loaded.shape == spec.shape
    np.testing.assert_allclose(loaded.bins, spec.bins.astype(np.complex64), rtol=1e-6, atol=1e-6)
    (tmp_path / "s.f32").write_bytes(b"\x00" * 8)
    with pytest.raises(BadAudioFormat):
        load_spectrogram(tmp_path / "s.f32")
