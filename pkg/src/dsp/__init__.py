from src.dsp.core import (
    ComplexMask,
    ComplexSpectrogram,
    DifferenceSignal,
    Waveform,
    apply_complex_mask,
    difference_signal,
    envelope,
    istft,
    log_magnitude,
    reconstruct_target,
    rms_normalize,
    stft,
)
