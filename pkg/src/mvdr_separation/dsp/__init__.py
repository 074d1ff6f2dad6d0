from .audio import (
    MultichannelWaveform,
    Waveform,
    as_multichannel,
    read_mono_sources,
    read_wav,
    write_wav,
)
from .stft import (
    Spectrogram,
    StftConfig,
    apply_mask,
    frame_signal,
    istft,
    istft_array,
    istft_tensor,
    log_feature,
    spectrogram_energy,
    stft,
)

__all__ = [
    "Waveform",
    "MultichannelWaveform",
    "as_multichannel",
    "read_wav",
    "write_wav",
    "read_mono_sources",
    "StftConfig",
    "Spectrogram",
    "stft",
    "istft",
    "istft_array",
    "istft_tensor",
    "frame_signal",
    "log_feature",
    "apply_mask",
    "spectrogram_energy",
]
