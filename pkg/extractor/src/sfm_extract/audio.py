"""WAV decoding and resampling to the 16 kHz model input rate."""

from __future__ import annotations

import math

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

TARGET_RATE = 16000


class AudioError(ValueError):
    """The audio file cannot be decoded."""


def load_waveform(path) -> np.ndarray:
    """Decode a WAV file to a mono float64 waveform at 16 kHz."""
    try:
        rate, data = wavfile.read(path)
    except Exception as e:  # scipy raises assorted ValueError/struct errors
        raise AudioError(f"{path}: cannot decode WAV: {e}") from e
    if data.size == 0:
        raise AudioError(f"{path}: empty audio stream")

    data = np.asarray(data)
    if np.issubdtype(data.dtype, np.integer):
        info = np.iinfo(data.dtype)
        # 8-bit WAV is unsigned; wider widths are signed
        if info.min == 0:
            wave = (data.astype(np.float64) - (info.max + 1) / 2) / ((info.max + 1) / 2)
        else:
            wave = data.astype(np.float64) / (info.max + 1)
    else:
        wave = data.astype(np.float64)
    if wave.ndim == 2:
        wave = wave.mean(axis=1)

    if rate != TARGET_RATE:
        g = math.gcd(int(rate), TARGET_RATE)
        wave = resample_poly(wave, TARGET_RATE // g, int(rate) // g)
    if wave.size == 0 or not np.all(np.isfinite(wave)):
        raise AudioError(f"{path}: resampled waveform is empty or non-finite")
    return wave
