import json
from pathlib import Path

import numpy as np
import pytest

from sfm_extract import backends

FIXTURES = Path(__file__).parent / "fixtures"

WAV_NAMES = ["sine_8k.wav", "sine_44k.wav", "silence_16k.wav",
             "stereo_22k.wav", "noise_8bit.wav"]

FRAME = 160


def stub_hidden_states(dim):
    """Deterministic stand-in for a frozen model: frame the waveform and
    project each frame through a fixed seeded matrix."""
    proj = np.random.Generator(np.random.PCG64(0)).normal(size=(FRAME, dim))

    def run(wave):
        n = max(1, int(np.ceil(wave.size / FRAME)))
        padded = np.zeros(n * FRAME)
        padded[:wave.size] = wave
        frames = padded.reshape(n, FRAME)
        return frames @ proj

    return run


@pytest.fixture
def stubbed_whisper(monkeypatch):
    monkeypatch.setitem(backends.LOADERS, "whisper", lambda device: stub_hidden_states(512))


@pytest.fixture
def stubbed_all(monkeypatch):
    for key, dim in (("whisper", 512), ("xvector", 512), ("wavlm", 768),
                     ("unispeech-sat", 768), ("wav2vec2", 768), ("ecapa", 192),
                     ("audio-mamba-b", 3840)):
        monkeypatch.setitem(backends.LOADERS, key, lambda device, d=dim: stub_hidden_states(d))


def write_manifest(path, model, inputs, expected_dim=None):
    record = {"model": model, "inputs": inputs}
    if expected_dim is not None:
        record["expected_dim"] = expected_dim
    Path(path).write_text(json.dumps(record, indent=2), encoding="utf-8")
    return path
