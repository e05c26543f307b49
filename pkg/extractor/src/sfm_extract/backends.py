"""Frozen-model backends: model key -> waveform-to-hidden-states callable.

A backend maps a mono 16 kHz waveform to the model's final hidden state as a
[frames, dim] matrix; pooling happens in the pipeline. Models that emit an
already-pooled embedding (the speaker encoders) return a single frame.

Heavy dependencies are imported lazily so the package works without torch
installed; unavailable backends raise BackendUnavailableError with install
guidance. Tests may override entries in LOADERS with deterministic stubs.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

Backend = Callable[[np.ndarray], np.ndarray]


class BackendUnavailableError(RuntimeError):
    """The model's runtime dependencies or weights are not available."""


def _transformers_encoder(repo: str):
    def loader(device: str) -> Backend:
        try:
            import torch
            from transformers import AutoFeatureExtractor, AutoModel
        except ImportError as e:
            raise BackendUnavailableError(
                f"{repo} needs torch+transformers (pip install 'sfm-extract[models]')") from e
        extractor = AutoFeatureExtractor.from_pretrained(repo)
        model = AutoModel.from_pretrained(repo).to(device)
        model.eval()

        def run(wave: np.ndarray) -> np.ndarray:
            inputs = extractor(wave, sampling_rate=16000, return_tensors="pt").to(device)
            with torch.no_grad():
                out = model(**inputs).last_hidden_state
            return out[0].cpu().double().numpy()

        return run

    return loader


def _whisper_encoder(repo: str):
    def loader(device: str) -> Backend:
        try:
            import torch
            from transformers import WhisperFeatureExtractor, WhisperModel
        except ImportError as e:
            raise BackendUnavailableError(
                f"{repo} needs torch+transformers (pip install 'sfm-extract[models]')") from e
        extractor = WhisperFeatureExtractor.from_pretrained(repo)
        model = WhisperModel.from_pretrained(repo).to(device)
        model.eval()

        def run(wave: np.ndarray) -> np.ndarray:
            feats = extractor(wave, sampling_rate=16000, return_tensors="pt").input_features
            with torch.no_grad():
                out = model.encoder(feats.to(device)).last_hidden_state
            return out[0].cpu().double().numpy()

        return run

    return loader


def _speechbrain_encoder(source: str):
    def loader(device: str) -> Backend:
        try:
            import torch
            from speechbrain.inference.speaker import EncoderClassifier
        except ImportError as e:
            raise BackendUnavailableError(
                f"{source} needs speechbrain (pip install 'sfm-extract[speaker]')") from e
        clf = EncoderClassifier.from_hparams(source=source, run_opts={"device": device})

        def run(wave: np.ndarray) -> np.ndarray:
            with torch.no_grad():
                emb = clf.encode_batch(torch.tensor(wave, dtype=torch.float32)[None])
            return emb[0].cpu().double().numpy()

        return run

    return loader


def _audio_mamba(variant: str):
    def loader(device: str) -> Backend:
        raise BackendUnavailableError(
            f"audio-mamba-{variant} has no pip distribution; install the reference "
            "implementation and register a backend in sfm_extract.backends.LOADERS")

    return loader


LOADERS: dict[str, Callable[[str], Backend]] = {
    "whisper": _whisper_encoder("openai/whisper-base"),
    "wavlm": _transformers_encoder("microsoft/wavlm-base"),
    "unispeech-sat": _transformers_encoder("microsoft/unispeech-sat-base"),
    "wav2vec2": _transformers_encoder("facebook/wav2vec2-base"),
    "xvector": _speechbrain_encoder("speechbrain/spkrec-xvect-voxceleb"),
    "ecapa": _speechbrain_encoder("speechbrain/spkrec-ecapa-voxceleb"),
    "audio-mamba-t": _audio_mamba("t"),
    "audio-mamba-s": _audio_mamba("s"),
    "audio-mamba-b": _audio_mamba("b"),
}


def load_backend(model: str, device: str = "cpu") -> Backend:
    if model not in LOADERS:
        raise BackendUnavailableError(f"no backend registered for {model!r}")
    return LOADERS[model](device)
