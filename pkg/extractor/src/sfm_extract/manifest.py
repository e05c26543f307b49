"""Extraction manifest: model key, expected width, and the input file list."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

# Embedding widths of the supported frozen models. Audio-Mamba tiny/small
# widths are not pinned here; their manifests must declare expected_dim.
EXPECTED_DIMS: dict[str, int | None] = {
    "whisper": 512,
    "xvector": 512,
    "wavlm": 768,
    "unispeech-sat": 768,
    "wav2vec2": 768,
    "ecapa": 192,
    "audio-mamba-t": None,
    "audio-mamba-s": None,
    "audio-mamba-b": 3840,
}

SPLIT_NAMES = ("train", "dev", "test")


class ManifestError(ValueError):
    """The manifest file is malformed or inconsistent."""


@dataclass(frozen=True)
class InputItem:
    path: str
    label: str
    split: str


@dataclass
class ExtractManifest:
    model: str
    expected_dim: int
    inputs: list[InputItem]


def load_manifest(path) -> ExtractManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: invalid JSON: {e}") from e

    model = raw.get("model")
    if model not in EXPECTED_DIMS:
        raise ManifestError(
            f"{path}: unknown model {model!r}; supported: {sorted(EXPECTED_DIMS)}")

    table_dim = EXPECTED_DIMS[model]
    expected = raw.get("expected_dim", table_dim)
    if expected is None:
        raise ManifestError(
            f"{path}: model {model!r} has no fixed width; declare expected_dim")
    expected = int(expected)
    if expected <= 0:
        raise ManifestError(f"{path}: expected_dim must be positive, got {expected}")
    if table_dim is not None and expected != table_dim:
        raise ManifestError(
            f"{path}: expected_dim {expected} does not match {model!r}'s width {table_dim}")

    items_raw = raw.get("inputs")
    if not isinstance(items_raw, list) or not items_raw:
        raise ManifestError(f"{path}: manifest needs a non-empty 'inputs' list")
    inputs = []
    for i, item in enumerate(items_raw):
        try:
            audio = str(item["path"])
            label = str(item["label"])
            split = str(item["split"])
        except (TypeError, KeyError) as e:
            raise ManifestError(f"{path}: inputs[{i}] needs path/label/split keys") from e
        if not audio or not label:
            raise ManifestError(f"{path}: inputs[{i}] has an empty path or label")
        if split not in SPLIT_NAMES:
            raise ManifestError(
                f"{path}: inputs[{i}] split {split!r} not one of {SPLIT_NAMES}")
        inputs.append(InputItem(path=audio, label=label, split=split))
    return ExtractManifest(model=model, expected_dim=expected, inputs=inputs)
