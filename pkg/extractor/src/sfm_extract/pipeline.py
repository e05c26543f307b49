"""Extraction pipeline: decode, resample, run the frozen model, pool, write.

Files are processed one at a time so outputs are independent of batching and
device placement. Pooling is the arithmetic mean over the time axis of the
final hidden state, with no normalization.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .audio import AudioError, load_waveform
from .backends import load_backend
from .bundle_format import write_bundle_dir
from .manifest import ExtractManifest

log = logging.getLogger("sfm_extract")


class ExtractError(RuntimeError):
    """Extraction cannot proceed (bad model output or aborted input)."""


def pool_hidden_states(hidden: np.ndarray) -> np.ndarray:
    hidden = np.asarray(hidden, dtype=np.float64)
    if hidden.ndim != 2 or hidden.shape[0] == 0:
        raise ExtractError(f"backend must emit [frames, dim] hidden states, got {hidden.shape}")
    return hidden.mean(axis=0)


def extract(manifest: ExtractManifest, out_dir, base_dir=None, on_error: str = "abort",
            device: str = "cpu") -> dict:
    """Run the manifest through the frozen model and emit a bundle directory.

    on_error governs undecodable audio: "skip" drops the file and records it
    in the report, "abort" raises. A width mismatch against the manifest's
    expected dim always aborts.
    """
    if on_error not in ("skip", "abort"):
        raise ValueError(f"on_error must be 'skip' or 'abort', got {on_error!r}")
    base = Path(base_dir) if base_dir is not None else Path(".")
    backend = load_backend(manifest.model, device=device)

    vectors: list[np.ndarray] = []
    label_ids: list[int] = []
    name_to_id: dict[str, int] = {}
    splits: dict[str, list[int]] = {}
    skipped: list[dict] = []

    for item in manifest.inputs:
        path = Path(item.path)
        if not path.is_absolute():
            path = base / path
        try:
            wave = load_waveform(path)
        except AudioError as e:
            if on_error == "abort":
                raise ExtractError(str(e)) from e
            log.warning("skipping %s: %s", path, e)
            skipped.append({"path": str(path), "reason": str(e)})
            continue
        pooled = pool_hidden_states(backend(wave))
        if pooled.shape[0] != manifest.expected_dim:
            raise ExtractError(
                f"{path}: model emitted width {pooled.shape[0]}, "
                f"manifest expects {manifest.expected_dim}")
        if not np.all(np.isfinite(pooled)):
            raise ExtractError(f"{path}: model emitted non-finite values")

        record = len(vectors)
        vectors.append(pooled.astype(np.float32))
        label_ids.append(name_to_id.setdefault(item.label, len(name_to_id)))
        splits.setdefault(item.split, []).append(record)

    if not vectors:
        raise ExtractError("no inputs survived extraction; nothing to write")
    matrix = np.vstack(vectors)
    names = list(name_to_id)
    write_bundle_dir(out_dir, matrix, label_ids, names, splits)
    per_class = {name: int(np.sum(np.asarray(label_ids) == i)) for i, name in enumerate(names)}
    return {
        "model": manifest.model,
        "dim": int(manifest.expected_dim),
        "emitted": int(matrix.shape[0]),
        "skipped": skipped,
        "per_class": per_class,
    }
