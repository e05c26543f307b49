"""Writer and checker for the embedding-bundle interchange format.

This is the byte contract shared with the training/evaluation side:

  embeddings.bin  "SGE1" | dim u32 LE | count u32 LE | count*dim float32 LE
  labels.bin      "SGL1" | count u32 LE | count int32 LE (-1 = unlabeled)
  manifest.json   {"version": 1, "label_names": [...], "splits": {...}}

Implemented here independently of the consumer package; conformance is
checked in the test suite.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

EMBEDDINGS_MAGIC = b"SGE1"
LABELS_MAGIC = b"SGL1"
MANIFEST_VERSION = 1


class BundleFormatError(ValueError):
    """An emitted or inspected bundle violates the byte contract."""


def write_bundle_dir(out_dir, vectors: np.ndarray, label_ids, label_names, splits) -> None:
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    if vectors.ndim != 2:
        raise BundleFormatError(f"vectors must be [count, dim], got shape {vectors.shape}")
    count, dim = vectors.shape
    label_ids = np.asarray(label_ids, dtype="<i4")
    if label_ids.shape != (count,):
        raise BundleFormatError(f"{label_ids.shape[0]} labels for {count} vectors")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "embeddings.bin", "wb") as f:
        f.write(EMBEDDINGS_MAGIC)
        f.write(struct.pack("<II", dim, count))
        f.write(vectors.tobytes())
    with open(out / "labels.bin", "wb") as f:
        f.write(LABELS_MAGIC)
        f.write(struct.pack("<I", count))
        f.write(label_ids.tobytes())
    manifest = {
        "version": MANIFEST_VERSION,
        "label_names": list(label_names),
        "splits": {name: [int(i) for i in idxs] for name, idxs in splits.items()},
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


def check_bundle_dir(path, expected_dim: int | None = None) -> dict:
    """Re-read a bundle directory and verify the format; returns a report.

    Checks magic bytes, payload sizes, label/split consistency, finiteness,
    and (when given) the expected embedding width.
    """
    root = Path(path)
    epath = root / "embeddings.bin"
    raw = epath.read_bytes()
    if raw[:4] != EMBEDDINGS_MAGIC:
        raise BundleFormatError(f"{epath}: bad magic {raw[:4]!r}")
    if len(raw) < 12:
        raise BundleFormatError(f"{epath}: truncated header")
    dim, count = struct.unpack("<II", raw[4:12])
    want = 12 + 4 * dim * count
    if len(raw) != want:
        raise BundleFormatError(f"{epath}: expected {want} bytes, got {len(raw)}")
    vectors = np.frombuffer(raw[12:], dtype="<f4").reshape(count, dim)
    if not np.all(np.isfinite(vectors)):
        raise BundleFormatError(f"{epath}: embeddings contain NaN or Inf")
    if expected_dim is not None and dim != expected_dim:
        raise BundleFormatError(f"{epath}: width {dim} does not match expected {expected_dim}")

    lpath = root / "labels.bin"
    raw = lpath.read_bytes()
    if raw[:4] != LABELS_MAGIC:
        raise BundleFormatError(f"{lpath}: bad magic {raw[:4]!r}")
    if len(raw) < 8:
        raise BundleFormatError(f"{lpath}: truncated header")
    (lcount,) = struct.unpack("<I", raw[4:8])
    if lcount != count:
        raise BundleFormatError(f"{lpath}: label count {lcount} vs embedding count {count}")
    if len(raw) != 8 + 4 * lcount:
        raise BundleFormatError(f"{lpath}: expected {8 + 4 * lcount} bytes, got {len(raw)}")
    labels = np.frombuffer(raw[8:], dtype="<i4")

    mpath = root / "manifest.json"
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise BundleFormatError(f"{mpath}: invalid JSON: {e}") from e
    if manifest.get("version") != MANIFEST_VERSION:
        raise BundleFormatError(f"{mpath}: unsupported version {manifest.get('version')!r}")
    names = manifest.get("label_names", [])
    bad = (labels != -1) & ((labels < 0) | (labels >= len(names)))
    if np.any(bad):
        raise BundleFormatError(f"{lpath}: label id outside [0, {len(names)})")
    seen_idx = set()
    for split, idxs in manifest.get("splits", {}).items():
        for i in idxs:
            if not 0 <= int(i) < count:
                raise BundleFormatError(f"{mpath}: split {split!r} references record {i}")
            if int(i) in seen_idx:
                raise BundleFormatError(f"{mpath}: record {i} in more than one split")
            seen_idx.add(int(i))

    per_class = {}
    for lid, name in enumerate(names):
        per_class[name] = int(np.sum(labels == lid))
    per_class["(unlabeled)"] = int(np.sum(labels == -1))
    return {
        "count": int(count),
        "dim": int(dim),
        "per_class": per_class,
        "splits": {k: len(v) for k, v in manifest.get("splits", {}).items()},
    }
