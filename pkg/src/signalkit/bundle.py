"""Embedding-bundle dataset format, model checkpoints, synthetic clusters.

On-disk bundle layout (all integers little-endian):

  embeddings.bin  magic "SGE1", dim u32, count u32, count*dim float32 rows
  labels.bin      magic "SGL1", count u32, count int32 label ids (-1 = unlabeled)
  manifest.json   {"version": 1, "label_names": [...], "splits": {name: [indices]}}

Checkpoint container (model parameters, 64-bit):

  magic "SGM1", version u32, tensor count u32, then per tensor:
    name length u16 + UTF-8 name, rank u8, dims u32 each, float64 data;
  trailing config JSON blob with u32 length prefix.

Synthetic bundles use numpy's PCG64 generator; fixtures pinned to a seed are
stable across platforms for a given numpy major line.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

EMBEDDINGS_MAGIC = b"SGE1"
LABELS_MAGIC = b"SGL1"
CHECKPOINT_MAGIC = b"SGM1"
CHECKPOINT_VERSION = 1
MANIFEST_VERSION = 1
UNLABELED = -1

SPLIT_NAMES = ("train", "dev", "test")


@dataclass
class EmbeddingBundle:
    """Fixed-length utterance embeddings with labels and split assignments."""

    dim: int
    vectors: np.ndarray            # [count, dim] float32
    label_ids: np.ndarray          # [count] int32, -1 = unlabeled
    label_names: list[str]
    splits: dict[str, list[int]] = field(default_factory=dict)

    @property
    def count(self) -> int:
        return int(self.vectors.shape[0])

    def validate(self):
        if self.dim <= 0:
            raise ValidationError(f"bundle dim must be positive, got {self.dim}")
        if self.vectors.shape != (self.count, self.dim):
            raise ValidationError(
                f"vectors shape {self.vectors.shape} does not match count={self.count}, dim={self.dim}")
        if self.label_ids.shape != (self.count,):
            raise ValidationError(
                f"label count {self.label_ids.shape[0]} does not match vector count {self.count}")
        if not np.all(np.isfinite(self.vectors)):
            raise ValidationError("bundle vectors contain NaN or Inf")
        n_names = len(self.label_names)
        bad = (self.label_ids != UNLABELED) & ((self.label_ids < 0) | (self.label_ids >= n_names))
        if np.any(bad):
            first = int(np.argmax(bad))
            raise ValidationError(
                f"label id {int(self.label_ids[first])} at record {first} is outside "
                f"[0, {n_names}) and not {UNLABELED}")
        used = set()
        for name, idxs in self.splits.items():
            for i in idxs:
                if not 0 <= i < self.count:
                    raise ValidationError(f"split {name!r} references record {i} beyond count {self.count}")
                if i in used:
                    raise ValidationError(f"record {i} appears in more than one split")
                used.add(i)

    def split_indices(self, name: str) -> np.ndarray:
        if name not in self.splits:
            raise ValidationError(f"bundle has no split {name!r}; available: {sorted(self.splits)}")
        return np.asarray(self.splits[name], dtype=np.intp)


def make_bundle(vectors, label_ids, label_names, splits=None) -> EmbeddingBundle:
    vectors = np.ascontiguousarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise ValidationError(f"vectors must be a 2-D matrix, got rank {vectors.ndim}")
    b = EmbeddingBundle(
        dim=int(vectors.shape[1]),
        vectors=vectors,
        label_ids=np.asarray(label_ids, dtype=np.int32),
        label_names=list(label_names),
        splits={k: [int(i) for i in v] for k, v in (splits or {}).items()},
    )
    b.validate()
    return b


# ---------------------------------------------------------------------------
# bundle serialization
# ---------------------------------------------------------------------------

def write_bundle(bundle: EmbeddingBundle, path) -> None:
    """Write embeddings.bin / labels.bin / manifest.json into directory `path`."""
    bundle.validate()
    if bundle.count > 0xFFFFFFFF or bundle.dim > 0xFFFFFFFF:
        raise ValidationError("count/dim overflow the 32-bit header fields")
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    with open(root / "embeddings.bin", "wb") as f:
        f.write(EMBEDDINGS_MAGIC)
        f.write(struct.pack("<II", bundle.dim, bundle.count))
        f.write(np.ascontiguousarray(bundle.vectors, dtype="<f4").tobytes())

    with open(root / "labels.bin", "wb") as f:
        f.write(LABELS_MAGIC)
        f.write(struct.pack("<I", bundle.count))
        f.write(np.ascontiguousarray(bundle.label_ids, dtype="<i4").tobytes())

    manifest = {
        "version": MANIFEST_VERSION,
        "label_names": bundle.label_names,
        "splits": {k: list(map(int, v)) for k, v in bundle.splits.items()},
    }
    with open(root / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


def _read_exact(f, n: int, path: Path, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError(f"{path}: truncated {what}: expected {n} bytes, got {len(data)}")
    return data


def _guard_payload(f, n: int, path: Path, what: str):
    """Reject a declared payload larger than the file before attempting the read
    (a corrupt header can otherwise demand an absurd allocation)."""
    remaining = path.stat().st_size - f.tell()
    if n > remaining:
        raise FormatError(f"{path}: truncated {what}: expected {n} bytes, got {max(remaining, 0)}")


def read_bundle(path) -> EmbeddingBundle:
    """Read a bundle directory; raises FormatError / ValidationError on violations."""
    root = Path(path)
    epath = root / "embeddings.bin"
    with open(epath, "rb") as f:
        magic = _read_exact(f, 4, epath, "magic")
        if magic != EMBEDDINGS_MAGIC:
            raise FormatError(f"{epath}: bad magic {magic!r}, expected {EMBEDDINGS_MAGIC!r}")
        dim, count = struct.unpack("<II", _read_exact(f, 8, epath, "header"))
        _guard_payload(f, 4 * dim * count, epath, "embedding payload")
        payload = _read_exact(f, 4 * dim * count, epath, "embedding payload")
        extra = f.read(1)
        if extra:
            raise FormatError(f"{epath}: trailing bytes after embedding payload")
    vectors = np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()

    lpath = root / "labels.bin"
    with open(lpath, "rb") as f:
        magic = _read_exact(f, 4, lpath, "magic")
        if magic != LABELS_MAGIC:
            raise FormatError(f"{lpath}: bad magic {magic!r}, expected {LABELS_MAGIC!r}")
        (lcount,) = struct.unpack("<I", _read_exact(f, 4, lpath, "header"))
        if lcount != count:
            raise FormatError(
                f"{lpath}: label count {lcount} does not match embedding count {count}")
        _guard_payload(f, 4 * lcount, lpath, "label payload")
        lpayload = _read_exact(f, 4 * lcount, lpath, "label payload")
    label_ids = np.frombuffer(lpayload, dtype="<i4").copy()

    mpath = root / "manifest.json"
    try:
        with open(mpath, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise FormatError(f"{mpath}: invalid JSON: {e}") from e
    if not isinstance(manifest, dict):
        raise FormatError(f"{mpath}: manifest must be a JSON object")
    if manifest.get("version") != MANIFEST_VERSION:
        raise FormatError(
            f"{mpath}: unsupported manifest version {manifest.get('version')!r}, "
            f"expected {MANIFEST_VERSION}")
    names = manifest.get("label_names", [])
    splits_raw = manifest.get("splits", {})
    if not isinstance(names, list) or not all(isinstance(s, str) for s in names):
        raise FormatError(f"{mpath}: label_names must be a list of strings")
    if not isinstance(splits_raw, dict):
        raise FormatError(f"{mpath}: splits must be an object of index lists")
    splits = {}
    for k, v in splits_raw.items():
        if not isinstance(v, list) or not all(isinstance(i, int) for i in v):
            raise FormatError(f"{mpath}: split {k!r} must be a list of integers")
        splits[str(k)] = [int(i) for i in v]

    bundle = EmbeddingBundle(
        dim=int(dim),
        vectors=vectors,
        label_ids=label_ids,
        label_names=names,
        splits=splits,
    )
    bundle.validate()
    return bundle


# ---------------------------------------------------------------------------
# checkpoint container
# ---------------------------------------------------------------------------

def save_checkpoint(tensors: dict[str, np.ndarray], config: dict, path) -> None:
    """Write a named-tensor table plus a config record; round-trip is bit-exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(tensors)))
        for name, arr in tensors.items():
            # note: ascontiguousarray would promote 0-d tensors to 1-d
            arr = np.asarray(arr, dtype="<f8", order="C")
            name_b = name.encode("utf-8")
            if len(name_b) > 0xFFFF:
                raise ValidationError(f"tensor name too long: {name!r}")
            if arr.ndim > 0xFF:
                raise ValidationError(f"tensor rank {arr.ndim} overflows the u8 rank field")
            f.write(struct.pack("<H", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.tobytes())
        blob = json.dumps(config, sort_keys=True).encode("utf-8")
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, path, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        version, n_tensors = struct.unpack("<II", _read_exact(f, 8, path, "header"))
        if version != CHECKPOINT_VERSION:
            raise FormatError(
                f"{path}: unsupported checkpoint version {version}, reader supports {CHECKPOINT_VERSION}")
        tensors: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2, path, "tensor name length"))
            try:
                name = _read_exact(f, name_len, path, "tensor name").decode("utf-8")
            except UnicodeDecodeError as e:
                raise FormatError(f"{path}: tensor name is not valid UTF-8: {e}") from e
            if name in tensors:
                raise FormatError(f"{path}: duplicate tensor name {name!r}")
            (rank,) = struct.unpack("<B", _read_exact(f, 1, path, "tensor rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, path, "tensor dims"))
            n_elem = 1
            for d in dims:
                n_elem *= d
            _guard_payload(f, 8 * n_elem, path, f"tensor {name!r} data")
            data = _read_exact(f, 8 * n_elem, path, f"tensor {name!r} data")
            tensors[name] = np.frombuffer(data, dtype="<f8").reshape(dims).copy()
        (blob_len,) = struct.unpack("<I", _read_exact(f, 4, path, "config length"))
        _guard_payload(f, blob_len, path, "config blob")
        blob = _read_exact(f, blob_len, path, "config blob")
        extra = f.read(1)
        if extra:
            raise FormatError(f"{path}: trailing bytes after config blob")
    try:
        config = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: invalid config blob: {e}") from e
    return tensors, config


# ---------------------------------------------------------------------------
# synthetic clusters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    classes: int
    per_class: int
    dim: int
    cluster_std: float
    mean_radius: float
    seed: int

    def validate(self):
        for name in ("classes", "per_class", "dim"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"synthetic config field {name!r} must be positive")
        if self.cluster_std <= 0 or self.mean_radius <= 0:
            raise ValidationError("cluster_std and mean_radius must be positive")


def generate_synthetic(config: SynthConfig) -> EmbeddingBundle:
    """Deterministic isotropic Gaussian clusters around radius-normalized means.

    Class means are seeded Gaussian directions scaled to `mean_radius`; each
    record is its class mean plus N(0, cluster_std^2 I). Splits are 60/20/20
    per class in record order.
    """
    config.validate()
    rng = np.random.Generator(np.random.PCG64(config.seed))
    means = rng.standard_normal((config.classes, config.dim))
    norms = np.linalg.norm(means, axis=1, keepdims=True)
    # a zero draw is astronomically unlikely but would break normalization
    norms[norms == 0] = 1.0
    means = means / norms * config.mean_radius

    count = config.classes * config.per_class
    vectors = np.empty((count, config.dim), dtype=np.float32)
    label_ids = np.empty(count, dtype=np.int32)
    splits: dict[str, list[int]] = {name: [] for name in SPLIT_NAMES}
    n_train = int(config.per_class * 0.6)
    n_dev = int(config.per_class * 0.2)

    row = 0
    for c in range(config.classes):
        noise = rng.normal(0.0, config.cluster_std, size=(config.per_class, config.dim))
        vectors[row:row + config.per_class] = (means[c] + noise).astype(np.float32)
        label_ids[row:row + config.per_class] = c
        splits["train"].extend(range(row, row + n_train))
        splits["dev"].extend(range(row + n_train, row + n_train + n_dev))
        splits["test"].extend(range(row + n_train + n_dev, row + config.per_class))
        row += config.per_class

    names = [f"gen{c}" for c in range(config.classes)]
    return make_bundle(vectors, label_ids, names, splits)
