"""Byte-level format fixtures, round-trip properties, synthetic-cluster checks."""

import json
import shutil
import struct

import numpy as np
import pytest

import signalkit as sk
from signalkit.bundle import CHECKPOINT_MAGIC
from signalkit.errors import FormatError, SignalError, ValidationError


def _random_bundle(rng):
    count = int(rng.integers(0, 12))
    dim = int(rng.integers(1, 9))
    n_names = int(rng.integers(1, 5))
    vectors = rng.normal(size=(count, dim)).astype(np.float32)
    label_ids = rng.integers(-1, n_names, size=count).astype(np.int32)
    order = rng.permutation(count)
    cut1, cut2 = sorted(rng.integers(0, count + 1, size=2)) if count else (0, 0)
    splits = {
        "train": [int(i) for i in order[:cut1]],
        "dev": [int(i) for i in order[cut1:cut2]],
        "test": [int(i) for i in order[cut2:]],
    }
    names = [f"gen{i}" for i in range(n_names)]
    return sk.make_bundle(vectors, label_ids, names, splits)


# ---------------------------------------------------------------------------
# bundle bytes
# ---------------------------------------------------------------------------

def test_single_record_bundle_bytes(tmp_path):
    b = sk.make_bundle(np.zeros((1, 2), dtype=np.float32), [0], ["gen0"], {"train": [0]})
    sk.write_bundle(b, tmp_path)
    emb = (tmp_path / "embeddings.bin").read_bytes()
    assert len(emb) == 20
    assert emb == b"SGE1" + struct.pack("<II", 2, 1) + struct.pack("<ff", 0.0, 0.0)
    lab = (tmp_path / "labels.bin").read_bytes()
    assert lab == b"SGL1" + struct.pack("<I", 1) + struct.pack("<i", 0)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["version"] == 1
    assert manifest["label_names"] == ["gen0"]
    assert manifest["splits"]["train"] == [0]


def test_empty_bundle_sizes(tmp_path):
    b = sk.make_bundle(np.zeros((0, 3), dtype=np.float32), [], ["gen0"], {})
    sk.write_bundle(b, tmp_path)
    assert (tmp_path / "embeddings.bin").stat().st_size == 12
    assert (tmp_path / "labels.bin").stat().st_size == 8
    back = sk.read_bundle(tmp_path)
    assert back.count == 0 and back.dim == 3


def test_bundle_roundtrip_property(tmp_path):
    rng = np.random.default_rng(100)
    for i in range(100):
        b = _random_bundle(rng)
        d = tmp_path / f"b{i}"
        sk.write_bundle(b, d)
        back = sk.read_bundle(d)
        assert back.dim == b.dim and back.count == b.count
        assert np.array_equal(back.vectors, b.vectors)
        assert np.array_equal(back.label_ids, b.label_ids)
        assert back.label_names == b.label_names
        assert {k: list(v) for k, v in back.splits.items()} == \
               {k: list(v) for k, v in b.splits.items()}


def test_write_after_read_reproduces_bytes(tmp_path):
    rng = np.random.default_rng(101)
    for i in range(20):
        b = _random_bundle(rng)
        first = tmp_path / f"w{i}a"
        second = tmp_path / f"w{i}b"
        sk.write_bundle(b, first)
        sk.write_bundle(sk.read_bundle(first), second)
        for name in ("embeddings.bin", "labels.bin", "manifest.json"):
            assert (first / name).read_bytes() == (second / name).read_bytes()


def test_bad_magic_names_file(tmp_path):
    b = _random_bundle(np.random.default_rng(1))
    sk.write_bundle(b, tmp_path)
    path = tmp_path / "embeddings.bin"
    data = bytearray(path.read_bytes())
    data[:4] = b"XXXX"
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="embeddings.bin.*bad magic"):
        sk.read_bundle(tmp_path)


def test_truncated_payload_reports_byte_counts(tmp_path):
    b = sk.make_bundle(np.ones((2, 3), dtype=np.float32), [0, 0], ["gen0"], {})
    sk.write_bundle(b, tmp_path)
    path = tmp_path / "embeddings.bin"
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(FormatError, match=r"expected 24 bytes, got 19"):
        sk.read_bundle(tmp_path)


def test_label_count_mismatch(tmp_path):
    b = sk.make_bundle(np.ones((2, 2), dtype=np.float32), [0, 0], ["gen0"], {})
    sk.write_bundle(b, tmp_path)
    path = tmp_path / "labels.bin"
    path.write_bytes(b"SGL1" + struct.pack("<I", 1) + struct.pack("<i", 0))
    with pytest.raises(FormatError, match="label count 1 does not match embedding count 2"):
        sk.read_bundle(tmp_path)


def test_dangling_split_index(tmp_path):
    b = sk.make_bundle(np.ones((2, 2), dtype=np.float32), [0, 0], ["gen0"], {"train": [0, 1]})
    sk.write_bundle(b, tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    manifest["splits"]["train"] = [0, 5]
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ValidationError, match="references record 5"):
        sk.read_bundle(tmp_path)


def test_overlapping_splits_rejected(tmp_path):
    b = sk.make_bundle(np.ones((2, 2), dtype=np.float32), [0, 0], ["gen0"], {"train": [0, 1]})
    sk.write_bundle(b, tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    manifest["splits"] = {"train": [0, 1], "dev": [1]}
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ValidationError, match="more than one split"):
        sk.read_bundle(tmp_path)


def test_label_out_of_range(tmp_path):
    b = sk.make_bundle(np.ones((1, 2), dtype=np.float32), [0], ["gen0"], {})
    sk.write_bundle(b, tmp_path)
    (tmp_path / "labels.bin").write_bytes(b"SGL1" + struct.pack("<I", 1) + struct.pack("<i", 7))
    with pytest.raises(ValidationError, match="label id 7"):
        sk.read_bundle(tmp_path)


def test_nan_vectors_rejected():
    with pytest.raises(ValidationError, match="NaN or Inf"):
        sk.make_bundle(np.array([[np.nan, 0.0]], dtype=np.float32), [0], ["gen0"], {})


def test_header_field_overflow_rejected(tmp_path):
    # zero rows keep the allocation empty while dim exceeds the u32 field
    b = sk.make_bundle(np.zeros((0, 2 ** 33), dtype=np.float32), [], ["gen0"], {})
    with pytest.raises(ValidationError, match="overflow"):
        sk.write_bundle(b, tmp_path)


def _corrupt(raw: bytearray, rng) -> bytes:
    mode = int(rng.integers(0, 3))
    if mode == 0 and raw:
        for _ in range(int(rng.integers(1, 6))):
            raw[int(rng.integers(0, len(raw)))] = int(rng.integers(0, 256))
    elif mode == 1:
        raw = raw[:int(rng.integers(0, len(raw) + 1))]
    else:
        raw = raw + bytes(rng.integers(0, 256, size=int(rng.integers(1, 9))))
    return bytes(raw)


def test_reader_never_crashes_on_corruption(tmp_path):
    # random byte damage either still parses or raises a documented error class
    rng = np.random.default_rng(300)
    base = tmp_path / "base"
    bundle = sk.generate_synthetic(sk.SynthConfig(
        classes=2, per_class=6, dim=5, cluster_std=0.5, mean_radius=2.0, seed=8))
    sk.write_bundle(bundle, base)
    names = ["embeddings.bin", "labels.bin", "manifest.json"]
    for trial in range(150):
        work = tmp_path / f"f{trial}"
        shutil.copytree(base, work)
        target = work / names[int(rng.integers(0, 3))]
        target.write_bytes(_corrupt(bytearray(target.read_bytes()), rng))
        try:
            sk.read_bundle(work)
        except SignalError:
            pass


def test_reader_rejects_malformed_manifest_structures(tmp_path):
    base = tmp_path / "base"
    bundle = sk.generate_synthetic(sk.SynthConfig(
        classes=2, per_class=5, dim=4, cluster_std=0.5, mean_radius=2.0, seed=9))
    sk.write_bundle(bundle, base)
    bad_manifests = [
        '{"version": 1, "label_names": 3, "splits": {}}',
        '{"version": 1, "label_names": ["a", 2], "splits": {}}',
        '{"version": 1, "label_names": [], "splits": 7}',
        '{"version": 1, "label_names": [], "splits": {"train": 3}}',
        '{"version": 1, "label_names": [], "splits": {"train": ["x"]}}',
        '[1, 2]',
    ]
    for i, text in enumerate(bad_manifests):
        work = tmp_path / f"m{i}"
        shutil.copytree(base, work)
        (work / "manifest.json").write_text(text)
        with pytest.raises(FormatError):
            sk.read_bundle(work)


# ---------------------------------------------------------------------------
# checkpoint container
# ---------------------------------------------------------------------------

def test_checkpoint_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(200)
    for i in range(20):
        tensors = {}
        for j in range(int(rng.integers(0, 6))):
            rank = int(rng.integers(0, 4))
            dims = tuple(int(d) for d in rng.integers(1, 5, size=rank))
            tensors[f"t{j}.{'x' * rank}"] = rng.normal(size=dims)
        config = {"k": int(rng.integers(1, 10)), "eps": float(rng.random()), "ids": [1, 2]}
        path = tmp_path / f"c{i}.sgm"
        sk.save_checkpoint(tensors, config, path)
        back_t, back_c = sk.load_checkpoint(path)
        assert back_c == config
        assert set(back_t) == set(tensors)
        for name in tensors:
            assert back_t[name].shape == np.asarray(tensors[name]).shape
            assert np.array_equal(back_t[name], np.asarray(tensors[name], dtype=np.float64))
        # re-saving the loaded state reproduces the file byte-for-byte
        path2 = tmp_path / f"c{i}b.sgm"
        sk.save_checkpoint(back_t, back_c, path2)
        assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_empty_table(tmp_path):
    path = tmp_path / "empty.sgm"
    sk.save_checkpoint({}, {}, path)
    tensors, config = sk.load_checkpoint(path)
    assert tensors == {} and config == {}


def test_checkpoint_version_error(tmp_path):
    path = tmp_path / "v2.sgm"
    blob = json.dumps({}).encode()
    path.write_bytes(CHECKPOINT_MAGIC + struct.pack("<II", 2, 0) +
                     struct.pack("<I", len(blob)) + blob)
    with pytest.raises(FormatError, match="version 2"):
        sk.load_checkpoint(path)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.sgm"
    path.write_bytes(b"NOPE" + struct.pack("<II", 1, 0))
    with pytest.raises(FormatError, match="bad magic"):
        sk.load_checkpoint(path)


def test_checkpoint_duplicate_tensor_name(tmp_path):
    name = b"w"
    one = struct.pack("<H", 1) + name + struct.pack("<B", 1) + struct.pack("<I", 1) + struct.pack("<d", 1.0)
    blob = json.dumps({}).encode()
    path = tmp_path / "dup.sgm"
    path.write_bytes(CHECKPOINT_MAGIC + struct.pack("<II", 1, 2) + one + one +
                     struct.pack("<I", len(blob)) + blob)
    with pytest.raises(FormatError, match="duplicate tensor name"):
        sk.load_checkpoint(path)


def test_checkpoint_truncated_tensor_data(tmp_path):
    path = tmp_path / "trunc.sgm"
    sk.save_checkpoint({"w": np.ones((2, 2))}, {}, path)
    path.write_bytes(path.read_bytes()[:-12])
    with pytest.raises(FormatError):
        sk.load_checkpoint(path)


def test_checkpoint_reader_never_crashes_on_corruption(tmp_path):
    rng = np.random.default_rng(301)
    base = tmp_path / "base.sgm"
    sk.save_checkpoint({"a.w": rng.normal(size=(3, 4)), "b": rng.normal(size=7)},
                       {"k": 5, "ids": [0, 1]}, base)
    for trial in range(150):
        work = tmp_path / f"c{trial}.sgm"
        work.write_bytes(_corrupt(bytearray(base.read_bytes()), rng))
        try:
            sk.load_checkpoint(work)
        except SignalError:
            pass


def test_load_model_rejects_malformed_config(tmp_path, tiny_trained):
    from signalkit.model import save_model
    model, index, _ = tiny_trained
    good = tmp_path / "good.sgm"
    save_model(model, index, good)
    tensors, _ = sk.load_checkpoint(good)

    bad = tmp_path / "bad.sgm"
    sk.save_checkpoint(tensors, {"n_classes": "x"}, bad)
    with pytest.raises(ValidationError, match="malformed"):
        sk.load_model(bad)
    worse = tmp_path / "worse.sgm"
    sk.save_checkpoint(tensors, [1, 2], worse)
    with pytest.raises(ValidationError, match="malformed"):
        sk.load_model(worse)
    # labels must be integral class ids
    tampered = dict(tensors)
    tampered["knn.labels"] = tensors["knn.labels"] + 0.25
    off = tmp_path / "off.sgm"
    sk.save_checkpoint(tampered, model.config.to_dict(), off)
    with pytest.raises(ValidationError, match="non-integer"):
        sk.load_model(off)


# ---------------------------------------------------------------------------
# synthetic generator
# ---------------------------------------------------------------------------

def test_synthetic_counts_and_splits():
    b = sk.generate_synthetic(sk.SynthConfig(
        classes=2, per_class=10, dim=4, cluster_std=0.5, mean_radius=3.0, seed=1))
    assert b.count == 20
    assert {k: len(v) for k, v in b.splits.items()} == {"train": 12, "dev": 4, "test": 4}


def test_synthetic_deterministic(tmp_path):
    config = sk.SynthConfig(classes=3, per_class=7, dim=6, cluster_std=0.2, mean_radius=2.0, seed=99)
    a = sk.generate_synthetic(config)
    b = sk.generate_synthetic(config)
    assert np.array_equal(a.vectors, b.vectors)
    assert np.array_equal(a.label_ids, b.label_ids)
    assert a.splits == b.splits
    # byte-identical on disk too
    sk.write_bundle(a, tmp_path / "a")
    sk.write_bundle(b, tmp_path / "b")
    for name in ("embeddings.bin", "labels.bin", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synthetic_mean_radius():
    config = sk.SynthConfig(classes=4, per_class=50, dim=16, cluster_std=0.01, mean_radius=10.0, seed=5)
    b = sk.generate_synthetic(config)
    for c in range(4):
        cluster = b.vectors[b.label_ids == c].astype(np.float64)
        assert abs(np.linalg.norm(cluster.mean(axis=0)) - 10.0) < 0.05


def test_synthetic_tight_clusters_solved_by_1nn():
    b = sk.generate_synthetic(sk.SynthConfig(
        classes=4, per_class=20, dim=8, cluster_std=0.01, mean_radius=10.0, seed=42))
    train = b.split_indices("train")
    test = b.split_indices("test")
    correct = 0
    for i in test:
        d2 = np.sum((b.vectors[train].astype(np.float64) - b.vectors[i].astype(np.float64)) ** 2, axis=1)
        nearest = train[int(np.argmin(d2))]
        correct += int(b.label_ids[nearest] == b.label_ids[i])
    assert correct == len(test)


def test_synthetic_config_validation():
    with pytest.raises(ValidationError):
        sk.SynthConfig(classes=0, per_class=1, dim=1, cluster_std=1.0, mean_radius=1.0, seed=0).validate()
    with pytest.raises(ValidationError):
        sk.SynthConfig(classes=1, per_class=1, dim=1, cluster_std=0.0, mean_radius=1.0, seed=0).validate()
