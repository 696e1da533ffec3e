import hashlib
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypermaps.errors import DataError, TensorFormatError, ValidationError
from hypermaps.tensor_store import (DatasetManifest, ManifestEntry,
                                    load_manifest, read_tensor,
                                    save_manifest, validate_manifest,
                                    write_tensor)


def test_smallest_tensor_layout(tmp_path):
    path = tmp_path / "one.hmt"
    write_tensor(path, (1,), [0.0])
    blob = path.read_bytes()
    # magic(4) + version u32(4) + dtype u8(1) + ndim u8(1) + dim u32(4) + one f32(4)
    assert len(blob) == 18
    assert blob[:4] == b"HMTF"
    assert struct.unpack("<I", blob[4:8])[0] == 1
    assert blob[8] == 0 and blob[9] == 1
    assert struct.unpack("<I", blob[10:14])[0] == 1
    assert blob[14:] == b"\x00\x00\x00\x00"


def test_3d_tensor_byte_count(tmp_path):
    path = tmp_path / "cube.hmt"
    write_tensor(path, (2, 2, 2), np.arange(8, dtype=np.float32))
    assert path.stat().st_size == 4 + 4 + 1 + 1 + 12 + 32  # = 54


def test_write_is_deterministic(tmp_path):
    values = np.linspace(-3, 3, 24, dtype=np.float32)
    a, b = tmp_path / "a.hmt", tmp_path / "b.hmt"
    write_tensor(a, (2, 3, 4), values)
    write_tensor(b, (2, 3, 4), values)
    assert a.read_bytes() == b.read_bytes()


def test_golden_hash(tmp_path):
    path = tmp_path / "golden.hmt"
    write_tensor(path, (3,), np.array([1.0, -2.5, 1e-7], dtype=np.float32))
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    assert digest == "8bbe03397c24ef2f1742aa959abec25b1f1d2c2d312fadfc061f22ad0e3ceebf"


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_roundtrip_bit_exact(tmp_path_factory, data):
    floats = st.floats(allow_nan=False, allow_infinity=False, width=32)
    if data.draw(st.booleans()):
        dims = (data.draw(st.integers(1, 40)),)
    else:
        dims = tuple(data.draw(st.integers(1, 6)) for _ in range(3))
    n = int(np.prod(dims))
    values = np.array(data.draw(st.lists(floats, min_size=n, max_size=n)),
                      dtype=np.float32)
    path = tmp_path_factory.mktemp("rt") / "t.hmt"
    write_tensor(path, dims, values)
    rdims, rvalues = read_tensor(path)
    assert rdims == dims
    assert rvalues.tobytes() == values.tobytes()


def test_roundtrip_1000_random_tensors(tmp_path):
    rng = np.random.default_rng(42)
    path = tmp_path / "t.hmt"
    for i in range(1000):
        if rng.integers(2):
            dims = (int(rng.integers(1, 64)),)
        else:
            dims = tuple(int(v) for v in rng.integers(1, 8, size=3))
        values = rng.standard_normal(int(np.prod(dims))).astype(np.float32)
        write_tensor(path, dims, values)
        rdims, rvalues = read_tensor(path)
        assert rdims == dims and rvalues.tobytes() == values.tobytes()


def test_float64_dtype_roundtrip(tmp_path):
    path = tmp_path / "d.hmt"
    values = np.array([1.0, np.pi, -1e-300])
    write_tensor(path, (3,), values, dtype_code=1)
    dims, rvalues = read_tensor(path)
    assert dims == (3,) and rvalues.dtype == np.float64
    assert rvalues.tobytes() == values.tobytes()


def test_dims_values_mismatch(tmp_path):
    with pytest.raises(ValidationError, match="does not match"):
        write_tensor(tmp_path / "bad.hmt", (2, 2, 2), [1.0] * 7)


def test_empty_dims_rejected(tmp_path):
    with pytest.raises(ValidationError, match="nonempty"):
        write_tensor(tmp_path / "bad.hmt", (), [])


def test_2d_rejected(tmp_path):
    with pytest.raises(ValidationError, match="ndim"):
        write_tensor(tmp_path / "bad.hmt", (2, 2), [1.0] * 4)


def test_bad_magic(tmp_path):
    path = tmp_path / "x.hmt"
    write_tensor(path, (1,), [1.0])
    blob = bytearray(path.read_bytes())
    blob[:4] = b"XXXX"
    path.write_bytes(bytes(blob))
    with pytest.raises(TensorFormatError, match="magic"):
        read_tensor(path)


def test_bad_version(tmp_path):
    path = tmp_path / "x.hmt"
    write_tensor(path, (1,), [1.0])
    blob = bytearray(path.read_bytes())
    blob[4:8] = struct.pack("<I", 9)
    path.write_bytes(bytes(blob))
    with pytest.raises(TensorFormatError, match="version"):
        read_tensor(path)


def test_bad_dtype_code(tmp_path):
    path = tmp_path / "x.hmt"
    write_tensor(path, (1,), [1.0])
    blob = bytearray(path.read_bytes())
    blob[8] = 7
    path.write_bytes(bytes(blob))
    with pytest.raises(TensorFormatError, match="dtype"):
        read_tensor(path)


def test_truncated_payload_names_byte_counts(tmp_path):
    path = tmp_path / "x.hmt"
    write_tensor(path, (8,), np.arange(8, dtype=np.float32))
    blob = path.read_bytes()
    path.write_bytes(blob[:-4])  # 7 of 8 floats remain
    with pytest.raises(TensorFormatError, match="expected 32 bytes, got 28"):
        read_tensor(path)


def test_missing_file():
    with pytest.raises(DataError, match="not found"):
        read_tensor("/nonexistent/never.hmt")


def _entry(tmp_path, image_id, tag, with_files=True):
    layer_files = {}
    for layer, dims in (("pool2", (128, 4, 4)), ("conv4_3", (512, 2, 2)), ("fc7", (4096,))):
        rel = f"{image_id}_{layer}.hmt"
        if with_files:
            write_tensor(tmp_path / rel, dims,
                         np.zeros(int(np.prod(dims)), dtype=np.float32))
        layer_files[layer] = rel
    return ManifestEntry(image_id=image_id, time_tag=tag, layer_files=layer_files,
                         image_size=(16, 16))


def test_manifest_roundtrip_and_validation(tmp_path):
    manifest = DatasetManifest(
        entries=[_entry(tmp_path, "a", "t0"), _entry(tmp_path, "b", "t1")],
        root=str(tmp_path),
    )
    path = tmp_path / "manifest.json"
    save_manifest(manifest, path)
    loaded = load_manifest(path)
    assert [e.image_id for e in loaded.entries] == ["a", "b"]
    assert validate_manifest(loaded) == []


def test_manifest_missing_layer_violation(tmp_path):
    entry = _entry(tmp_path, "a", "t0")
    del entry.layer_files["conv4_3"]
    manifest = DatasetManifest(entries=[entry, _entry(tmp_path, "b", "t1")],
                               root=str(tmp_path))
    violations = validate_manifest(manifest)
    assert len(violations) == 1
    assert violations[0].entry_index == 0
    assert "conv4_3" in violations[0].message


def test_manifest_seeded_defects(tmp_path):
    entries = []
    for i in range(100):
        tag = "t0" if i % 2 == 0 else "t1"
        entries.append(_entry(tmp_path, f"img{i:03d}", tag))
    # three seeded defects
    entries[7].time_tag = "t9"
    del entries[23].layer_files["pool2"]
    entries[61].layer_files["fc7"] = "missing_file.hmt"
    manifest = DatasetManifest(entries=entries, root=str(tmp_path))
    violations = validate_manifest(manifest)
    assert len(violations) == 3
    assert {v.entry_index for v in violations} == {7, 23, 61}


def test_manifest_bad_json(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text("{not json")
    with pytest.raises(ValidationError, match="JSON"):
        load_manifest(path)


def test_manifest_fold_partition(tmp_path):
    manifest = DatasetManifest(entries=[_entry(tmp_path, "a", "t0")],
                               root=str(tmp_path))
    violations = validate_manifest(manifest)
    assert any("t1" in v.message for v in violations)
