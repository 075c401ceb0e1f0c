"""Array file round trips, hash verification, manifest determinism."""

import hashlib

import numpy as np
import pytest
from PIL import Image

from ctmar.fileio import (
    canonical_json,
    header_digest,
    import_png16,
    read_array,
    read_manifest,
    write_array,
    write_manifest,
)


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    values = rng.standard_normal((17, 23)).astype(np.float32)
    stem = write_array(tmp_path / "img", values, {"role": "clean", "pixel_spacing": 1.0})
    back, header = read_array(stem)
    assert back.dtype == np.float32
    assert back.tobytes() == values.tobytes()
    assert header["role"] == "clean"
    assert header["shape"] == [17, 23]


def test_write_is_deterministic(tmp_path):
    values = np.arange(12, dtype=np.float32).reshape(3, 4)
    a = write_array(tmp_path / "a", values, {"role": "x"})
    b = write_array(tmp_path / "b", values, {"role": "x"})
    assert a.with_suffix(".f32").read_bytes() == b.with_suffix(".f32").read_bytes()
    assert a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()


def test_payload_hash_matches_known_digest(tmp_path):
    # header sha256 is the sha256 of the raw little-endian payload bytes
    values = np.array([[1.0, 2.0], [3.0, 4.0]], dtype="<f4")
    stem = write_array(tmp_path / "v", values)
    _, header = read_array(stem)
    assert header["sha256"] == hashlib.sha256(values.tobytes()).hexdigest()


def test_corrupted_payload_is_rejected(tmp_path):
    stem = write_array(tmp_path / "v", np.zeros((4, 4), dtype=np.float32))
    payload = bytearray(stem.with_suffix(".f32").read_bytes())
    payload[5] ^= 0xFF
    stem.with_suffix(".f32").write_bytes(bytes(payload))
    with pytest.raises(ValueError, match="sha256 mismatch"):
        read_array(stem)


def test_truncated_payload_is_rejected(tmp_path):
    stem = write_array(tmp_path / "v", np.zeros((4, 4), dtype=np.float32))
    payload = stem.with_suffix(".f32").read_bytes()
    stem.with_suffix(".f32").write_bytes(payload[:-4])
    with pytest.raises(ValueError, match="bytes"):
        read_array(stem)


def test_metadata_cannot_shadow_reserved_fields(tmp_path):
    with pytest.raises(ValueError, match="reserved"):
        write_array(tmp_path / "v", np.zeros(3, dtype=np.float32), {"shape": [1]})


def test_header_digest_changes_with_metadata(tmp_path):
    a = write_array(tmp_path / "a", np.zeros(3, dtype=np.float32), {"role": "x"})
    b = write_array(tmp_path / "b", np.zeros(3, dtype=np.float32), {"role": "y"})
    assert header_digest(a) != header_digest(b)


def test_manifest_round_trip_and_determinism(tmp_path):
    payload = {"b": [1, 2], "a": {"z": 1, "y": 2}, "seed": 7}
    p1 = write_manifest(tmp_path / "m1.json", payload)
    p2 = write_manifest(tmp_path / "m2.json", {"seed": 7, "a": {"y": 2, "z": 1}, "b": [1, 2]})
    assert p1.read_bytes() == p2.read_bytes()  # key order independent
    assert read_manifest(p1) == payload


def test_canonical_json_rejects_nan():
    with pytest.raises(ValueError):
        canonical_json({"x": float("nan")})


def test_png16_import_maps_window(tmp_path):
    raw = np.array([[0, 32768], [65535, 16384]], dtype=np.uint16)
    path = tmp_path / "img.png"
    Image.fromarray(raw).save(path)
    values = import_png16(path, (0.0, 0.08))
    assert values.dtype == np.float32
    np.testing.assert_allclose(values[0, 0], 0.0)
    np.testing.assert_allclose(values[1, 0], 0.08, rtol=1e-6)
    np.testing.assert_allclose(values[0, 1], 0.08 * 32768 / 65535, rtol=1e-6)


def test_png16_rejects_8bit(tmp_path):
    path = tmp_path / "img8.png"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8), mode="L").save(path)
    with pytest.raises(ValueError, match="16-bit"):
        import_png16(path, (0.0, 1.0))
