import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featreg.npyio import (
    TensorFormatError,
    TruncatedPayloadError,
    UnsupportedDtypeError,
    load_sidecar,
    load_tensor,
    save_sidecar,
    save_tensor,
)


def test_round_trip_identity(tmp_path):
    arr = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    path = tmp_path / "a.npy"
    save_tensor(arr, path)
    back = load_tensor(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, arr)
    assert back.tobytes() == arr.tobytes()


def test_f64_file_rejected(tmp_path):
    path = tmp_path / "d.npy"
    np.save(path, np.zeros((3, 3), dtype=np.float64))
    with pytest.raises(UnsupportedDtypeError):
        load_tensor(path)


def test_feature_map_shape(tmp_path):
    # the SAM/MedSAM export shape: 256 channels at 64x64
    arr = np.zeros((256, 64, 64), dtype=np.float32)
    path = tmp_path / "f.npy"
    save_tensor(arr, path)
    assert load_tensor(path).shape == (256, 64, 64)


def test_save_load_save_byte_identical(tmp_path):
    rng = np.random.default_rng(0)
    p1 = tmp_path / "a.npy"
    p2 = tmp_path / "b.npy"
    save_tensor(rng.normal(size=(5, 7)).astype(np.float32), p1)
    save_tensor(load_tensor(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_zero_length_dimension_rejected(tmp_path):
    with pytest.raises(TensorFormatError):
        save_tensor(np.zeros((0, 3), dtype=np.float32), tmp_path / "z.npy")


def test_displacement_field_payload_size(tmp_path):
    path = tmp_path / "u.npy"
    save_tensor(np.zeros((2, 128, 128), dtype=np.float32), path)
    raw = path.read_bytes()
    hlen = int.from_bytes(raw[8:10], "little")
    assert len(raw) - 10 - hlen == 2 * 128 * 128 * 4  # 131,072-byte payload


def test_numpy_save_compat_both_ways(tmp_path):
    arr = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    ours = tmp_path / "ours.npy"
    theirs = tmp_path / "theirs.npy"
    save_tensor(arr, ours)
    np.save(theirs, arr)
    assert ours.read_bytes() == theirs.read_bytes()
    assert np.array_equal(np.load(ours), arr)
    assert np.array_equal(load_tensor(theirs), arr)


def test_non_finite_rejected(tmp_path):
    arr = np.array([1.0, np.nan], dtype=np.float32)
    with pytest.raises(ValueError):
        save_tensor(arr, tmp_path / "nan.npy")


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.npy"
    path.write_bytes(b"NOTNUMPY" + b"\x00" * 64)
    with pytest.raises(TensorFormatError):
        load_tensor(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.npy"
    save_tensor(np.ones((4, 4), dtype=np.float32), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(TruncatedPayloadError):
        load_tensor(path)


@settings(max_examples=40, deadline=None)
@given(
    shape=st.lists(st.integers(1, 6), min_size=1, max_size=4),
    seed=st.integers(0, 2**31),
)
def test_round_trip_all_ranks(shape, seed):
    import tempfile
    from pathlib import Path

    rng = np.random.default_rng(seed)
    arr = rng.normal(size=shape).astype(np.float32)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / f"r{len(shape)}.npy"
        save_tensor(arr, path)
        assert load_tensor(path).tobytes() == arr.tobytes()


def test_sidecar(tmp_path):
    path = tmp_path / "img.npy"
    save_tensor(np.ones((4, 4), dtype=np.float32), path)
    save_sidecar(path, spacing=[1.8, 1.8], source_tag="test")
    meta = load_sidecar(path)
    assert meta == {"spacing": [1.8, 1.8], "source_tag": "test"}
    assert load_sidecar(tmp_path / "other.npy") is None
