import io

import numpy as np
import pytest

from bovw import FeatureTensor, FormatError, TruncationError, ValidationError, read_tensor, write_tensor


def roundtrip(tensor):
    buf = io.BytesIO()
    write_tensor(tensor, buf)
    buf.seek(0)
    return read_tensor(buf)


def test_smallest_tensor_size_and_roundtrip():
    t = FeatureTensor(image_id="tiny", data=np.zeros((1, 1, 1)), width=1, height=1)
    buf = io.BytesIO()
    write_tensor(t, buf)
    # 8 u32 header fields + 4-byte id + one float32
    assert len(buf.getvalue()) == 32 + 4 + 4
    buf.seek(0)
    back = read_tensor(buf)
    assert back.image_id == "tiny"
    assert np.array_equal(back.data, t.data)


def test_payload_size_arithmetic():
    t = FeatureTensor(image_id="s", data=np.ones((2, 2, 3)), width=6, height=4)
    buf = io.BytesIO()
    write_tensor(t, buf)
    assert len(buf.getvalue()) == 32 + 1 + 2 * 2 * 3 * 4
    assert np.array_equal(roundtrip(t).data, t.data)


def test_roundtrip_oracle_random_tensors():
    rng = np.random.default_rng(7)
    for _ in range(100):
        t = FeatureTensor(
            image_id=f"img-{rng.integers(1e6)}",
            data=rng.standard_normal((16, 8, 8)).astype(np.float32),
            width=int(rng.integers(1, 2000)),
            height=int(rng.integers(1, 2000)),
        )
        back = roundtrip(t)
        assert back.image_id == t.image_id
        assert (back.width, back.height) == (t.width, t.height)
        assert back.data.tobytes() == t.data.tobytes()


def test_file_roundtrip(tmp_path):
    t = FeatureTensor(image_id="disk", data=np.full((3, 2, 2), 0.5), width=20, height=10)
    path = tmp_path / "t.lft"
    write_tensor(t, path)
    back = read_tensor(path)
    assert back.image_id == "disk"
    assert np.array_equal(back.data, t.data)


def test_bad_magic_rejected():
    with pytest.raises(FormatError):
        read_tensor(io.BytesIO(b"NOPE" + b"\x00" * 60))


def test_truncated_payload_rejected():
    t = FeatureTensor(image_id="x", data=np.ones((2, 3, 4)), width=8, height=6)
    buf = io.BytesIO()
    write_tensor(t, buf)
    clipped = buf.getvalue()[:-5]
    with pytest.raises(TruncationError):
        read_tensor(io.BytesIO(clipped))


def test_truncated_header_rejected():
    with pytest.raises(TruncationError):
        read_tensor(io.BytesIO(b"LFT1\x01"))


def test_nan_payload_rejected():
    t = FeatureTensor(image_id="x", data=np.ones((1, 1, 2)), width=4, height=4)
    buf = io.BytesIO()
    write_tensor(t, buf)
    raw = bytearray(buf.getvalue())
    raw[-4:] = np.array([np.nan], dtype="<f4").tobytes()
    with pytest.raises(ValidationError):
        read_tensor(io.BytesIO(bytes(raw)))


def test_invalid_construction():
    with pytest.raises(ValidationError):
        FeatureTensor(image_id="x", data=np.ones((2, 2)), width=4, height=4)
    with pytest.raises(ValidationError):
        FeatureTensor(image_id="x", data=np.ones((1, 1, 1)), width=0, height=4)
    with pytest.raises(ValidationError):
        FeatureTensor(image_id="x", data=np.array([[[np.inf]]]), width=4, height=4)


def test_unicode_image_id():
    t = FeatureTensor(image_id="café-βéta", data=np.zeros((1, 2, 2)), width=4, height=4)
    assert roundtrip(t).image_id == "café-βéta"
