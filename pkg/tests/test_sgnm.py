import struct

import numpy as np
import pytest

from signgnn import sgnm


def test_header_layout():
    buf = sgnm.encode(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    assert buf[:4] == bytes([0x53, 0x47, 0x4E, 0x4D])
    assert buf[4] == 1
    assert struct.unpack("<QQ", buf[5:21]) == (2, 3)
    assert struct.unpack("<6f", buf[21:]) == (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    assert len(buf) == 21 + 24


def test_roundtrip_rounds_to_float32_once(rng):
    x = rng.standard_normal((5, 4))
    y = sgnm.decode(sgnm.encode(x))
    assert y.dtype == np.float64
    np.testing.assert_array_equal(y, x.astype(np.float32).astype(np.float64))
    assert sgnm.encode(y) == sgnm.encode(x)
    assert np.max(np.abs(y - x) / np.abs(x)) <= 2.0 ** -24


def test_empty_matrix():
    assert sgnm.decode(sgnm.encode(np.zeros((0, 3)))).shape == (0, 3)


@pytest.mark.parametrize("mutate,match", [
    (lambda b: b"XXXX" + b[4:], "magic"),
    (lambda b: b[:4] + b"\x02" + b[5:], "version"),
    (lambda b: b[:-1], "size"),
    (lambda b: b[:10], "truncated"),
])
def test_decode_errors(mutate, match):
    with pytest.raises(sgnm.FormatError, match=match):
        sgnm.decode(mutate(sgnm.encode(np.ones((2, 2)))))


def test_fnv1a_reference_vectors():
    # published FNV-1a 64-bit test vectors
    assert sgnm.fnv1a_64(b"") == 0xCBF29CE484222325
    assert sgnm.fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert sgnm.fnv1a_64(b"foobar") == 0x85944171F73967E8


def test_atomic_write_leaves_no_tmp(tmp_path):
    sgnm.save(tmp_path / "m.sgnm", np.eye(2))
    assert [p.name for p in tmp_path.iterdir()] == ["m.sgnm"]
