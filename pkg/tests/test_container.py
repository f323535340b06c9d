import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from dedcgan import container
from dedcgan.exceptions import FormatError


@given(hnp.arrays(st.sampled_from([np.float32, np.float64]),
                  hnp.array_shapes(min_dims=0, max_dims=4, min_side=1, max_side=5),
                  elements=st.floats(allow_nan=True, allow_infinity=True, width=32)))
def test_round_trip_bit_exact(arr):
    out = container.decode_tensor(container.encode_tensor(arr))
    assert out.dtype == arr.dtype and out.shape == arr.shape
    assert out.tobytes() == arr.tobytes()


def test_header_layout():
    arr = np.arange(6, dtype=np.float64).reshape(2, 3)
    buf = container.encode_tensor(arr)
    assert buf[:4] == b"DGT1"
    assert struct.unpack("<HBB", buf[4:8]) == (1, 1, 2)
    assert struct.unpack("<2Q", buf[8:24]) == (2, 3)
    assert buf[24:] == arr.astype("<f8").tobytes()
    assert container.encode_tensor(arr.astype(np.float32))[6] == 0


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + struct.pack("<H", 2) + b[6:],
    lambda b: b[:-1],
    lambda b: b[:6] + b"\x07" + b[7:],
])
def test_rejects_malformed(mutate):
    buf = container.encode_tensor(np.ones((2, 2), dtype=np.float32))
    with pytest.raises(FormatError):
        container.decode_tensor(mutate(buf))


def test_files_and_labels(tmp_path):
    arr = np.random.default_rng(0).standard_normal((3, 2)).astype(np.float32)
    container.save_tensor(tmp_path / "a.dgt", arr)
    assert container.load_tensor(tmp_path / "a.dgt").tobytes() == arr.tobytes()
    container.save_labels(tmp_path / "l.u16", [0, 3, 65535])
    assert (tmp_path / "l.u16").read_bytes() == np.array([0, 3, 65535], "<u2").tobytes()
    np.testing.assert_array_equal(container.load_labels(tmp_path / "l.u16"), [0, 3, 65535])


def test_manifest_is_canonical(tmp_path):
    container.write_manifest(tmp_path / "m.json", {"b": 1, "a": [1, 2]})
    text = (tmp_path / "m.json").read_text()
    assert text.index('"a"') < text.index('"b"') and text.endswith("\n")
    assert container.read_manifest(tmp_path / "m.json") == {"a": [1, 2], "b": 1}
