import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from attackgen import fileio
from attackgen.errors import CorruptFile, TruncatedFile

floats = st.floats(-1e6, 1e6, allow_nan=False)


@settings(max_examples=30, deadline=None)
@given(st.lists(hnp.arrays(np.float64, hnp.array_shapes(min_dims=0, max_dims=4, max_side=4), elements=floats),
                max_size=4), st.integers(0, 65535))
def test_agt_round_trip(tmp_path_factory, tensors, arch):
    p = tmp_path_factory.mktemp("agt") / "t.agt"
    fileio.write_agt(p, arch, tensors)
    got_arch, got = fileio.read_agt(p)
    assert got_arch == arch and len(got) == len(tensors)
    for a, b in zip(tensors, got):
        assert a.shape == b.shape and np.array_equal(a, b)


def test_agt_layout_is_little_endian(tmp_path):
    p = tmp_path / "x.agt"
    fileio.write_agt(p, 3, [np.array([1.5, -2.0])])
    buf = p.read_bytes()
    assert buf[:4] == b"AGTW"
    assert struct.unpack("<HHI", buf[4:12]) == (1, 3, 1)
    assert buf[12] == 1 and struct.unpack("<I", buf[13:17]) == (2,)
    assert struct.unpack("<2d", buf[17:]) == (1.5, -2.0)


def test_agt_errors(tmp_path):
    p = tmp_path / "x.agt"
    fileio.write_agt(p, 0, [np.ones((2, 3))])
    good = p.read_bytes()
    p.write_bytes(good[:-3])
    with pytest.raises(TruncatedFile):
        fileio.read_agt(p)
    p.write_bytes(b"XXXX" + good[4:])
    with pytest.raises(CorruptFile):
        fileio.read_agt(p)
    p.write_bytes(good + b"\x00")
    with pytest.raises(CorruptFile):
        fileio.read_agt(p)
    p.write_bytes(good[:4] + struct.pack("<H", 9) + good[6:])
    with pytest.raises(CorruptFile):
        fileio.read_agt(p)


def test_ppm_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(5, 7, 3)) / 255.0
    fileio.write_ppm(tmp_path / "a.ppm", img)
    assert np.array_equal(fileio.read_pnm(tmp_path / "a.ppm"), np.round(img * 255).astype(np.uint8))
    gray = rng.integers(0, 256, size=(4, 6))
    fileio.write_pgm(tmp_path / "g.pgm", gray)
    assert np.array_equal(fileio.read_pnm(tmp_path / "g.pgm"), gray)
    assert (tmp_path / "g.pgm").read_bytes().startswith(b"P5\n6 4\n255\n")


def test_flow_pgms_center_on_128(tmp_path):
    flow = np.zeros((3, 3, 2))
    flow[1, 1] = [2.0, -1.0]
    rows, cols = fileio.write_flow_pgms(str(tmp_path / "f"), flow)
    r, c = fileio.read_pnm(rows), fileio.read_pnm(cols)
    assert r[0, 0] == 128 and r[1, 1] == 255 and c[1, 1] == int(128 - 127 * 0.5 + 0.5)


def test_triptych_layout():
    t = fileio.triptych(np.zeros((4, 4, 1)), np.zeros((4, 4), int), np.ones((4, 4), int))
    assert t.shape == (4, 14, 3)
    assert np.allclose(t[:, 10:], fileio.PALETTE[1] / 255.0)


def test_perturbation_bundle_round_trip(tmp_path):
    d = np.random.default_rng(1).normal(size=(4, 4, 2))
    fileio.write_perturbation(tmp_path / "p.agt", d, "flow", None)
    got, rep, box = fileio.read_perturbation(tmp_path / "p.agt")
    assert np.array_equal(got, d) and rep == "flow" and box is None
    fileio.write_agt(tmp_path / "w.agt", 0, [d])
    with pytest.raises(CorruptFile):
        fileio.read_perturbation(tmp_path / "w.agt")
