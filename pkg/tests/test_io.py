import json

import numpy as np
import pytest

from patchroad import PatchGrid, PslTensors, RoadGraph, SynthParams, encode_psl, generate_network
from patchroad.io import (
    FormatError,
    psl_bytes,
    read_graph,
    read_pgm,
    read_psl,
    write_graph,
    write_pgm,
    write_psl,
)

# little-endian float32 words
ONE, HALF, QUARTER, THREE_Q, EIGHTH, ZERO = (
    "0000803f", "0000003f", "0000803e", "0000403f", "0000003e", "00000000")


def _tiny():
    t = PslTensors.zeros(PatchGrid(32, 16))
    t.p[:] = [1, 0, 0, 1]
    t.s[0] = (0.5, 0.25)
    t.s[3] = (0.75, 0.125)
    t.l[0, 7] = 1
    t.l[3, 0] = 1
    return t


def test_psl_golden_bytes(tmp_path):
    l = [ZERO] * 32
    l[7] = l[24] = ONE
    golden = bytes.fromhex(
        "50534c31" + "02000000" + "10000000"
        + ONE + ZERO + ZERO + ONE
        + HALF + QUARTER + ZERO * 4 + THREE_Q + EIGHTH
        + "".join(l))
    t = _tiny()
    assert psl_bytes(t) == golden
    write_psl(t, tmp_path / "t.psl")
    assert (tmp_path / "t.psl").read_bytes() == golden


def test_psl_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    grid = PatchGrid(64, 16)
    t = PslTensors(rng.random(16), rng.random((16, 2)) * 0.99, rng.random((16, 8)), grid)
    write_psl(t, tmp_path / "a.psl")
    back = read_psl(tmp_path / "a.psl")
    assert back.grid == grid
    for name in ("p", "s", "l"):
        want = getattr(t, name).astype(np.float32)
        assert np.array_equal(getattr(back, name).astype(np.float32), want)
    write_psl(back, tmp_path / "b.psl")
    assert (tmp_path / "a.psl").read_bytes() == (tmp_path / "b.psl").read_bytes()


def test_psl_scene_round_trip(tmp_path):
    g = generate_network(SynthParams(rng_seed=3, image_size=256))
    t = encode_psl(g, PatchGrid(256, 16))
    write_psl(t, tmp_path / "s.psl")
    back = read_psl(tmp_path / "s.psl")
    assert np.array_equal(back.p, t.p) and np.array_equal(back.l, t.l)
    assert np.array_equal(back.s, t.s.astype(np.float32).astype(float))


@pytest.mark.parametrize("blob", [
    b"",
    b"PSL2" + bytes(8),
    b"PSL1" + (2).to_bytes(4, "little") + (16).to_bytes(4, "little") + bytes(10),
    b"PSL1" + bytes(8),
])
def test_psl_malformed(tmp_path, blob):
    (tmp_path / "x.psl").write_bytes(blob)
    with pytest.raises(FormatError):
        read_psl(tmp_path / "x.psl")


def test_graph_json_round_trip(tmp_path):
    nodes = np.array([[1.0 / 3, 2.5], [100.125, 7e-7], [50.0, 60.0]])
    poly = np.array([[1.0 / 3, 2.5], [20.1, 30.2], [100.125, 7e-7]])
    g = RoadGraph(128, nodes, [(0, 1), (1, 2)], {0: poly}, width=12.5,
                  patch=np.array([0, 6, 27]))
    write_graph(g, tmp_path / "g.json")
    back = read_graph(tmp_path / "g.json")
    np.testing.assert_allclose(back.nodes, g.nodes, atol=1e-9, rtol=0)
    np.testing.assert_allclose(back.polylines[0], poly, atol=1e-9, rtol=0)
    assert back.edges == g.edges and 1 not in back.polylines
    assert back.width == 12.5 and back.image_size == 128
    assert back.patch.tolist() == [0, 6, 27]
    d = json.loads((tmp_path / "g.json").read_text())
    assert list(d) == ["image_size", "width", "nodes", "edges"]
    assert list(d["nodes"][0]) == ["id", "x", "y", "patch"]


def test_graph_json_without_patch(tmp_path):
    g = RoadGraph(64, np.array([[1.0, 2.0], [3.0, 4.0]]), [(0, 1)])
    write_graph(g, tmp_path / "g.json")
    back = read_graph(tmp_path / "g.json")
    assert back.patch is None
    assert "patch" not in json.loads((tmp_path / "g.json").read_text())["nodes"][0]


@pytest.mark.parametrize("text", [
    "not json",
    '{"nodes": [], "edges": []}',
    '{"image_size": 64, "nodes": [{"id": 1, "x": 0, "y": 0}], "edges": []}',
    '{"image_size": 64, "nodes": [{"id": 0, "x": 0, "y": 0}], "edges": [{"a": 0, "b": 5}]}',
    '{"image_size": 64, "nodes": [{"id": 0, "x": 99, "y": 0}], "edges": []}',
])
def test_graph_json_malformed(tmp_path, text):
    (tmp_path / "g.json").write_text(text)
    with pytest.raises(FormatError):
        read_graph(tmp_path / "g.json")


def test_pgm_round_trip_and_header(tmp_path):
    m = np.zeros((5, 7))
    m[1:3, 2:6] = 1
    write_pgm(m, tmp_path / "m.pgm")
    raw = (tmp_path / "m.pgm").read_bytes()
    assert raw.startswith(b"P5\n7 5\n255\n") and len(raw) == 11 + 35
    assert set(raw[11:]) == {0, 255}
    assert np.array_equal(read_pgm(tmp_path / "m.pgm"), m)


def test_pgm_comments_accepted(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
    assert read_pgm(tmp_path / "c.pgm").tolist() == [[0.0, 1.0]]


@pytest.mark.parametrize("blob", [
    b"P2\n2 1\n255\n0 255",
    b"P5\n2 2\n255\n\x00",
    b"P5\n2 1\n65535\n\x00\x00\x00\x00",
    b"P5\nx 1\n255\n\x00",
    b"P5\n2",
])
def test_pgm_malformed(tmp_path, blob):
    (tmp_path / "x.pgm").write_bytes(blob)
    with pytest.raises(FormatError):
        read_pgm(tmp_path / "x.pgm")
