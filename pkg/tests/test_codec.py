import numpy as np
import pytest

from patchroad import (
    DecodeParams,
    KeypointKind,
    PatchGrid,
    PslTensors,
    RoadGraph,
    SynthParams,
    decode_graph,
    encode_psl,
    generate_network,
    patch_of_point,
    rasterize_centerline,
    select_keypoint,
)
from patchroad.codec import S_MAX, gt_link_pairs, patch_pairs
from patchroad.geometry import neighbor_table

GRID = PatchGrid(1024, 16)


def _graph(nodes, edges, size=1024, **kw):
    return RoadGraph(size, np.array(nodes, dtype=float), edges, **kw)


@pytest.fixture(scope="module")
def scenes():
    out = []
    for style in ("jittered_grid", "proximity_graph"):
        for seed in range(3):
            out.append(generate_network(SynthParams(style=style, rng_seed=seed)))
    return out


def test_keypoint_intersection():
    # degree-4 crossing at (40, 40), inside patch 2 + 2*64
    g = _graph([[40, 40], [40, 5], [40, 75], [5, 40], [75, 40]],
               [(0, 1), (0, 2), (0, 3), (0, 4)])
    kp = select_keypoint(patch_of_point((40, 40), GRID), g, GRID)
    assert kp.kind is KeypointKind.INTERSECTION
    assert kp.position == (40.0, 40.0)


def test_keypoint_midpoint_of_crossing_road():
    g = _graph([[3, 37], [60, 37]], [(0, 1)])
    kp = select_keypoint(patch_of_point((20, 37), GRID), g, GRID)
    assert kp.kind is KeypointKind.MIDPOINT
    np.testing.assert_allclose(kp.position, (24.0, 37.0))


def test_keypoint_midpoint_of_bent_fragment_is_arc_centre():
    poly = np.array([[5.0, 20.0], [16.0, 20.0], [24.0, 20.0], [24.0, 31.0], [24.0, 40.0]])
    g = _graph([[5, 20], [24, 40]], [(0, 1)], polylines={0: poly})
    kp = select_keypoint(65, g, GRID)
    assert kp.kind is KeypointKind.MIDPOINT
    # fragment in patch 65 runs (16,20)->(24,20)->(24,32): length 20, centre 10 along
    np.testing.assert_allclose(kp.position, (24.0, 22.0))


def test_keypoint_none_on_empty_patch():
    g = _graph([[3, 37], [60, 37]], [(0, 1)])
    assert select_keypoint(4000, g, GRID) is None


def test_keypoint_endpoint_beats_midpoint():
    # three patches in row 0; a through road plus a dead end inside patch 1
    g = _graph([[2, 8], [45, 8], [20, 12], [20, 40]], [(0, 1), (2, 3)])
    kp = select_keypoint(1, g, GRID)
    assert kp.kind is KeypointKind.ENDPOINT
    assert kp.position == (20.0, 12.0)


def test_keypoint_ties():
    # two degree-3 nodes in one patch: the one nearer the centre wins
    nodes = [[7, 7], [12, 12], [7, 0], [0, 7], [30, 3], [12, 40]]
    g = _graph(nodes, [(0, 1), (0, 2), (0, 3), (1, 4), (1, 5)])
    kp = select_keypoint(0, g, GRID)
    assert kp.kind is KeypointKind.INTERSECTION
    assert kp.position == (7.0, 7.0)
    # degree beats distance
    g = _graph([[8, 8], [2, 2], [8, 40], [40, 8], [2, 40], [40, 2], [20, 30]],
               [(0, 2), (0, 3), (0, 6), (1, 4), (1, 5), (1, 6), (1, 2)])
    kp = select_keypoint(0, g, GRID)
    assert kp.position == (2.0, 2.0)


def test_encode_horizontal_road():
    g = _graph([[0, 8], [1023, 8]], [(0, 1)])
    t = encode_psl(g, GRID)
    assert t.p.shape == (64 ** 2,) and t.s.shape == (64 ** 2, 2) and t.l.shape == (64 ** 2, 8)
    assert np.array_equal(np.flatnonzero(t.p), np.arange(64))
    np.testing.assert_allclose(t.s[1:63], 0.5)
    np.testing.assert_allclose(t.s[0], (0.0, 0.5))
    np.testing.assert_allclose(t.s[63], (15 / 16, 0.5))
    assert np.all(t.l[:63, 4] == 1) and np.all(t.l[1:64, 3] == 1)
    assert t.l.sum() == 2 * 63
    assert select_keypoint(0, g, GRID).kind is KeypointKind.ENDPOINT
    assert select_keypoint(63, g, GRID).kind is KeypointKind.ENDPOINT

    d = decode_graph(t)
    assert d.num_nodes == 64 and len(d.edges) == 63
    assert d.edge_set() == {(k, k + 1) for k in range(63)}


def test_encode_empty_graph():
    t = encode_psl(_graph(np.empty((0, 2)), []), GRID)
    assert not t.p.any() and not t.s.any() and not t.l.any()


def test_encode_rejects_grid_mismatch():
    with pytest.raises(ValueError):
        encode_psl(_graph([[0, 8], [100, 8]], [(0, 1)]), PatchGrid(512, 16))


def test_encode_invariants_on_scenes(scenes):
    table = neighbor_table(GRID.n)
    for g in scenes:
        t = encode_psl(g, GRID)
        assert set(np.unique(t.p)) <= {0.0, 1.0}
        assert set(np.unique(t.l)) <= {0.0, 1.0}
        assert np.all((t.s >= 0) & (t.s < 1))
        assert not t.s[t.p == 0].any()
        for j in range(8):
            nb = table[:, j]
            off = nb < 0
            assert not t.l[off, j].any()
            assert np.array_equal(t.l[~off, j], t.l[nb[~off], 7 - j])
        # links only between road patches
        src, j = np.nonzero(t.l)
        assert np.all(t.p[src] == 1) and np.all(t.p[table[src, j]] == 1)


def test_encoded_p_matches_centerline_pixels(scenes):
    for g in scenes:
        t = encode_psl(g, GRID)
        c = rasterize_centerline(g)
        per_patch = c.reshape(64, 16, 64, 16).any(axis=(1, 3)).ravel()
        assert np.array_equal(per_patch, t.p == 1)


def test_round_trip_exact_on_scenes(scenes):
    for g in scenes:
        t = encode_psl(g, GRID)
        d = decode_graph(t)
        assert d.num_nodes == int(t.p.sum())
        assert patch_pairs(d) == gt_link_pairs(g, GRID)
        for xy, pid in zip(d.nodes, d.patch):
            assert patch_of_point(xy, GRID) == pid


def test_decode_keypoints_stay_in_patch_under_extreme_offsets():
    grid = PatchGrid(64, 16)
    t = PslTensors.zeros(grid)
    t.p[:] = 1.0
    t.s[:] = np.array([[1.0, 1.0], [-0.5, 2.0]] * 8)
    d = decode_graph(t)
    for xy, pid in zip(d.nodes, d.patch):
        assert patch_of_point(xy, grid) == pid
    t.s[:] = S_MAX
    d = decode_graph(t)
    for xy, pid in zip(d.nodes, d.patch):
        assert patch_of_point(xy, grid) == pid


def test_decode_symmetrization_rules():
    grid = PatchGrid(32, 16)
    t = PslTensors.zeros(grid)
    t.p[[0, 1]] = 1.0
    t.l[0, 4] = 0.9
    t.l[1, 3] = 0.2
    assert decode_graph(t, DecodeParams(link_symmetrization="mean")).edges == [(0, 1)]
    assert decode_graph(t, DecodeParams(link_symmetrization="min")).edges == []
    assert decode_graph(t, DecodeParams(link_symmetrization="max")).edges == [(0, 1)]


def test_decode_thresholds_and_empty():
    grid = PatchGrid(32, 16)
    t = PslTensors.zeros(grid)
    t.p[:] = 0.49
    t.l[:] = 1.0
    d = decode_graph(t)
    assert d.num_nodes == 0 and d.edges == []
    with pytest.raises(ValueError):
        DecodeParams(tau_p=1.0)
    with pytest.raises(ValueError):
        DecodeParams(tau_l=0.0)
    with pytest.raises(ValueError):
        DecodeParams(link_symmetrization="median")


def test_decode_is_deterministic_and_order_free(scenes):
    t = encode_psl(scenes[0], GRID)
    a = decode_graph(t)
    b = decode_graph(t)
    assert a.edges == b.edges and np.array_equal(a.nodes, b.nodes)
    assert a.edges == sorted(a.edges)


def test_psl_shape_validation():
    grid = PatchGrid(32, 16)
    with pytest.raises(ValueError):
        PslTensors(np.zeros(4), np.zeros((3, 2)), np.zeros((4, 8)), grid)
    with pytest.raises(ValueError):
        decode_graph(PslTensors(np.zeros(4), np.zeros((4, 2)), np.zeros((4, 7)), grid))
