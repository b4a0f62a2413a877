import numpy as np
import pytest

from patchroad import MetricParams, RoadGraph, apls, eval_all, iou, pixel_f1
from patchroad.metrics import apls_directional

from _oracles import oracle_apls, random_case


def _graph(nodes, edges, size=128, polylines=None):
    return RoadGraph(size, np.array(nodes, dtype=float).reshape(-1, 2), edges, polylines or {})


def test_apls_matches_bruteforce_oracle():
    rng = np.random.default_rng(2024)
    params = MetricParams(buffer_px=4.0, inject_interval_px=25.0, max_pairs=10 ** 6)
    for _ in range(220):
        gt, pred = random_case(rng)
        got = apls(gt, pred, params)
        want = oracle_apls(gt, pred, 4.0, 25.0)
        assert got == pytest.approx(want, abs=1e-9)


def test_apls_identity_and_empty():
    rng = np.random.default_rng(5)
    empty = _graph(np.empty((0, 2)), [])
    for _ in range(20):
        gt, _ = random_case(rng)
        assert apls(gt, gt) == 1.0
        assert apls(gt, empty) == 0.0
        assert apls(empty, gt) == 0.0
    assert apls(empty, empty) == 1.0


def test_apls_detour_example():
    gt = _graph([[10, 60], [110, 60]], [(0, 1)])
    h = np.sqrt(60.0 ** 2 - 50.0 ** 2)
    detour = np.array([[10, 60], [60, 60 + h], [110, 60]])
    pred = _graph([[10, 60], [110, 60]], [(0, 1)], polylines={0: detour})
    params = MetricParams(inject_interval_px=1000)
    assert apls_directional(gt, pred, params) == pytest.approx(0.8, abs=1e-12)
    assert apls(gt, pred, params) == pytest.approx(oracle_apls(gt, pred, 4.0, 1000.0), abs=1e-12)


def test_apls_disconnection_penalised():
    gt = _graph([[10, 60], [60, 60], [110, 60]], [(0, 1), (1, 2)])
    broken = _graph([[10, 60], [60, 60], [110, 60]], [(0, 1)])
    assert apls(gt, broken) < apls(gt, gt)
    assert 0.0 <= apls(gt, broken) <= 1.0


def test_apls_symmetric_and_deterministic():
    rng = np.random.default_rng(9)
    for _ in range(30):
        a, b = random_case(rng)
        assert apls(a, b) == apls(b, a)
        p = MetricParams(max_pairs=5, rng_seed=3)
        assert apls(a, b, p) == apls(a, b, p)
        assert 0.0 <= apls(a, b, p) <= 1.0


def test_apls_image_size_mismatch():
    with pytest.raises(ValueError):
        apls(_graph([[1, 1], [5, 5]], [(0, 1)]), _graph([[1, 1], [5, 5]], [(0, 1)], size=64))


def test_pixel_f1_examples():
    gt = _graph([[10, 40], [110, 40]], [(0, 1)])
    assert pixel_f1(gt, gt)["f1"] == 1.0
    shifted = _graph([[10, 48], [110, 48]], [(0, 1)])
    assert pixel_f1(gt, shifted)["f1"] == 0.0
    two = _graph([[10, 20], [60, 20], [10, 100], [60, 100]], [(0, 1), (2, 3)])
    half = _graph([[10, 20], [60, 20]], [(0, 1)])
    f = pixel_f1(two, half)
    assert f["precision"] == 1.0 and f["recall"] == 0.5
    assert f["f1"] == pytest.approx(2 / 3)


def test_pixel_f1_empty_cases_and_symmetry():
    empty = _graph(np.empty((0, 2)), [])
    g = _graph([[10, 40], [110, 40]], [(0, 1)])
    assert pixel_f1(empty, empty)["f1"] == 1.0
    assert pixel_f1(empty, g)["f1"] == 0.0
    assert pixel_f1(g, empty)["f1"] == 0.0
    h = _graph([[10, 43], [90, 47], [30, 90]], [(0, 1), (1, 2)])
    assert pixel_f1(g, h)["f1"] == pixel_f1(h, g)["f1"]


def test_pixel_f1_chebyshev_buffer():
    gt = _graph([[10, 40], [110, 40]], [(0, 1)])
    for dy, expect in ((4, 1.0), (5, 0.0)):
        pred = _graph([[10, 40 + dy], [110, 40 + dy]], [(0, 1)])
        assert pixel_f1(gt, pred, MetricParams(buffer_px=4))["f1"] == expect


def test_iou_examples():
    a = np.zeros((8, 8))
    a[:, :4] = 1
    full = np.ones((8, 8))
    assert iou(a, full) == 0.5
    assert iou(a, a) == 1.0
    assert iou(a, 1 - a) == 0.0
    assert iou(np.zeros((4, 4)), np.zeros((4, 4))) == 1.0
    with pytest.raises(ValueError):
        iou(np.zeros((4, 4)), np.zeros((4, 5)))


def test_eval_all_report_layout():
    g = _graph([[10, 40], [110, 40]], [(0, 1)])
    m = np.ones((128, 128))
    r = eval_all(g, g, m, m)
    assert list(r) == ["apls", "pf1", "iou"]
    assert list(r["pf1"]) == ["p", "r", "f1"]
    assert r["apls"] == 1.0 and r["pf1"]["f1"] == 1.0 and r["iou"] == 1.0
    assert "iou" not in eval_all(g, g)


def test_metric_params_validation():
    with pytest.raises(ValueError):
        MetricParams(buffer_px=0)
    with pytest.raises(ValueError):
        MetricParams(inject_interval_px=-1)
    with pytest.raises(ValueError):
        MetricParams(max_pairs=0)
