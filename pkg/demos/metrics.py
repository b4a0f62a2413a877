"""Path-length similarity and pixel scores on a hand-made example.

A straight road is compared with a prediction that detours around an
obstacle.  With control points only at the road ends, APLS sees the 20%
longer route.  With dense control points, the ones along the straight road
lie far from the detour, cannot be matched, and pull the score down.

Run: python demos/metrics.py
"""
import numpy as np

from patchroad import MetricParams, RoadGraph, apls, pixel_f1

gt = RoadGraph(128, np.array([[10.0, 60.0], [110.0, 60.0]]), [(0, 1)])
bump = np.array([[10.0, 60.0], [60.0, 60.0 + np.sqrt(60.0 ** 2 - 50.0 ** 2)], [110.0, 60.0]])
pred = RoadGraph(128, gt.nodes, [(0, 1)], {0: bump})

print("ground truth length 100 px, detour length 120 px")
for interval in (1000.0, 25.0):
    params = MetricParams(inject_interval_px=interval)
    print(f"APLS with control points every {interval:g} px: {apls(gt, pred, params):.3f}")
print("pixel F1:", round(pixel_f1(gt, pred)["f1"], 3))
print("APLS of a graph with itself:", apls(gt, gt))
