"""Segmentation baseline: thin a rasterized road mask and vectorize it.

Compares the graph recovered from a perfect mask with the patch-tensor
round trip on the same scenes.

Run: python demos/skeleton_baseline.py
"""
from patchroad import (PatchGrid, SynthParams, apls, decode_graph, encode_psl, generate_network,
                       mask_to_graph, optimize, rasterize_graph)

grid = PatchGrid(1024, 16)
print("seed  style             baseline APLS   round-trip APLS   baseline nodes")
for seed, style in ((0, "jittered_grid"), (1, "proximity_graph"), (2, "jittered_grid")):
    g = generate_network(SynthParams(style=style, rng_seed=seed))
    sk = mask_to_graph(rasterize_graph(g))
    rt = optimize(decode_graph(encode_psl(g, grid)), grid)
    print(f"{seed:4d}  {style:16s}  {apls(g, sk):13.3f}   {apls(g, rt):15.3f}   {sk.num_nodes:14d}")
