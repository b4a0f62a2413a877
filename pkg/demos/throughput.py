"""Decode and optimize large patch grids in a single pass.

Run: python demos/throughput.py
"""
import time

from patchroad import PatchGrid, SynthParams, decode_graph, encode_psl, generate_network, optimize
from patchroad.synth import tile_psl

base = encode_psl(generate_network(SynthParams(rng_seed=0)), PatchGrid(1024, 16))
for n in (64, 128, 256, 512):
    t = tile_psl(base, n // 64)
    t0 = time.perf_counter()
    d = decode_graph(t)
    t1 = time.perf_counter()
    optimize(d, t.grid)
    t2 = time.perf_counter()
    print(f"{n:4d}^2 patches ({t.grid.image_size}^2 px): decode {t1 - t0:.3f}s, "
          f"optimize {t2 - t1:.3f}s, {d.num_nodes} nodes")
