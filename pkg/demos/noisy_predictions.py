"""Simulate imperfect network output and repair it with graph optimization.

Links are dropped at increasing rates; reconnecting endpoints in adjacent
patches recovers most of the lost path-length similarity.

Run: python demos/noisy_predictions.py
"""
import numpy as np

from patchroad import (NoiseParams, PatchGrid, SynthParams, apls, decode_graph, encode_psl,
                       generate_network, optimize, perturb_psl)

grid = PatchGrid(1024, 16)
scenes = [generate_network(SynthParams(rng_seed=k)) for k in range(5)]
tensors = [encode_psl(g, grid) for g in scenes]

print("p_drop   APLS decode   APLS decode+optimize")
for p_drop in (0.0, 0.05, 0.1, 0.2):
    raw, opt = [], []
    for k, (g, t) in enumerate(zip(scenes, tensors)):
        noisy = perturb_psl(t, NoiseParams(sigma_p=0.5, sigma_s=0.05, p_drop=p_drop,
                                           p_add=0.02, rng_seed=k))
        d = decode_graph(noisy)
        raw.append(apls(g, d))
        opt.append(apls(g, optimize(d, grid)))
    print(f"{p_drop:6.2f}   {np.mean(raw):11.3f}   {np.mean(opt):20.3f}")
