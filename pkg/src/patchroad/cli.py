"""Command-line interface.

Every subcommand prints one JSON document on stdout (keys in a fixed
order) and writes diagnostics to stderr.  Exit status is 0 on success, 1
for usage errors and 2 for unreadable or inconsistent data.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .codec import DecodeParams, decode_graph, encode_psl, gt_link_pairs, patch_pairs
from .geometry import PatchGrid, RoadGraph, patch_of_point, rasterize_graph
from .graphopt import OptimizeParams, optimize
from .io import (FormatError, read_graph, read_pgm, read_psl, write_graph,
                 write_pgm, write_psl)
from .losses import LossWeights, loss_joint
from .metrics import MetricParams, eval_all
from .skeleton import mask_to_graph
from .synth import STYLES, NoiseParams, SynthParams, generate_network, perturb_psl, tile_psl

__all__ = ["main", "build_parser"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=1) + "\n")


def _grid_args(p, size=True):
    if size:
        p.add_argument("--size", type=int, default=1024, help="image size in pixels")
    p.add_argument("--patch", type=int, default=16, help="patch size in pixels")


def _decode_args(p, width=True):
    p.add_argument("--tau-p", type=float, default=0.5)
    p.add_argument("--tau-l", type=float, default=0.5)
    p.add_argument("--symmetrize", choices=("mean", "min", "max"), default="mean")
    if width:
        p.add_argument("--width", type=float, default=15.0,
                       help="road width stored in graphs")


def _metric_args(p):
    p.add_argument("--buffer", type=float, default=4.0, help="match radius in pixels")
    p.add_argument("--inject", type=float, default=50.0,
                   help="APLS control-point spacing in pixels")


def _noise_args(p):
    p.add_argument("--sigma-p", type=float, default=0.0)
    p.add_argument("--sigma-s", type=float, default=0.0)
    p.add_argument("--p-drop", type=float, default=0.0)
    p.add_argument("--p-add", type=float, default=0.0)


def _weight_args(p):
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="patchroad",
                 description="Encode, decode, refine and score patch-wise road graphs.")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--seed", type=int, required=True)
    _grid_args(p)
    p.add_argument("--style", choices=STYLES, default="jittered_grid")
    p.add_argument("--min-sep", type=float, default=48.0)
    p.add_argument("--width", type=float, default=15.0, help="road width in pixels")
    p.add_argument("--out-graph", type=Path)
    p.add_argument("--out-mask", type=Path)
    p.add_argument("--out-psl", type=Path)

    p = sub.add_parser("encode", help="graph JSON to PSL tensors")
    p.add_argument("--graph", type=Path, required=True)
    _grid_args(p, size=False)
    p.add_argument("--out-psl", type=Path, required=True)

    p = sub.add_parser("decode", help="PSL tensors to graph JSON")
    p.add_argument("--psl", type=Path, nargs="+", required=True)
    _decode_args(p)
    p.add_argument("--out-graph", type=Path, help="output path for a single input")
    p.add_argument("--out-dir", type=Path, help="output directory for several inputs")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("optimize", help="refine a decoded graph")
    p.add_argument("--graph", type=Path, required=True)
    _grid_args(p, size=False)
    p.add_argument("--hop-guard", type=int, default=5)
    p.add_argument("--out-graph", type=Path, required=True)

    p = sub.add_parser("skeletonize", help="road mask PGM to graph JSON")
    p.add_argument("--mask", type=Path, required=True)
    p.add_argument("--tol", type=float, default=2.0, help="simplification tolerance")
    p.add_argument("--width", type=float, default=15.0)
    p.add_argument("--out-graph", type=Path, required=True)

    p = sub.add_parser("loss", help="loss breakdown of a prediction")
    p.add_argument("--gt-psl", type=Path, required=True)
    p.add_argument("--pred-psl", type=Path, required=True)
    p.add_argument("--gt-mask", type=Path)
    p.add_argument("--pred-mask", type=Path)
    _weight_args(p)

    p = sub.add_parser("eval", help="APLS, pixel F1 and IoU")
    p.add_argument("--gt-graph", type=Path, required=True)
    p.add_argument("--pred-graph", type=Path, required=True)
    p.add_argument("--gt-mask", type=Path)
    p.add_argument("--pred-mask", type=Path)
    _metric_args(p)
    p.add_argument("--max-pairs", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0, help="seed for APLS pair sampling")

    p = sub.add_parser("roundtrip", help="synth, encode, perturb, decode, optimize, eval")
    p.add_argument("--seed", type=int, required=True)
    _grid_args(p)
    p.add_argument("--style", choices=STYLES, default="jittered_grid")
    p.add_argument("--width", type=float, default=15.0)
    _decode_args(p, width=False)
    _noise_args(p)
    p.add_argument("--hop-guard", type=int, default=5)
    _metric_args(p)

    p = sub.add_parser("bench", help="decode and optimize throughput")
    p.add_argument("--grid", type=int, default=512, help="patches per side")
    _grid_args(p, size=False)
    p.add_argument("--psl", type=Path, help="tensor file to benchmark (tiled to --grid)")
    p.add_argument("--seed", type=int,
                   help="seed of the generated scene (required without --psl)")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--tau-p", type=float, default=0.5)
    p.add_argument("--tau-l", type=float, default=0.5)
    p.add_argument("--hop-guard", type=int, default=5)
    return ap


def _with_patches(g: RoadGraph, grid: PatchGrid) -> RoadGraph:
    if g.patch is not None:
        return g
    patch = np.array([patch_of_point(xy, grid) for xy in g.nodes], dtype=np.int64)
    return RoadGraph(g.image_size, g.nodes, g.edges, g.polylines, width=g.width,
                     patch=patch)


def _summary(g: RoadGraph) -> dict:
    return {"nodes": g.num_nodes, "edges": len(g.edges)}


def cmd_synth(a):
    params = SynthParams(image_size=a.size, patch_size=a.patch, min_sep=a.min_sep,
                         road_width=a.width, style=a.style, rng_seed=a.seed)
    g = generate_network(params)
    out = {"seed": a.seed, "style": a.style, **_summary(g)}
    if a.out_graph:
        write_graph(g, a.out_graph)
        out["graph"] = str(a.out_graph)
    if a.out_mask:
        write_pgm(rasterize_graph(g), a.out_mask)
        out["mask"] = str(a.out_mask)
    if a.out_psl:
        write_psl(encode_psl(g, PatchGrid(a.size, a.patch)), a.out_psl)
        out["psl"] = str(a.out_psl)
    return out


def cmd_encode(a):
    g = read_graph(a.graph)
    t = encode_psl(g, PatchGrid(g.image_size, a.patch))
    write_psl(t, a.out_psl)
    return {"n": t.grid.n, "patch": t.grid.patch_size,
            "road_patches": int(np.count_nonzero(t.p >= 0.5)), "psl": str(a.out_psl)}


def _decode_one(job):
    src, dst, params, width = job
    g = decode_graph(read_psl(src), params, width=width)
    write_graph(g, dst)
    return {"psl": str(src), "graph": str(dst), **_summary(g)}


def cmd_decode(a):
    params = DecodeParams(a.tau_p, a.tau_l, a.symmetrize)
    if len(a.psl) == 1 and a.out_graph:
        targets = [a.out_graph]
    elif a.out_dir:
        a.out_dir.mkdir(parents=True, exist_ok=True)
        targets = [a.out_dir / (Path(s).stem + ".json") for s in a.psl]
    else:
        raise UsageError("decode: give --out-graph for one input or --out-dir")
    if a.jobs < 1:
        raise UsageError("decode: --jobs must be positive")
    jobs = [(s, d, params, a.width) for s, d in zip(a.psl, targets)]
    if a.jobs == 1 or len(jobs) == 1:
        results = [_decode_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=a.jobs) as pool:
            results = list(pool.map(_decode_one, jobs))
    return results[0] if len(results) == 1 else {"files": results}


def cmd_optimize(a):
    g = read_graph(a.graph)
    grid = PatchGrid(g.image_size, a.patch)
    before = _with_patches(g, grid)
    out = optimize(before, grid, OptimizeParams(a.hop_guard))
    write_graph(out, a.out_graph)
    return {"edges_in": len(before.edges), "edges_out": len(out.edges),
            "added": len(out.edge_set() - before.edge_set()),
            "removed": len(before.edge_set() - out.edge_set()),
            "graph": str(a.out_graph)}


def cmd_skeletonize(a):
    m = read_pgm(a.mask)
    if m.shape[0] != m.shape[1]:
        raise FormatError(f"{a.mask}: mask must be square, got {m.shape}")
    g = mask_to_graph(m, a.tol, width=a.width)
    write_graph(g, a.out_graph)
    return {**_summary(g), "graph": str(a.out_graph)}


def cmd_loss(a):
    gt = read_psl(a.gt_psl)
    pred = read_psl(a.pred_psl)
    if (a.gt_mask is None) != (a.pred_mask is None):
        raise UsageError("loss: give both --gt-mask and --pred-mask or neither")
    m_gt = m_pre = None
    if a.gt_mask is not None:
        m_gt, m_pre = read_pgm(a.gt_mask), read_pgm(a.pred_mask)
    br = loss_joint(gt, pred, m_gt, m_pre, LossWeights(a.alpha, a.beta, a.gamma))
    return br.as_dict()


def cmd_eval(a):
    gt = read_graph(a.gt_graph)
    pred = read_graph(a.pred_graph)
    if (a.gt_mask is None) != (a.pred_mask is None):
        raise UsageError("eval: give both --gt-mask and --pred-mask or neither")
    m_gt = m_pre = None
    if a.gt_mask is not None:
        m_gt, m_pre = read_pgm(a.gt_mask), read_pgm(a.pred_mask)
    params = MetricParams(a.buffer, a.inject, a.max_pairs, a.seed)
    return eval_all(gt, pred, m_gt, m_pre, params)


def cmd_roundtrip(a):
    times = {}

    def timed(name, f, *args):
        t0 = time.perf_counter()
        r = f(*args)
        times[name] = time.perf_counter() - t0
        return r

    grid = PatchGrid(a.size, a.patch)
    sp = SynthParams(image_size=a.size, patch_size=a.patch, road_width=a.width,
                     style=a.style, rng_seed=a.seed)
    g = timed("synth", generate_network, sp)
    t = timed("encode", encode_psl, g, grid)
    noise = NoiseParams(a.sigma_p, a.sigma_s, a.p_drop, a.p_add, a.seed)
    t = timed("perturb", perturb_psl, t, noise)
    d = timed("decode", decode_graph, t, DecodeParams(a.tau_p, a.tau_l, a.symmetrize),
              a.width)
    o = timed("optimize", optimize, d, grid, OptimizeParams(a.hop_guard))
    report = timed("eval", eval_all, g, o, None, None, MetricParams(a.buffer, a.inject))
    return {**report, "exact": patch_pairs(o) == gt_link_pairs(g, grid),
            "gt": _summary(g), "pred": _summary(o),
            "timings_s": {k: round(v, 6) for k, v in times.items()}}


def cmd_bench(a):
    if a.grid < 1:
        raise UsageError("bench: --grid must be positive")
    if a.psl is not None:
        base = read_psl(a.psl)
    elif a.seed is None:
        raise UsageError("bench: --seed is required unless --psl is given")
    else:
        # one scene of at most 64 x 64 patches, tiled up to the requested grid
        size = a.patch * (64 if a.grid % 64 == 0 else a.grid)
        scene = generate_network(SynthParams(image_size=size, patch_size=a.patch,
                                             rng_seed=a.seed))
        base = encode_psl(scene, PatchGrid(size, a.patch))
    if a.grid % base.grid.n:
        raise UsageError(f"bench: --grid must be a multiple of {base.grid.n}")
    t = tile_psl(base, a.grid // base.grid.n)
    params = DecodeParams(a.tau_p, a.tau_l)
    dec, opt = [], []
    for _ in range(max(1, a.repeats)):
        t0 = time.perf_counter()
        d = decode_graph(t, params)
        t1 = time.perf_counter()
        optimize(d, t.grid, OptimizeParams(a.hop_guard))
        t2 = time.perf_counter()
        dec.append(t1 - t0)
        opt.append(t2 - t1)
    total = float(np.median(np.add(dec, opt)))
    return {"grid": a.grid, "patch": t.grid.patch_size, "pixels": t.grid.image_size,
            "repeats": len(dec), "decode_s": float(np.median(dec)),
            "optimize_s": float(np.median(opt)), "total_s": total,
            "patches_per_s": t.grid.num_patches / total if total > 0 else None}


COMMANDS = {"synth": cmd_synth, "encode": cmd_encode, "decode": cmd_decode,
            "optimize": cmd_optimize, "skeletonize": cmd_skeletonize,
            "loss": cmd_loss, "eval": cmd_eval, "roundtrip": cmd_roundtrip,
            "bench": cmd_bench}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        result = COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (FormatError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
