"""Conversion between road graphs and patch-wise P/S/L tensors.

Encoding produces ground-truth labels: which patches hold road, where the
single keypoint of each road patch sits, and which 8-adjacent patch pairs
are joined by a road.  Decoding turns (possibly noisy) tensors back into a
graph in one vectorized sweep over the patch grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import (
    PatchGrid,
    PslTensors,
    RoadGraph,
    clip_polyline_to_patch,
    direction_between,
    neighbor_table,
    patch_of_point,
    polyline_length,
    polyline_patch_pieces,
)

__all__ = [
    "patch_pairs",
    "KeypointKind",
    "KeypointChoice",
    "DecodeParams",
    "S_MAX",
    "select_keypoint",
    "encode_psl",
    "gt_link_pairs",
    "decode_graph",
]

# largest float32 below 1; offsets stay < 1 after a float32 round trip
S_MAX = float(np.nextafter(np.float32(1.0), np.float32(0.0)))


class KeypointKind(str, Enum):
    INTERSECTION = "intersection"
    ENDPOINT = "endpoint"
    MIDPOINT = "midpoint"


@dataclass(frozen=True)
class KeypointChoice:
    kind: KeypointKind
    position: tuple


@dataclass(frozen=True)
class DecodeParams:
    tau_p: float = 0.5
    tau_l: float = 0.5
    link_symmetrization: str = "mean"

    def __post_init__(self):
        for name in ("tau_p", "tau_l"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie strictly inside (0, 1), got {v}")
        if self.link_symmetrization not in _SYMMETRIZE:
            raise ValueError(
                f"unknown link symmetrization {self.link_symmetrization!r}")


_SYMMETRIZE = {
    "mean": lambda a, b: 0.5 * (a + b),
    "min": np.minimum,
    "max": np.maximum,
}


def _arc_midpoint(poly: np.ndarray) -> np.ndarray:
    seg = np.hypot(*np.diff(poly, axis=0).T)
    total = seg.sum()
    if total == 0:
        return poly[0].copy()
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    half = 0.5 * total
    k = min(int(np.searchsorted(cum, half, side="right")) - 1, len(seg) - 1)
    while seg[k] == 0:
        k -= 1
    t = (half - cum[k]) / seg[k]
    return poly[k] + t * (poly[k + 1] - poly[k])


def _choose(center, nodes, node_ids, degrees, fragments):
    """Keypoint for one patch.

    ``node_ids`` are graph nodes inside the patch, ``fragments`` a list of
    ``(edge_id, polyline)`` clipped to it.
    """
    def dist(k):
        return float(np.hypot(*(nodes[k] - center)))

    crossings = [k for k in node_ids if degrees[k] >= 3]
    if crossings:
        k = min(crossings, key=lambda k: (-degrees[k], dist(k), k))
        return KeypointChoice(KeypointKind.INTERSECTION, tuple(nodes[k]))
    ends = [k for k in node_ids if degrees[k] == 1]
    if ends:
        k = min(ends, key=lambda k: (dist(k), k))
        return KeypointChoice(KeypointKind.ENDPOINT, tuple(nodes[k]))
    if fragments:
        best = max(enumerate(fragments),
                   key=lambda it: (polyline_length(it[1][1]), -it[1][0], -it[0]))
        return KeypointChoice(KeypointKind.MIDPOINT,
                              tuple(_arc_midpoint(best[1][1])))
    # road touches the patch only at a node of degree 2
    connected = [k for k in node_ids if degrees[k] > 0]
    if connected:
        k = min(connected, key=lambda k: (dist(k), k))
        return KeypointChoice(KeypointKind.MIDPOINT, tuple(nodes[k]))
    return None


def select_keypoint(i: int, g: RoadGraph, grid: PatchGrid) -> KeypointChoice | None:
    """Keypoint of patch ``i``: intersection, then endpoint, then midpoint.

    Returns None when no road passes through the patch.
    """
    degrees = g.degrees()
    node_ids = [k for k in range(g.num_nodes)
                if patch_of_point(g.nodes[k], grid) == i]
    fragments = []
    for k in range(len(g.edges)):
        for frag in clip_polyline_to_patch(g.edge_polyline(k), i, grid):
            fragments.append((k, frag))
    center = grid.origin(i) + 0.5 * grid.patch_size
    return _choose(center, g.nodes, node_ids, degrees, fragments)


def _patch_sequences(g: RoadGraph, grid: PatchGrid):
    """Per-edge fragments and the ordered patch sequence each edge visits."""
    node_patch = [patch_of_point(xy, grid) for xy in g.nodes]
    fragments = {}
    sequences = []
    for k, (a, b) in enumerate(g.edges):
        starts, ends, ids = polyline_patch_pieces(g.edge_polyline(k), grid)
        seq = [node_patch[a]]
        run_start = 0
        for m in range(len(ids) + 1):
            if m == len(ids) or (m > run_start and ids[m] != ids[run_start]):
                if m > run_start:
                    pid = int(ids[run_start])
                    poly = np.vstack([starts[run_start:m], ends[m - 1:m]])
                    fragments.setdefault(pid, []).append((k, poly))
                    if seq[-1] != pid:
                        seq.append(pid)
                run_start = m
        if seq[-1] != node_patch[b]:
            seq.append(node_patch[b])
        sequences.append(seq)
    return node_patch, fragments, sequences


def gt_link_pairs(g: RoadGraph, grid: PatchGrid) -> set:
    """Unordered patch pairs a ground-truth polyline crosses between directly."""
    _, _, sequences = _patch_sequences(g, grid)
    pairs = set()
    for seq in sequences:
        for a, b in zip(seq[:-1], seq[1:]):
            pairs.add((min(a, b), max(a, b)))
    return pairs


def patch_pairs(g: RoadGraph) -> set:
    """Edges of a patch-annotated graph as unordered patch pairs."""
    if g.patch is None:
        raise ValueError("graph has no per-node patch indices")
    return {(min(int(g.patch[a]), int(g.patch[b])), max(int(g.patch[a]), int(g.patch[b])))
            for a, b in g.edges}


def encode_psl(g: RoadGraph, grid: PatchGrid) -> PslTensors:
    """Ground-truth P/S/L tensors for a road graph."""
    if g.image_size != grid.image_size:
        raise ValueError("graph and grid image sizes differ")
    node_patch, fragments, sequences = _patch_sequences(g, grid)
    degrees = g.degrees()
    by_patch = {}
    for k, pid in enumerate(node_patch):
        if degrees[k] > 0:
            by_patch.setdefault(pid, []).append(k)

    t = PslTensors.zeros(grid)
    p, s, l = t.p, t.s, t.l
    size = grid.patch_size
    for pid in sorted(set(fragments) | set(by_patch)):
        origin = grid.origin(pid)
        kp = _choose(origin + 0.5 * size, g.nodes, by_patch.get(pid, []),
                     degrees, fragments.get(pid, []))
        if kp is None:
            continue
        p[pid] = 1.0
        s[pid] = np.clip((np.asarray(kp.position) - origin) / size, 0.0, S_MAX)

    n = grid.n
    for seq in sequences:
        for a, b in zip(seq[:-1], seq[1:]):
            j = direction_between(a, b, n)
            if j is None:
                raise AssertionError(f"non-adjacent patches {a}, {b} in a crossing")
            l[a, j] = 1.0
            l[b, 7 - j] = 1.0
    return t


def decode_graph(t: PslTensors, params: DecodeParams = DecodeParams(),
                 width: float = 15.0) -> RoadGraph:
    """Road graph from P/S/L tensors in a single pass over the patch grid.

    Every patch with ``p >= tau_p`` yields one node at its keypoint, and an
    edge joins two such 8-adjacent patches when the symmetrized pair of
    directed link scores reaches ``tau_l``.  Offsets outside ``[0, 1)`` are
    clamped so keypoints stay inside their patch.
    """
    grid = t.grid
    n = grid.n
    road = t.p >= params.tau_p
    ids = np.flatnonzero(road)
    index = np.full(grid.num_patches, -1, dtype=np.int64)
    index[ids] = np.arange(len(ids))

    rows, cols = np.divmod(ids, n)
    s = np.clip(t.s[ids], 0.0, S_MAX)
    xy = np.stack([cols, rows], axis=1) * grid.patch_size + s * grid.patch_size

    table = neighbor_table(n)
    sym = _SYMMETRIZE[params.link_symmetrization]
    a_all, b_all = [], []
    for j in (4, 5, 6, 7):
        nb = table[ids, j]
        ok = nb >= 0
        src, nb = ids[ok], nb[ok]
        ok = road[nb]
        src, nb = src[ok], nb[ok]
        score = sym(t.l[src, j], t.l[nb, 7 - j])
        keep = score >= params.tau_l
        a_all.append(index[src[keep]])
        b_all.append(index[nb[keep]])
    a = np.concatenate(a_all)
    b = np.concatenate(b_all)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    order = np.lexsort((hi, lo))
    edges = list(zip(lo[order].tolist(), hi[order].tolist()))
    return RoadGraph(grid.image_size, xy, edges, width=width, patch=ids)
