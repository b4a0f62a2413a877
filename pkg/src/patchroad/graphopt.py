"""Refinement of decoded patch graphs.

Decoded graphs carry one node per road patch, so the passes below work on
a boolean ``(n*n, 8)`` link grid.  Edges whose patches are not 8-adjacent
are carried along untouched and only count toward degrees and hop
distances.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .geometry import NEIGHBOR_OFFSETS, PatchGrid, RoadGraph, neighbor_table

__all__ = [
    "OptimizeParams",
    "connect_endpoints",
    "remove_triangles",
    "remove_quadrilaterals",
    "optimize",
    "patch_triangles",
    "patch_quadrilaterals",
]

DIAGONAL = frozenset((0, 2, 5, 7))
_DIR_CODE = np.full(9, -1, dtype=np.int64)
for _j, (_dr, _dc) in enumerate(NEIGHBOR_OFFSETS):
    _DIR_CODE[(_dr + 1) * 3 + (_dc + 1)] = _j


@dataclass(frozen=True)
class OptimizeParams:
    hop_guard: int = 5


class _Links:
    """Mutable link-grid view of a patch-annotated graph."""

    def __init__(self, g: RoadGraph, grid: PatchGrid):
        if g.patch is None:
            raise ValueError("graph optimization needs per-node patch indices")
        if g.image_size != grid.image_size:
            raise ValueError("graph and grid image sizes differ")
        n = grid.n
        m = grid.num_patches
        patch = g.patch
        if len(patch) and (patch.min() < 0 or patch.max() >= m):
            raise ValueError("patch index out of range")
        if len(np.unique(patch)) != len(patch):
            raise ValueError("graph optimization needs at most one node per patch")
        self.g = g
        self.grid = grid
        self.table = neighbor_table(n)
        self.node_at = np.full(m, -1, dtype=np.int64)
        self.node_at[patch] = np.arange(len(patch))
        self.links = np.zeros((m, 8), dtype=bool)
        self.extras = {}
        if g.edges:
            e = np.asarray(g.edges, dtype=np.int64)
            pa, pb = patch[e[:, 0]], patch[e[:, 1]]
            ra, ca = np.divmod(pa, n)
            rb, cb = np.divmod(pb, n)
            dr, dc = rb - ra, cb - ca
            near = (np.abs(dr) <= 1) & (np.abs(dc) <= 1) & ((dr != 0) | (dc != 0))
            j = np.where(near, _DIR_CODE[np.clip((dr + 1) * 3 + (dc + 1), 0, 8)], -1)
            self.links[pa[near], j[near]] = True
            self.links[pb[near], 7 - j[near]] = True
            for a, b in zip(pa[~near].tolist(), pb[~near].tolist()):
                self.extras.setdefault(a, set()).add(b)
                self.extras.setdefault(b, set()).add(a)

    def degree(self, p: int) -> int:
        return int(self.links[p].sum()) + len(self.extras.get(p, ()))

    def neighbors(self, p: int):
        out = self.table[p][self.links[p]].tolist()
        out.extend(self.extras.get(p, ()))
        return out

    def set_link(self, a: int, j: int, value: bool) -> None:
        b = self.table[a, j]
        self.links[a, j] = value
        self.links[b, 7 - j] = value

    def has(self, a: int, b: int) -> bool:
        j = _direction(a, b, self.grid.n)
        if j is None:
            return b in self.extras.get(a, ())
        return bool(self.links[a, j])

    def length(self, a: int, b: int) -> float:
        pa = self.g.nodes[self.node_at[a]]
        pb = self.g.nodes[self.node_at[b]]
        return float(np.hypot(*(pa - pb)))

    def within_hops(self, src: int, dst: int, limit: int) -> bool:
        seen = {src}
        frontier = deque([(src, 0)])
        while frontier:
            p, d = frontier.popleft()
            if p == dst:
                return True
            if d == limit:
                continue
            for q in self.neighbors(p):
                if q not in seen:
                    seen.add(q)
                    frontier.append((q, d + 1))
        return False

    def to_graph(self) -> RoadGraph:
        g = self.g
        a_all, b_all = [], []
        present = self.node_at >= 0
        for j in (4, 5, 6, 7):
            src = np.flatnonzero(self.links[:, j] & present)
            a_all.append(self.node_at[src])
            b_all.append(self.node_at[self.table[src, j]])
        for a, bs in self.extras.items():
            for b in bs:
                if a < b:
                    a_all.append(np.array([self.node_at[a]]))
                    b_all.append(np.array([self.node_at[b]]))
        a = np.concatenate(a_all) if a_all else np.empty(0, dtype=np.int64)
        b = np.concatenate(b_all) if b_all else np.empty(0, dtype=np.int64)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        order = np.lexsort((hi, lo))
        edges = list(zip(lo[order].tolist(), hi[order].tolist()))
        polys = {}
        if g.polylines:
            old = {}
            for k, (u, v) in enumerate(g.edges):
                if k in g.polylines:
                    old[(min(u, v), max(u, v))] = (u, g.polylines[k])
            for k, (u, v) in enumerate(edges):
                if (u, v) in old:
                    first, poly = old[(u, v)]
                    polys[k] = poly if first == u else poly[::-1]
        return RoadGraph(g.image_size, g.nodes.copy(), edges, polys,
                         width=g.width, patch=g.patch.copy())


def _direction(a: int, b: int, n: int):
    ra, ca = divmod(a, n)
    rb, cb = divmod(b, n)
    dr, dc = rb - ra, cb - ca
    if abs(dr) > 1 or abs(dc) > 1 or (dr == 0 and dc == 0):
        return None
    return int(_DIR_CODE[(dr + 1) * 3 + (dc + 1)])


def connect_endpoints(g: RoadGraph, grid: PatchGrid, hop_guard: int = 5) -> RoadGraph:
    """Join 8-adjacent nodes of degree <= 1 that are not already close.

    A pair is joined when it is not linked and no path of at most
    ``hop_guard`` hops connects it; candidates are visited in ascending
    patch-pair order and degrees update as edges are added.
    """
    lk = _Links(g, grid)
    _connect(lk, hop_guard)
    return lk.to_graph()


def _connect(lk: _Links, hop_guard: int) -> None:
    present = lk.node_at >= 0
    while True:
        deg = lk.links.sum(axis=1)
        for p, nbrs in lk.extras.items():
            deg[p] += len(nbrs)
        low = present & (deg <= 1)
        cands = []
        for j in (4, 5, 6, 7):
            nb = lk.table[:, j]
            ok = low & (nb >= 0)
            src = np.flatnonzero(ok)
            src = src[low[nb[src]] & ~lk.links[src, j]]
            cands.extend((int(a), int(lk.table[a, j]), j) for a in src)
        cands.sort(key=lambda c: (min(c[0], c[1]), max(c[0], c[1])))
        changed = False
        for a, b, j in cands:
            if lk.links[a, j] or lk.degree(a) > 1 or lk.degree(b) > 1:
                continue
            if lk.within_hops(a, b, hop_guard):
                continue
            lk.set_link(a, j, True)
            changed = True
        if not changed:
            break


def _diagonals_in_triangles(links: np.ndarray, table: np.ndarray) -> list:
    """(patch, direction) of every diagonal link lying on a patch triangle."""
    out = []
    # j=7 joins (r,c)-(r+1,c+1) with corners right (4) and down (6)
    # j=5 joins (r,c)-(r+1,c-1) with corners left (3) and down (6)
    for j, side in ((7, 4), (5, 3)):
        src = np.flatnonzero(links[:, j])
        if not len(src):
            continue
        right = table[src, side]
        down = table[src, 6]
        via_side = links[src, side] & links[right, 6]
        via_down = links[src, 6] & links[down, side]
        out.extend((int(a), j) for a in src[via_side | via_down])
    return out


def remove_triangles(g: RoadGraph, grid: PatchGrid) -> RoadGraph:
    """Drop the diagonal link of every triangle among 8-adjacent patches.

    Each such triangle fills three cells of a 2x2 block and has exactly one
    diagonal link.  Removing a diagonal never creates a triangle, so the
    result equals the sequential fixpoint in any scan order.
    """
    lk = _Links(g, grid)
    _drop_triangles(lk)
    return lk.to_graph()


def _drop_triangles(lk: _Links) -> None:
    for a, j in _diagonals_in_triangles(lk.links, lk.table):
        lk.set_link(a, j, False)


def _quad_templates():
    """4-cycles of the king-move graph, as offset tuples anchored at (0, 0)."""
    cells = [(r, c) for r in range(3) for c in range(3)]
    seen = set()
    out = []
    for cyc in permutations(cells, 4):
        if any(max(abs(a[0] - b[0]), abs(a[1] - b[1])) != 1
               for a, b in zip(cyc, cyc[1:] + cyc[:1])):
            continue
        r0 = min(c[0] for c in cyc)
        c0 = min(c[1] for c in cyc)
        cyc = tuple((r - r0, c - c0) for r, c in cyc)
        key = frozenset(frozenset(e) for e in zip(cyc, cyc[1:] + cyc[:1]))
        if key in seen:
            continue
        seen.add(key)
        out.append(cyc)
    return out


_QUADS = _quad_templates()


def _quad_candidates(links: np.ndarray, n: int) -> list:
    grid_links = np.zeros((n + 2, n + 2, 8), dtype=bool)
    grid_links[:n, :n] = links.reshape(n, n, 8)
    found = []
    for cyc in _QUADS:
        hit = np.ones((n, n), dtype=bool)
        for (r1, c1), (r2, c2) in zip(cyc, cyc[1:] + cyc[:1]):
            j = int(_DIR_CODE[(r2 - r1 + 1) * 3 + (c2 - c1 + 1)])
            hit &= grid_links[r1:r1 + n, c1:c1 + n, j]
            if not hit.any():
                break
        for r, c in zip(*np.nonzero(hit)):
            found.append(tuple(int((r + dr) * n + c + dc) for dr, dc in cyc))
    return found


def _cycle_edges(cyc):
    return list(zip(cyc, cyc[1:] + cyc[:1]))


def remove_quadrilaterals(g: RoadGraph, grid: PatchGrid) -> RoadGraph:
    """Break chordless 4-cycles of 8-adjacent patches at their longest link.

    Cycles are handled in ascending order of their sorted patch ids.  Ties
    on length prefer a diagonal link, then the smallest patch pair.
    """
    lk = _Links(g, grid)
    _drop_quads(lk)
    return lk.to_graph()


def _drop_quads(lk: _Links) -> None:
    n = lk.grid.n
    cands = sorted(_quad_candidates(lk.links, n), key=lambda c: tuple(sorted(c)))
    limit = 10 * lk.grid.num_patches + 10
    for _ in range(limit):
        for cyc in cands:
            edges = _cycle_edges(cyc)
            if not all(lk.has(a, b) for a, b in edges):
                continue
            if lk.has(cyc[0], cyc[2]) or lk.has(cyc[1], cyc[3]):
                continue

            def rank(e):
                a, b = e
                diag = _direction(a, b, n) in DIAGONAL
                return (-lk.length(a, b), not diag, min(a, b), max(a, b))

            a, b = min(edges, key=rank)
            lk.set_link(a, _direction(a, b, n), False)
            break
        else:
            return
    raise RuntimeError("quadrilateral removal did not converge")


def optimize(g: RoadGraph, grid: PatchGrid,
             params: OptimizeParams = OptimizeParams()) -> RoadGraph:
    """Connect endpoints, then remove triangles and quadrilaterals.

    The three passes repeat until the edge set stops changing, which makes
    the result idempotent.  Node positions are never altered.
    """
    lk = _Links(g, grid)
    for _ in range(10 * grid.num_patches + 10):
        before = lk.links.copy()
        _connect(lk, params.hop_guard)
        _drop_triangles(lk)
        _drop_quads(lk)
        if np.array_equal(before, lk.links):
            return lk.to_graph()
    raise RuntimeError("graph optimization did not converge")


def patch_triangles(g: RoadGraph, grid: PatchGrid) -> list:
    """Triangles whose three patches are pairwise 8-adjacent."""
    lk = _Links(g, grid)
    out = []
    for a, j in _diagonals_in_triangles(lk.links, lk.table):
        b = int(lk.table[a, j])
        for c in set(lk.neighbors(a)) & set(lk.neighbors(b)):
            if _direction(a, c, grid.n) is not None and _direction(b, c, grid.n) is not None:
                out.append(tuple(sorted((a, b, c))))
    return sorted(set(out))


def patch_quadrilaterals(g: RoadGraph, grid: PatchGrid) -> list:
    """Chordless 4-cycles whose consecutive patches are 8-adjacent."""
    lk = _Links(g, grid)
    out = []
    for cyc in _quad_candidates(lk.links, grid.n):
        if not (lk.has(cyc[0], cyc[2]) or lk.has(cyc[1], cyc[3])):
            out.append(cyc)
    return sorted(out, key=lambda c: tuple(sorted(c)))
