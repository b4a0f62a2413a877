"""Segmentation baseline: thin a road mask and vectorize the skeleton."""
from __future__ import annotations

import numpy as np
from scipy import ndimage
from skimage.morphology import thin

from .geometry import RoadGraph

__all__ = ["thin_mask", "vectorize_skeleton", "mask_to_graph", "simplify_polyline",
           "is_thin"]

_RING = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
_KERNEL = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]])


# ring around a pixel, counter-clockwise from east, for the connectivity number
_CYCLE = ((0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1))


def _connectivity_number(b, r, c) -> int:
    """8-connectivity (Yokoi) number of pixel ``(r, c)``; 1 means simple."""
    h, w = b.shape
    x = [0 if 0 <= r + dr < h and 0 <= c + dc < w and b[r + dr, c + dc] else 1
         for dr, dc in _CYCLE]
    return sum(x[k] - x[k] * x[k + 1] * x[(k + 2) % 8] for k in (0, 2, 4, 6))


def _break_blocks(b) -> np.ndarray:
    """Delete simple pixels from fully set 2x2 blocks left by thinning.

    A block survives only when none of its pixels can be removed without
    splitting a component or opening a hole.
    """
    b = b.copy()
    changed = True
    while changed:
        changed = False
        blocks = b[:-1, :-1] & b[1:, :-1] & b[:-1, 1:] & b[1:, 1:]
        for r, c in np.argwhere(blocks):
            cells = ((r, c), (r, c + 1), (r + 1, c), (r + 1, c + 1))
            if not all(b[q] for q in cells):
                continue
            for q in cells:
                if _connectivity_number(b, *q) == 1:
                    b[q] = False
                    changed = True
                    break
    return b


def thin_mask(m) -> np.ndarray:
    """One-pixel-wide, 8-connected skeleton of a binary mask.

    Two-subcycle thinning followed by removal of simple pixels from any
    remaining 2x2 blocks.  Component count and holes are preserved.
    """
    return _break_blocks(thin(np.asarray(m) >= 0.5)).astype(np.uint8)


def is_thin(sk) -> bool:
    """True when no 2x2 block of the mask is fully set."""
    b = np.asarray(sk) > 0
    return not np.any(b[:-1, :-1] & b[1:, :-1] & b[:-1, 1:] & b[1:, 1:])


def simplify_polyline(poly, tol: float) -> np.ndarray:
    """Ramer-Douglas-Peucker simplification keeping both ends."""
    poly = np.asarray(poly, dtype=float)
    if len(poly) <= 2 or tol <= 0:
        return poly.copy()
    keep = np.zeros(len(poly), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(poly) - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        a, b = poly[i], poly[j]
        seg = poly[i + 1:j]
        d = b - a
        norm = np.hypot(*d)
        if norm == 0:
            dist = np.hypot(*(seg - a).T)
        else:
            dist = np.abs(d[0] * (seg[:, 1] - a[1]) - d[1] * (seg[:, 0] - a[0])) / norm
        k = int(np.argmax(dist))
        if dist[k] > tol:
            keep[i + 1 + k] = True
            stack.append((i, i + 1 + k))
            stack.append((i + 1 + k, j))
    return poly[keep]


class _Builder:
    def __init__(self):
        self.nodes = []
        self.edges = []
        self.polys = []
        self.pairs = set()

    def add_node(self, xy):
        self.nodes.append(tuple(float(v) for v in xy))
        return len(self.nodes) - 1

    def add_edge(self, a, b, poly):
        """Add an edge, splitting parallel edges and loops at their middle."""
        key = (min(a, b), max(a, b))
        if a == b or key in self.pairs:
            if len(poly) < 4:
                return
            mid = len(poly) // 2
            m = self.add_node(poly[mid])
            self.add_edge(a, m, poly[:mid + 1])
            self.add_edge(m, b, poly[mid:])
            return
        self.pairs.add(key)
        self.edges.append((a, b))
        self.polys.append(np.asarray(poly, dtype=float))


def vectorize_skeleton(sk, simplify_tol_px: float = 2.0,
                       image_size: int | None = None, width: float = 15.0) -> RoadGraph:
    """Road graph from a one-pixel-wide skeleton.

    Pixels with three or more skeleton neighbours are junctions (adjacent
    junction pixels merge into one node at their centroid), pixels with one
    neighbour are endpoints and the pixel chains between them become edges.
    Pixel ``(r, c)`` maps to the point ``(c, r)``.  Isolated pixels are
    dropped.
    """
    b = np.asarray(sk) > 0
    if not is_thin(b):
        raise ValueError("skeleton is not one pixel wide (found a full 2x2 block)")
    return _vectorize(b, simplify_tol_px, image_size, width)


def _vectorize(b, simplify_tol_px, image_size, width) -> RoadGraph:
    # pixels of a residual 2x2 block all have >= 3 neighbours and merge into
    # a single junction node, so thinness is not required here
    h, w = b.shape
    size = max(h, w) if image_size is None else image_size
    count = ndimage.convolve(b.astype(np.int64), _KERNEL, mode="constant") * b

    node_of = np.full(b.shape, -1, dtype=np.int64)
    out = _Builder()
    junction, nlab = ndimage.label(count >= 3, structure=np.ones((3, 3)))
    if nlab:
        centers = ndimage.center_of_mass(np.ones_like(b), junction, range(1, nlab + 1))
        for lab, (r, c) in enumerate(centers, start=1):
            node_of[junction == lab] = out.add_node((c, r))
    for r, c in zip(*np.nonzero(count == 1)):
        node_of[r, c] = out.add_node((c, r))

    visited = np.zeros(b.shape, dtype=bool)

    def fg_neighbors(r, c):
        for dr, dc in _RING:
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and b[rr, cc]:
                yield rr, cc

    def trace(start_node, start_xy, r, c, prev):
        """Walk a chain from pixel (r, c) until reaching a node pixel."""
        path = [start_xy]
        while True:
            if node_of[r, c] >= 0:
                path.append(out.nodes[node_of[r, c]])
                return node_of[r, c], path
            visited[r, c] = True
            path.append((c, r))
            nxt = None
            for q in fg_neighbors(r, c):
                if q == prev:
                    continue
                if node_of[q] >= 0 and node_of[q] != start_node:
                    nxt = q
                    break
                if node_of[q] < 0 and not visited[q]:
                    nxt = nxt or q
                elif node_of[q] == start_node and len(path) > 2 and nxt is None:
                    nxt = q
            if nxt is None:
                return None, path
            prev, (r, c) = (r, c), nxt

    node_pixels = sorted(zip(*np.nonzero(node_of >= 0)), key=lambda p: (node_of[p], p))
    for r, c in node_pixels:
        a = node_of[r, c]
        for q in fg_neighbors(r, c):
            if node_of[q] == a or visited[q]:
                continue
            if node_of[q] >= 0:
                if node_of[q] > a:
                    out.add_edge(a, node_of[q], [out.nodes[a], out.nodes[node_of[q]]])
                continue
            end, path = trace(a, out.nodes[a], q[0], q[1], (r, c))
            if end is not None:
                out.add_edge(a, end, path)

    # closed loops without junctions or endpoints
    for r, c in zip(*np.nonzero(b & ~visited & (node_of < 0) & (count == 2))):
        if visited[r, c]:
            continue
        a = out.add_node((c, r))
        node_of[r, c] = a
        first = next(fg_neighbors(r, c))
        end, path = trace(a, out.nodes[a], first[0], first[1], (r, c))
        if end is not None:
            out.add_edge(a, end, path)

    nodes = np.array(out.nodes, dtype=float).reshape(-1, 2)
    polys = {}
    for k, poly in enumerate(out.polys):
        simple = simplify_polyline(poly, simplify_tol_px)
        if len(simple) > 2:
            polys[k] = simple
    return RoadGraph(size, nodes, out.edges, polys, width=width)


def mask_to_graph(m, simplify_tol_px: float = 2.0, width: float = 15.0) -> RoadGraph:
    """Thin a road mask and vectorize the result.

    Junction blocks that cannot be thinned further without changing topology
    are vectorized as a single junction node instead of raising.
    """
    sk = thin_mask(m) > 0
    return _vectorize(sk, simplify_tol_px, None, width)
