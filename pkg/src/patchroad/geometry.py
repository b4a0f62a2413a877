"""Road graph, patch grid and raster geometry.

Coordinates follow raster imagery: ``x`` is the column, ``y`` the row, the
origin is the top-left corner and ``y`` grows downward.  Pixel ``(r, c)``
owns the half-open cell ``[c, c+1) x [r, r+1)``, so a patch of size ``P``
is exactly a ``P x P`` block of pixels.  The stroke rasterizer
(:func:`rasterize_graph`) samples pixel ``(r, c)`` at the point ``(c, r)``.
"""
from __future__ import annotations

from functools import lru_cache
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NEIGHBOR_OFFSETS",
    "PatchGrid",
    "RoadGraph",
    "PslTensors",
    "patch_of_point",
    "neighbor",
    "split_polyline_by_grid",
    "clip_polyline_to_patch",
    "polyline_length",
    "rasterize_graph",
    "rasterize_centerline",
    "supercover_cells",
]

# (drow, dcol) for link directions 0..7; the opposite of j is 7 - j
NEIGHBOR_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)


@dataclass(frozen=True)
class PatchGrid:
    """Partition of a square image into ``n x n`` non-overlapping patches."""

    image_size: int = 1024
    patch_size: int = 16

    def __post_init__(self):
        if self.patch_size <= 0 or self.image_size <= 0:
            raise ValueError("image_size and patch_size must be positive")
        if self.image_size % self.patch_size:
            raise ValueError(
                f"image_size {self.image_size} is not a multiple of "
                f"patch_size {self.patch_size}")

    @property
    def n(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.n * self.n

    def origin(self, i):
        """Upper-left pixel corner of patch ``i`` as ``(x, y)``."""
        row, col = divmod(np.asarray(i), self.n)
        return np.stack([col * self.patch_size, row * self.patch_size],
                        axis=-1).astype(float)

    def rowcol(self, i):
        return divmod(i, self.n)


@dataclass(frozen=True, eq=False)
class RoadGraph:
    """Undirected planar road graph in pixel coordinates.

    Parameters
    ----------
    image_size : int
        Side length of the square image the graph lives in.
    nodes : ndarray, shape (n, 2)
        Node positions ``(x, y)``; node ids are row indices.
    edges : list of (int, int)
        Unordered node-id pairs.
    polylines : dict
        Optional intermediate geometry keyed by edge index.  Each value is a
        ``(k, 2)`` array starting and ending at the endpoint nodes.
    width : float
        Road width used when rasterizing.
    patch : ndarray or None
        Optional per-node patch index, set on decoded graphs.
    """

    image_size: int
    nodes: np.ndarray
    edges: list = field(default_factory=list)
    polylines: dict = field(default_factory=dict)
    width: float = 15.0
    patch: np.ndarray | None = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "nodes", nodes)
        edges = [(int(a), int(b)) for a, b in self.edges]
        object.__setattr__(self, "edges", edges)
        polylines = {int(k): np.asarray(v, dtype=float).reshape(-1, 2)
                     for k, v in self.polylines.items()}
        object.__setattr__(self, "polylines", polylines)
        if self.patch is not None:
            object.__setattr__(self, "patch",
                               np.asarray(self.patch, dtype=np.int64))

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def edge_polyline(self, k: int) -> np.ndarray:
        """Geometry of edge ``k`` from its first to its second node."""
        poly = self.polylines.get(k)
        if poly is not None:
            return poly
        a, b = self.edges[k]
        return self.nodes[[a, b]]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def edge_set(self) -> set:
        return {(min(a, b), max(a, b)) for a, b in self.edges}

    def validate(self) -> None:
        """Raise ``ValueError`` if any structural invariant is violated."""
        n = self.num_nodes
        if self.patch is not None and len(self.patch) != n:
            raise ValueError("patch annotation length differs from node count")
        if n and (np.any(self.nodes < 0) or np.any(self.nodes >= self.image_size)):
            raise ValueError("node coordinates outside [0, image_size)")
        seen = set()
        for a, b in self.edges:
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge ({a}, {b}) references a missing node")
            if a == b:
                raise ValueError(f"self-loop at node {a}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
        for k, poly in self.polylines.items():
            if not 0 <= k < len(self.edges):
                raise ValueError(f"polyline for missing edge {k}")
            a, b = self.edges[k]
            if len(poly) < 2 or not (np.allclose(poly[0], self.nodes[a])
                                     and np.allclose(poly[-1], self.nodes[b])):
                raise ValueError(f"polyline of edge {k} does not join its nodes")

    def with_edges(self, edges) -> "RoadGraph":
        """Copy with a new straight-edge set; polylines are dropped."""
        return RoadGraph(self.image_size, self.nodes.copy(), list(edges),
                         width=self.width,
                         patch=None if self.patch is None else self.patch.copy())


@dataclass(frozen=True, eq=False)
class PslTensors:
    """Patch-wise road probability, keypoint offset and link tensors.

    ``p`` has shape ``(n*n,)``, ``s`` has shape ``(n*n, 2)`` holding x then y
    offsets as fractions of the patch size measured from the patch's
    upper-left corner, and ``l`` has shape ``(n*n, 8)`` in
    :data:`NEIGHBOR_OFFSETS` order.
    """

    p: np.ndarray
    s: np.ndarray
    l: np.ndarray
    grid: PatchGrid

    def __post_init__(self):
        m = self.grid.num_patches
        p = np.asarray(self.p, dtype=float)
        s = np.asarray(self.s, dtype=float)
        l = np.asarray(self.l, dtype=float)
        if p.shape != (m,) or s.shape != (m, 2) or l.shape != (m, 8):
            raise ValueError(
                f"tensor shapes {p.shape}, {s.shape}, {l.shape} do not match "
                f"a {self.grid.n}x{self.grid.n} patch grid")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "l", l)

    @classmethod
    def zeros(cls, grid: PatchGrid) -> "PslTensors":
        m = grid.num_patches
        return cls(np.zeros(m), np.zeros((m, 2)), np.zeros((m, 8)), grid)


def patch_of_point(pt, grid: PatchGrid) -> int:
    """Index of the patch containing ``pt = (x, y)``."""
    x, y = float(pt[0]), float(pt[1])
    if not (0 <= x < grid.image_size and 0 <= y < grid.image_size):
        raise ValueError(f"point ({x}, {y}) outside the {grid.image_size}px image")
    return int(y // grid.patch_size) * grid.n + int(x // grid.patch_size)


def neighbor(i: int, j: int, grid: PatchGrid) -> int | None:
    """Patch adjacent to ``i`` in direction ``j``, or None off-grid."""
    n = grid.n
    if not 0 <= i < n * n:
        raise ValueError(f"patch index {i} out of range")
    dr, dc = NEIGHBOR_OFFSETS[j]
    row, col = divmod(i, n)
    r, c = row + dr, col + dc
    if 0 <= r < n and 0 <= c < n:
        return r * n + c
    return None


@lru_cache(maxsize=8)
def neighbor_table(n: int) -> np.ndarray:
    """``(n*n, 8)`` table of neighbor indices, -1 where off-grid.

    The result is cached and read-only.
    """
    rows, cols = np.divmod(np.arange(n * n), n)
    out = np.full((n * n, 8), -1, dtype=np.int64)
    for j, (dr, dc) in enumerate(NEIGHBOR_OFFSETS):
        r, c = rows + dr, cols + dc
        ok = (r >= 0) & (r < n) & (c >= 0) & (c < n)
        out[ok, j] = r[ok] * n + c[ok]
    out.setflags(write=False)
    return out


def direction_between(a: int, b: int, n: int) -> int | None:
    """Direction ``j`` with ``neighbor(a, j) == b``, or None."""
    ra, ca = divmod(a, n)
    rb, cb = divmod(b, n)
    try:
        return NEIGHBOR_OFFSETS.index((rb - ra, cb - ca))
    except ValueError:
        return None


def polyline_length(poly) -> float:
    poly = np.asarray(poly, dtype=float)
    if len(poly) < 2:
        return 0.0
    return float(np.hypot(*np.diff(poly, axis=0).T).sum())


def _segment_breaks(p0, p1, step):
    """Sorted parameters in (0, 1) where segment p0-p1 crosses grid lines."""
    ts = []
    for axis in (0, 1):
        a, b = p0[axis], p1[axis]
        if a == b:
            continue
        lo, hi = min(a, b), max(a, b)
        k0 = np.floor(lo / step) + 1
        k1 = np.ceil(hi / step) - 1
        if k1 >= k0:
            lines = np.arange(k0, k1 + 1) * step
            ts.append((lines - a) / (b - a))
    if not ts:
        return np.empty(0)
    t = np.unique(np.concatenate(ts))
    return t[(t > 0) & (t < 1)]


def split_polyline_by_grid(poly, step: float):
    """Cut a polyline at every grid line ``x = k*step`` and ``y = k*step``.

    Returns
    -------
    starts, ends : ndarray, shape (m, 2)
        Endpoints of the pieces, in order along the polyline.  Each piece
        lies inside a single grid cell.  Zero-length pieces are dropped.
    """
    poly = np.asarray(poly, dtype=float)
    starts, ends = [], []
    for p0, p1 in zip(poly[:-1], poly[1:]):
        if p0[0] == p1[0] and p0[1] == p1[1]:
            continue
        t = np.concatenate([[0.0], _segment_breaks(p0, p1, step), [1.0]])
        pts = p0 + t[:, None] * (p1 - p0)
        # exact grid coordinates for crossing points
        pts[0], pts[-1] = p0, p1
        starts.append(pts[:-1])
        ends.append(pts[1:])
    if not starts:
        return np.empty((0, 2)), np.empty((0, 2))
    starts = np.concatenate(starts)
    ends = np.concatenate(ends)
    keep = np.any(starts != ends, axis=1)
    return starts[keep], ends[keep]


def _piece_cells(starts, ends, step):
    mid = 0.5 * (starts + ends)
    return np.floor(mid / step).astype(np.int64)


def polyline_patch_pieces(poly, grid: PatchGrid):
    """Split ``poly`` into per-patch pieces.

    Returns ``(starts, ends, patch_ids)``; pieces whose midpoint falls
    outside the image are dropped.
    """
    starts, ends = split_polyline_by_grid(poly, grid.patch_size)
    cells = _piece_cells(starts, ends, grid.patch_size)
    ok = np.all((cells >= 0) & (cells < grid.n), axis=1)
    ids = cells[:, 1] * grid.n + cells[:, 0]
    return starts[ok], ends[ok], ids[ok]


def _merge_pieces(starts, ends):
    """Join consecutive pieces sharing an endpoint into polylines."""
    frags = []
    cur = None
    for a, b in zip(starts, ends):
        if cur is not None and np.array_equal(cur[-1], a):
            cur.append(b)
        else:
            if cur is not None:
                frags.append(np.array(cur))
            cur = [a, b]
    if cur is not None:
        frags.append(np.array(cur))
    return frags


def clip_polyline_to_patch(poly, i: int, grid: PatchGrid) -> list:
    """Maximal sub-polylines of ``poly`` inside patch ``i``.

    The patch rectangle includes its top and left edges and excludes its
    bottom and right edges.  Fragment endpoints are the exact entry and
    exit points on the rectangle boundary.
    """
    poly = np.asarray(poly, dtype=float)
    if len(poly) < 2:
        raise ValueError("polyline needs at least two points")
    starts, ends = split_polyline_by_grid(poly, grid.patch_size)
    if not len(starts):
        return []
    cells = _piece_cells(starts, ends, grid.patch_size)
    row, col = divmod(i, grid.n)
    sel = (cells[:, 0] == col) & (cells[:, 1] == row)
    # consecutive selected pieces are contiguous only if adjacent in order
    frags = []
    idx = np.flatnonzero(sel)
    if not len(idx):
        return []
    groups = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    for g in groups:
        frags.extend(_merge_pieces(starts[g], ends[g]))
    return frags


def supercover_cells(p0, p1) -> np.ndarray:
    """Integer cells ``(col, row)`` touched by the segment ``p0``-``p1``.

    Cells are half-open unit squares.  Where the segment passes exactly
    through a cell corner, the two cells sharing that corner on either
    side of the segment are included as well.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    cells = [np.floor(p0), np.floor(p1)]
    if not np.array_equal(p0, p1):
        starts, ends = split_polyline_by_grid(np.stack([p0, p1]), 1.0)
        cells.append(np.floor(0.5 * (starts + ends)))
        d = p1 - p0
        if d[0] != 0 and d[1] != 0:
            tx = _crossings(p0[0], p1[0])
            ty = _crossings(p0[1], p1[1])
            if len(tx) and len(ty):
                both = tx[np.isclose(tx[:, None], ty[None, :], rtol=0,
                                     atol=1e-12).any(axis=1)]
                for t in both:
                    corner = np.round(p0 + t * d)
                    sx = 1.0 if d[0] > 0 else -1.0
                    sy = 1.0 if d[1] > 0 else -1.0
                    # cell entered along x only and along y only
                    cx = corner[0] if sx > 0 else corner[0] - 1
                    cy = corner[1] if sy > 0 else corner[1] - 1
                    cells.append(np.array([[cx, cy - sy], [cx - sx, cy]]))
    out = np.vstack([np.atleast_2d(c) for c in cells]).astype(np.int64)
    return np.unique(out, axis=0)


def _crossings(a, b):
    if a == b:
        return np.empty(0)
    lo, hi = min(a, b), max(a, b)
    k = np.arange(np.floor(lo) + 1, np.ceil(hi))
    return (k - a) / (b - a)


def _all_segments(g: RoadGraph):
    polys = [g.edge_polyline(k) for k in range(len(g.edges))]
    if not polys:
        z = np.empty((0, 2))
        return z, z
    return (np.concatenate([p[:-1] for p in polys]),
            np.concatenate([p[1:] for p in polys]))


def _ragged_range(lo, count):
    """Concatenation of ``lo[i] + arange(count[i])`` with owner indices."""
    owner = np.repeat(np.arange(len(count)), count)
    start = np.cumsum(count) - count
    return lo[owner] + np.arange(owner.size) - start[owner], owner


def rasterize_centerline(g: RoadGraph, size: int | None = None) -> np.ndarray:
    """One-pixel supercover raster of every edge polyline, as ``uint8``.

    Same cells as :func:`supercover_cells` applied per segment, computed
    for all segments at once.
    """
    size = g.image_size if size is None else size
    mask = np.zeros((size, size), dtype=np.uint8)
    p0, p1 = _all_segments(g)
    if not len(p0):
        return mask
    d = p1 - p0
    cells = [np.floor(p0), np.floor(p1)]
    ts, owners = [np.zeros(len(p0)), np.ones(len(p0))], [np.arange(len(p0))] * 2
    corners = []
    for ax in (0, 1):
        lo = np.floor(np.minimum(p0[:, ax], p1[:, ax])) + 1
        hi = np.ceil(np.maximum(p0[:, ax], p1[:, ax]))
        count = np.maximum(hi - lo, 0).astype(np.int64)
        k, own = _ragged_range(lo, count)
        t = (k - p0[own, ax]) / d[own, ax]
        ts.append(t)
        owners.append(own)
        if ax == 0:
            # x crossing that also lands on an integer y is a corner
            y = p0[own, 1] + t * d[own, 1]
            yi = np.round(y)
            ylo = np.floor(np.minimum(p0[own, 1], p1[own, 1])) + 1
            yhi = np.ceil(np.maximum(p0[own, 1], p1[own, 1])) - 1
            # same tolerance as supercover_cells, which compares crossing times
            hit = ((np.abs(y - yi) <= 1e-12 * np.abs(d[own, 1])) & (d[own, 1] != 0)
                   & (yi >= ylo) & (yi <= yhi))
            corners.append((k[hit], yi[hit], own[hit]))
    t = np.concatenate(ts)
    own = np.concatenate(owners)
    order = np.lexsort((t, own))
    t, own = t[order], own[order]
    # zero-length pieces carry no cell of their own
    same = (own[1:] == own[:-1]) & (t[1:] > t[:-1])
    tm = 0.5 * (t[1:] + t[:-1])[same]
    om = own[1:][same]
    cells.append(np.floor(p0[om] + tm[:, None] * d[om]))
    for cx0, cy0, o in corners:
        sx = np.sign(d[o, 0])
        sy = np.sign(d[o, 1])
        cx = np.where(sx > 0, cx0, cx0 - 1)
        cy = np.where(sy > 0, cy0, cy0 - 1)
        cells.append(np.stack([cx, cy - sy], axis=1))
        cells.append(np.stack([cx - sx, cy], axis=1))
    c = np.concatenate(cells).astype(np.int64)
    ok = np.all((c >= 0) & (c < size), axis=1)
    c = c[ok]
    mask[c[:, 1], c[:, 0]] = 1
    # isolated nodes are not drawn; segments of zero length are
    return mask


def _segment_distance(px, py, a, b):
    d = b - a
    dd = float(d @ d)
    if dd == 0:
        return np.hypot(px - a[0], py - a[1])
    t = ((px - a[0]) * d[0] + (py - a[1]) * d[1]) / dd
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(px - (a[0] + t * d[0]), py - (a[1] + t * d[1]))


def rasterize_graph(g: RoadGraph, width: float | None = None,
                    size: int | None = None) -> np.ndarray:
    """Binary road mask: pixels within ``width / 2`` of any edge polyline."""
    width = g.width if width is None else width
    if width < 1:
        raise ValueError("width must be at least 1 pixel")
    size = g.image_size if size is None else size
    mask = np.zeros((size, size), dtype=np.uint8)
    r = width / 2.0
    for k in range(len(g.edges)):
        poly = g.edge_polyline(k)
        for a, b in zip(poly[:-1], poly[1:]):
            x0 = max(int(np.floor(min(a[0], b[0]) - r)), 0)
            x1 = min(int(np.ceil(max(a[0], b[0]) + r)), size - 1)
            y0 = max(int(np.floor(min(a[1], b[1]) - r)), 0)
            y1 = min(int(np.ceil(max(a[1], b[1]) + r)), size - 1)
            if x1 < x0 or y1 < y0:
                continue
            ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
            hit = _segment_distance(xs, ys, a, b) <= r
            mask[y0:y1 + 1, x0:x1 + 1] |= hit.astype(np.uint8)
    return mask
