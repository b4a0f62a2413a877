"""Road-graph and segmentation metrics: APLS, buffered pixel F1 and IoU."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .geometry import RoadGraph, rasterize_centerline

__all__ = ["MetricParams", "iou", "pixel_f1", "apls", "apls_directional",
           "eval_all"]


@dataclass(frozen=True)
class MetricParams:
    """Metric settings.

    ``buffer_px`` is both the pixel-F1 match radius (Chebyshev) and the APLS
    snapping radius; ``inject_interval_px`` spaces APLS control points
    along ground-truth edges.
    """

    buffer_px: float = 4.0
    inject_interval_px: float = 50.0
    max_pairs: int = 1000
    rng_seed: int = 0

    def __post_init__(self):
        if self.buffer_px <= 0 or self.inject_interval_px <= 0:
            raise ValueError("buffer_px and inject_interval_px must be positive")
        if self.max_pairs < 1:
            raise ValueError("max_pairs must be positive")


def iou(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    a = a >= 0.5
    b = b >= 0.5
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def pixel_f1(gt: RoadGraph, pred: RoadGraph, params: MetricParams = MetricParams()) -> dict:
    """Buffered precision, recall and F1 of rasterized centerlines."""
    if gt.image_size != pred.image_size:
        raise ValueError("graphs use different image sizes")
    g = rasterize_centerline(gt).astype(bool)
    p = rasterize_centerline(pred).astype(bool)
    ng, npred = np.count_nonzero(g), np.count_nonzero(p)
    if ng == 0 and npred == 0:
        return {"precision": 1.0, "recall": 1.0, "f1": 1.0}
    if ng == 0 or npred == 0:
        return {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    k = int(np.floor(params.buffer_px))
    # square dilation, done separably by the max filter
    g_near = ndimage.maximum_filter(g, size=2 * k + 1, mode="constant")
    p_near = ndimage.maximum_filter(p, size=2 * k + 1, mode="constant")
    precision = np.count_nonzero(p & g_near) / npred
    recall = np.count_nonzero(g & p_near) / ng
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return {"precision": float(precision), "recall": float(recall), "f1": float(f1)}


class _Chains:
    """A graph with its degree-2 runs merged into chains.

    Points on the graph are addressed as ``(chain, arc)``.  Shortest-path
    distances between such points reduce to distances between the chain
    end nodes, so Dijkstra only runs on the small branch graph.
    """

    def __init__(self, g: RoadGraph):
        self.g = g
        n = g.num_nodes
        self.table = _segments(g)
        self.edge_len = self.table[4]
        inc = [[] for _ in range(n)]
        for k, (u, v) in enumerate(g.edges):
            inc[u].append(k)
            inc[v].append(k)
        deg = np.array([len(x) for x in inc], dtype=np.int64)
        branch = deg != 2
        # chain id, start arc and orientation of every edge
        self.edge_chain = np.full(len(g.edges), -1, dtype=np.int64)
        self.edge_off = np.zeros(len(g.edges))
        self.edge_rev = np.zeros(len(g.edges), dtype=bool)
        ends, lengths = [], []

        def walk(start, k):
            c = len(ends)
            node, arc = start, 0.0
            while True:
                u, v = g.edges[k]
                self.edge_chain[k] = c
                self.edge_rev[k] = node != u
                self.edge_off[k] = arc
                arc += self.edge_len[k]
                node = v if node == u else u
                if branch[node]:
                    break
                nxt = [e for e in inc[node] if self.edge_chain[e] < 0]
                if not nxt:
                    break
                k = nxt[0]
            ends.append((start, node))
            lengths.append(arc)

        for start in np.flatnonzero(branch):
            for k in inc[start]:
                if self.edge_chain[k] < 0:
                    walk(start, k)
        # pure cycles: anchor each at its lowest node id
        for k in range(len(g.edges)):
            if self.edge_chain[k] < 0:
                start = min(g.edges[k])
                branch[start] = True
                walk(start, inc[start][0] if self.edge_chain[inc[start][0]] < 0
                     else inc[start][1])
        self.branch = branch
        self.ends = np.array(ends, dtype=np.int64).reshape(-1, 2)
        self.length = np.array(lengths, dtype=float)
        self.deg = deg
        self.inc = inc

    def chain_arc(self, k, t):
        """Chain arc of position ``t`` along original edge ``k``."""
        k = np.asarray(k)
        t = np.asarray(t, dtype=float)
        along = np.where(self.edge_rev[k], self.edge_len[k] - t, t)
        return self.edge_chain[k], self.edge_off[k] + along

    def node_points(self, v):
        """``(chain, arc)`` of nodes ``v``; branch nodes use chain -1, arc = id."""
        v = np.asarray(v, dtype=np.int64)
        k = np.array([self.inc[x][0] if self.inc[x] else 0 for x in v], dtype=np.int64)
        if not len(self.edge_len):
            return np.full(len(v), -1, dtype=np.int64), v.astype(float)
        at_start = np.array([self.g.edges[e][0] for e in k], dtype=np.int64) == v
        c, arc = self.chain_arc(k, np.where(at_start, 0.0, self.edge_len[k]))
        b = self.branch[v]
        return np.where(b, -1, c), np.where(b, v.astype(float), arc)

    def exits(self, chain, arc):
        """Two ``(node, cost)`` exits of each point."""
        chain = np.asarray(chain, dtype=np.int64)
        arc = np.asarray(arc, dtype=float)
        on = chain >= 0
        c = np.where(on, chain, 0)
        node = np.where(on[:, None], self.ends[c] if len(self.ends) else 0,
                        arc.astype(np.int64)[:, None])
        cost = np.zeros((len(chain), 2))
        if len(self.length):
            cost[:, 0] = np.where(on, arc, 0.0)
            cost[:, 1] = np.where(on, self.length[c] - arc, 0.0)
        return node, cost

    def distances(self, ci, ai, cj, aj):
        """Shortest-path length between point pairs ``i`` and ``j``."""
        m = len(ci)
        out = np.full(m, np.inf)
        if not m:
            return out
        ni, ei = self.exits(ci, ai)
        nj, ej = self.exits(cj, aj)
        src = np.unique(ni)
        d = _branch_dijkstra(self, src)
        row = np.searchsorted(src, ni)
        for x in (0, 1):
            for y in (0, 1):
                out = np.minimum(out, ei[:, x] + d[row[:, x], nj[:, y]] + ej[:, y])
        same = (ci >= 0) & (ci == cj)
        out[same] = np.minimum(out[same], np.abs(ai[same] - aj[same]))
        return out


def _branch_dijkstra(ch: _Chains, sources):
    nv = ch.g.num_nodes
    if not len(ch.ends):
        d = np.full((len(sources), nv), np.inf)
        d[np.arange(len(sources)), sources] = 0.0
        return d
    u, v = ch.ends.T
    w = ch.length
    keep = u != v
    u, v, w = u[keep], v[keep], w[keep]
    lo, hi = np.minimum(u, v), np.maximum(u, v)
    # parallel chains: keep the shortest, csr would sum duplicates
    order = np.lexsort((w, hi, lo))
    lo, hi, w = lo[order], hi[order], w[order]
    first = np.ones(len(lo), dtype=bool)
    first[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
    lo, hi, w = lo[first], hi[first], w[first]
    # zero weights would vanish from sparse storage and cut the graph
    w = np.where(w > 0, w, 1e-300)
    m = coo_matrix((w, (lo, hi)), shape=(nv, nv)).tocsr()
    return dijkstra(m, directed=False, indices=sources)


def _segments(g: RoadGraph):
    """Flat segment table ordered by edge then by position along the edge.

    Returns start points, end points, edge ids, the arc offset of each
    segment start within its edge and the length of every edge.
    """
    m = len(g.edges)
    if not m:
        z = np.empty((0, 2))
        return z, z, np.empty(0, dtype=np.int64), np.empty(0), np.empty(0)
    ends = np.array(g.edges, dtype=np.int64)
    starts, stops, eids = [g.nodes[ends[:, 0]]], [g.nodes[ends[:, 1]]], [np.arange(m)]
    bent = np.array(sorted(g.polylines), dtype=np.int64)
    if len(bent):
        keep = np.ones(m, dtype=bool)
        keep[bent] = False
        starts, stops, eids = [starts[0][keep]], [stops[0][keep]], [eids[0][keep]]
        for k in bent:
            poly = g.polylines[int(k)]
            starts.append(poly[:-1])
            stops.append(poly[1:])
            eids.append(np.full(len(poly) - 1, k))
    eid = np.concatenate(eids)
    order = np.argsort(eid, kind="stable")
    s0 = np.concatenate(starts)[order]
    s1 = np.concatenate(stops)[order]
    eid = eid[order]
    seg = np.hypot(*(s1 - s0).T)
    cum = np.cumsum(seg)
    first = np.searchsorted(eid, np.arange(m))
    base = np.concatenate([[0.0], cum])[first]
    off = np.concatenate([[0.0], cum[:-1]]) - base[eid]
    # per-edge sums keep lengths independent of other edges
    length = np.bincount(eid, weights=seg, minlength=m)
    return s0, s1, eid, off, length


def _control_points(g: RoadGraph, ch: _Chains, interval: float):
    """Control points as ``(xy, chain, arc)`` arrays.

    Nodes with at least one edge come first, then points every
    ``interval`` along each edge (exclusive of its ends).
    """
    nodes = np.flatnonzero(ch.deg > 0)
    nc, na = ch.node_points(nodes)
    s0, s1, eid, off, length = ch.table
    count = np.maximum(np.ceil(length / interval).astype(np.int64) - 1, 0)
    owner = np.repeat(np.arange(len(length)), count)
    step = np.arange(owner.size) - (np.cumsum(count) - count)[owner] + 1
    t = step * interval
    inside = t < length[owner]
    owner, t = owner[inside], t[inside]
    # segment holding each point, searched on edge-major arc keys
    lo = np.searchsorted(eid, owner)
    hi = np.searchsorted(eid, owner, side="right") - 1
    key = eid * (length.max() + 1.0) + off
    seg = np.searchsorted(key, owner * (length.max() + 1.0) + t, side="right") - 1
    seg = np.clip(seg, lo, hi)
    seglen = np.hypot(*(s1[seg] - s0[seg]).T)
    frac = np.where(seglen > 0, (t - off[seg]) / np.where(seglen > 0, seglen, 1), 0.0)
    frac = np.clip(frac, 0.0, 1.0)
    xy = s0[seg] + frac[:, None] * (s1[seg] - s0[seg])
    c, a = ch.chain_arc(owner, t)
    return (np.concatenate([g.nodes[nodes], xy]), np.concatenate([nc, c]),
            np.concatenate([na, a]))


def _snap(points, target: RoadGraph, radius: float):
    """Nearest point on ``target``'s edges for each point.

    Returns ``(edge_id, arc_position)`` arrays; edge id is -1 when nothing
    lies within ``radius``.  Ties go to the lowest segment index.
    """
    s0, s1, eid, off, _ = _segments(target)
    m = len(points)
    edge = np.full(m, -1, dtype=np.int64)
    arc = np.zeros(m)
    if not len(s0) or not m:
        return edge, arc
    d = s1 - s0
    dd = np.einsum("ij,ij->i", d, d)
    seglen = np.sqrt(dd)
    tree = cKDTree(0.5 * (s0 + s1))
    near = tree.query_ball_point(points, radius + 0.5 * seglen.max() + 1e-9)
    counts = np.array([len(x) for x in near], dtype=np.int64)
    if not counts.sum():
        return edge, arc
    pi = np.repeat(np.arange(m), counts)
    sj = np.concatenate([np.asarray(x, dtype=np.int64) for x in near])
    rel = points[pi] - s0[sj]
    t = np.where(dd[sj] > 0,
                 np.einsum("ij,ij->i", rel, d[sj]) / np.where(dd[sj] > 0, dd[sj], 1), 0.0)
    t = np.clip(t, 0.0, 1.0)
    dist = np.hypot(*(points[pi] - s0[sj] - t[:, None] * d[sj]).T)
    order = np.lexsort((sj, dist, pi))
    pi, sj, t, dist = pi[order], sj[order], t[order], dist[order]
    first = np.ones(len(pi), dtype=bool)
    first[1:] = pi[1:] != pi[:-1]
    pi, sj, t, dist = pi[first], sj[first], t[first], dist[first]
    ok = dist <= radius
    edge[pi[ok]] = eid[sj[ok]]
    arc[pi[ok]] = off[sj[ok]] + t[ok] * seglen[sj[ok]]
    return edge, arc


def _pairs(m: int, max_pairs: int, seed: int):
    total = m * (m - 1) // 2
    iu, ju = np.triu_indices(m, k=1)
    if total <= max_pairs:
        return iu, ju
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(total, size=max_pairs, replace=False))
    return iu[pick], ju[pick]


def apls_directional(src: RoadGraph, dst: RoadGraph,
                     params: MetricParams = MetricParams()) -> float:
    """Path-length similarity of ``dst`` measured from ``src``'s control points."""
    if not src.edges:
        return 1.0 if not dst.edges else 0.0
    if not dst.edges:
        return 0.0
    sch = _Chains(src)
    xy, c, a = _control_points(src, sch, params.inject_interval_px)
    dch = _Chains(dst)
    edge, earc = _snap(xy, dst, params.buffer_px)
    snapped = edge >= 0
    tc, ta = dch.chain_arc(np.where(snapped, edge, 0), earc)

    ii, jj = _pairs(len(xy), params.max_pairs, params.rng_seed)
    length = sch.distances(c[ii], a[ii], c[jj], a[jj])
    valid = np.isfinite(length) & (length > 0)
    ii, jj, length = ii[valid], jj[valid], length[valid]
    if not len(ii):
        return 1.0 if snapped.all() else 0.0

    both = snapped[ii] & snapped[jj]
    other = np.full(len(ii), np.inf)
    if both.any():
        bi, bj = ii[both], jj[both]
        other[both] = dch.distances(tc[bi], ta[bi], tc[bj], ta[bj])
    rel = np.abs(length - other) / length
    # snapping back onto identical geometry reproduces lengths only to rounding
    rel[rel < 1e-12] = 0.0
    term = 1.0 - np.minimum(1.0, rel)
    term[~np.isfinite(other)] = 0.0
    return float(term.mean())


def apls(gt: RoadGraph, pred: RoadGraph, params: MetricParams = MetricParams()) -> float:
    """Average Path Length Similarity, the harmonic mean of both directions."""
    if gt.image_size != pred.image_size:
        raise ValueError("graphs use different image sizes")
    a = apls_directional(gt, pred, params)
    b = apls_directional(pred, gt, params)
    if a <= 0 or b <= 0:
        return 0.0
    return 2.0 * a * b / (a + b)


def eval_all(gt_graph: RoadGraph, pred_graph: RoadGraph, gt_mask=None,
             pred_mask=None, params: MetricParams = MetricParams()) -> dict:
    """Metric report ``{"apls", "pf1": {"p", "r", "f1"}, "iou"}``.

    ``iou`` is present only when both masks are given.
    """
    f = pixel_f1(gt_graph, pred_graph, params)
    report = {"apls": apls(gt_graph, pred_graph, params),
              "pf1": {"p": f["precision"], "r": f["recall"], "f1": f["f1"]}}
    if gt_mask is not None and pred_mask is not None:
        report["iou"] = iou(gt_mask, pred_mask)
    return report
