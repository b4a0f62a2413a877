"""Independent reference implementations shared by several test modules."""
import numpy as np

from patchroad import RoadGraph


def _graph(nodes, edges, size=128, polylines=None):
    return RoadGraph(size, np.array(nodes, dtype=float).reshape(-1, 2), edges, polylines or {})


# ---------------------------------------------------------------------------
# brute-force APLS oracle: exhaustive snapping and Floyd-Warshall on a dense
# matrix over the graph with every control / snapped point inserted


def _oracle_segments(g):
    segs = []
    for k, (a, b) in enumerate(g.edges):
        poly = g.polylines.get(k, g.nodes[[a, b]])
        arc = 0.0
        for p, q in zip(poly[:-1], poly[1:]):
            segs.append((k, arc, np.array(p), np.array(q)))
            arc += float(np.hypot(*(q - p)))
    return segs


def _edge_length(g, k):
    a, b = g.edges[k]
    poly = g.polylines.get(k, g.nodes[[a, b]])
    return float(sum(np.hypot(*(q - p)) for p, q in zip(poly[:-1], poly[1:])))


def _oracle_distances(g, marks):
    """All-pairs distances between ``marks`` = list of (edge, arc) or ('node', v)."""
    verts = list(range(g.num_nodes))
    cuts = {k: [] for k in range(len(g.edges))}
    ids = []
    nv = g.num_nodes
    for m in marks:
        if m[0] == "node":
            ids.append(m[1])
            continue
        k, t = m
        length = _edge_length(g, k)
        if t <= 0:
            ids.append(g.edges[k][0])
        elif t >= length:
            ids.append(g.edges[k][1])
        else:
            cuts[k].append((t, nv))
            ids.append(nv)
            nv += 1
    d = np.full((nv, nv), np.inf)
    np.fill_diagonal(d, 0.0)
    for k, (a, b) in enumerate(g.edges):
        chain = [(0.0, a)] + sorted(cuts[k]) + [(_edge_length(g, k), b)]
        for (t0, u), (t1, v) in zip(chain[:-1], chain[1:]):
            w = t1 - t0
            d[u, v] = min(d[u, v], w)
            d[v, u] = min(d[v, u], w)
    del verts
    for k in range(nv):
        d = np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :])
    return d[np.ix_(ids, ids)]


def _oracle_directional(src, dst, buffer, interval):
    if not src.edges:
        return 1.0 if not dst.edges else 0.0
    if not dst.edges:
        return 0.0
    deg = src.degrees()
    marks, pts = [], []
    for v in range(src.num_nodes):
        if deg[v] > 0:
            marks.append(("node", v))
            pts.append(src.nodes[v])
    for k, (a, b) in enumerate(src.edges):
        poly = src.polylines.get(k, src.nodes[[a, b]])
        length = _edge_length(src, k)
        t = interval
        while t < length:
            marks.append((k, t))
            # walk the polyline to arc t
            rem = t
            for p, q in zip(poly[:-1], poly[1:]):
                seg = float(np.hypot(*(q - p)))
                if rem <= seg and seg > 0:
                    pts.append(p + rem / seg * (q - p))
                    break
                rem -= seg
            else:
                pts.append(poly[-1])
            t += interval
    segs = _oracle_segments(dst)
    snapped = []
    for p in pts:
        best = None
        for k, arc, a, b in segs:
            d = b - a
            dd = float(d @ d)
            t = 0.0 if dd == 0 else min(1.0, max(0.0, float((p - a) @ d) / dd))
            dist = float(np.hypot(*(p - a - t * d)))
            if best is None or dist < best[0]:
                best = (dist, k, arc + t * np.sqrt(dd))
        snapped.append((best[1], best[2]) if best[0] <= buffer else None)
    ds = _oracle_distances(src, marks)
    ok = [i for i, s in enumerate(snapped) if s is not None]
    dd = _oracle_distances(dst, [snapped[i] for i in ok])
    pos = {i: r for r, i in enumerate(ok)}
    terms = []
    m = len(marks)
    for i in range(m):
        for j in range(i + 1, m):
            length = ds[i, j]
            if not np.isfinite(length) or length <= 0:
                continue
            if i in pos and j in pos:
                other = dd[pos[i], pos[j]]
                terms.append(0.0 if not np.isfinite(other)
                             else 1.0 - min(1.0, abs(length - other) / length))
            else:
                terms.append(0.0)
    if not terms:
        return 1.0 if len(ok) == m else 0.0
    return float(np.mean(terms))


def oracle_apls(a, b, buffer, interval):
    x = _oracle_directional(a, b, buffer, interval)
    y = _oracle_directional(b, a, buffer, interval)
    return 0.0 if x <= 0 or y <= 0 else 2 * x * y / (x + y)


def random_case(rng):
    """Connected ground truth with <= 6 nodes and a perturbed prediction."""
    n = int(rng.integers(2, 7))
    nodes = rng.uniform(5, 120, (n, 2))
    edges = set()
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges.add((u, v))
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < 0.25:
                edges.add((u, v))
    edges = sorted(edges)
    polys = {}
    for k, (u, v) in enumerate(edges):
        if rng.random() < 0.3:
            mid = 0.5 * (nodes[u] + nodes[v]) + rng.normal(0, 8, 2)
            polys[k] = np.vstack([nodes[u], np.clip(mid, 0, 127), nodes[v]])
    gt = _graph(nodes, edges, polylines=polys)
    pn = np.clip(nodes + rng.normal(0, 1.5, nodes.shape), 0, 127.5)
    pe = [e for e in edges if rng.random() > 0.2]
    if rng.random() < 0.5:
        u, v = sorted(rng.choice(n, 2, replace=False).tolist())
        if (u, v) not in pe:
            pe.append((u, v))
    pred = _graph(pn, pe)
    return gt, pred
