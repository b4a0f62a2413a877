"""Synthetic road networks and a noise model standing in for network output."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import Delaunay
from scipy.stats import qmc

from .codec import S_MAX
from .geometry import PatchGrid, PslTensors, RoadGraph, neighbor_table, polyline_patch_pieces

__all__ = ["SynthParams", "NoiseParams", "generate_network", "perturb_psl", "tile_psl"]

STYLES = ("jittered_grid", "proximity_graph")


@dataclass(frozen=True)
class SynthParams:
    """Scene generator settings.

    ``max_turn_deg`` bounds the bend at degree-2 nodes, since a midpoint
    keypoint cuts sharp corners; ``min_angle_deg`` bounds the angle between
    any two roads leaving the same node.
    """

    image_size: int = 1024
    patch_size: int = 16
    min_sep: float = 48.0
    road_width: float = 15.0
    style: str = "jittered_grid"
    rng_seed: int = 0
    extra_edge_prob: float = 0.5
    max_turn_deg: float = 30.0
    min_angle_deg: float = 45.0

    def __post_init__(self):
        if self.min_sep < 2 * self.patch_size:
            raise ValueError(
                f"min_sep {self.min_sep} below twice the patch size {self.patch_size}")
        if self.image_size % self.patch_size:
            raise ValueError("image_size must be a multiple of patch_size")
        if self.style not in STYLES:
            raise ValueError(f"unknown style {self.style!r}; expected one of {STYLES}")
        if self.road_width < 1:
            raise ValueError("road_width must be at least 1")
        if self.image_size < 4 * self.min_sep:
            raise ValueError("image too small for the requested node spacing")


@dataclass(frozen=True)
class NoiseParams:
    sigma_p: float = 0.0
    sigma_s: float = 0.0
    p_drop: float = 0.0
    p_add: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.sigma_p < 0 or self.sigma_s < 0:
            raise ValueError("noise sigmas must be non-negative")
        for name in ("p_drop", "p_add"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def _jittered_grid(params: SynthParams, rng):
    jitter = params.min_sep / 4
    spacing = params.min_sep + 2 * jitter
    margin = spacing / 2
    k = int((params.image_size - 2 * margin) // spacing) + 1
    offset = (params.image_size - (k - 1) * spacing) / 2
    rows, cols = np.divmod(np.arange(k * k), k)
    base = np.stack([cols, rows], axis=1) * spacing + offset
    radius = jitter * np.sqrt(rng.random(k * k))
    theta = rng.uniform(0, 2 * np.pi, k * k)
    nodes = base + np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    cand = []
    for i in range(k * k):
        r, c = divmod(i, k)
        if c + 1 < k:
            cand.append((i, i + 1))
        if r + 1 < k:
            cand.append((i, i + k))
    return nodes, cand


def _proximity_graph(params: SynthParams, rng):
    margin = params.min_sep / 2
    span = params.image_size - 2 * margin
    # fewer candidates per annulus than the default 30: slightly sparser
    # packing, same minimum distance, three times faster
    engine = qmc.PoissonDisk(d=2, radius=params.min_sep / span, ncandidates=10, seed=rng)
    nodes = engine.fill_space() * span + margin
    tri = Delaunay(nodes)
    cand = set()
    for simplex in tri.simplices:
        for a, b in ((0, 1), (1, 2), (0, 2)):
            u, v = sorted((int(simplex[a]), int(simplex[b])))
            cand.add((u, v))
    cand = sorted(cand)
    # relative neighbourhood graph: no third point closer to both ends
    d = np.hypot(*(nodes[:, None, :] - nodes[None, :, :]).transpose(2, 0, 1))
    u, v = np.array(cand).T
    lune = np.maximum(d[u], d[v]) < d[u, v][:, None]
    rng_edges = [cand[k] for k in np.flatnonzero(~lune.any(axis=1))]
    return nodes, cand, rng_edges


class _Occupancy:
    """Patches visited by each edge; edges may only share their common node's patch."""

    def __init__(self, nodes, grid: PatchGrid):
        self.nodes = nodes
        self.grid = grid
        self.node_patch = (np.floor(nodes[:, 1] / grid.patch_size) * grid.n
                           + np.floor(nodes[:, 0] / grid.patch_size)).astype(int)
        self.users = {}
        self._cache = {}

    def patches(self, a, b):
        key = (min(a, b), max(a, b))
        if key not in self._cache:
            _, _, ids = polyline_patch_pieces(self.nodes[list(key)], self.grid)
            self._cache[key] = set(ids.tolist()) | {self.node_patch[a], self.node_patch[b]}
        return self._cache[key]

    def fits(self, a, b):
        for pid in self.patches(a, b):
            for u, v in self.users.get(pid, ()):
                common = {u, v} & {a, b}
                if not common or self.node_patch[common.pop()] != pid:
                    return False
        return True

    def add(self, a, b):
        for pid in self.patches(a, b):
            self.users.setdefault(pid, set()).add((min(a, b), max(a, b)))

    def remove(self, a, b):
        for pid in self.patches(a, b):
            self.users[pid].discard((min(a, b), max(a, b)))

    def clean(self, adj):
        occ = _Occupancy(self.nodes, self.grid)
        occ._cache = self._cache
        for a in range(len(adj)):
            for b in adj[a]:
                if a < b:
                    if not occ.fits(a, b):
                        return False
                    occ.add(a, b)
        return True


def _angle_ok(nodes, adj, a, b, min_angle):
    """Adding a-b keeps every angle at a and b at least ``min_angle``."""
    for x, y in ((a, b), (b, a)):
        d = nodes[y] - nodes[x]
        for z in adj[x]:
            e = nodes[z] - nodes[x]
            cos = d @ e / (np.hypot(*d) * np.hypot(*e))
            if np.degrees(np.arccos(np.clip(cos, -1, 1))) < min_angle:
                return False
    return True


def _sharp(nodes, adj, a, max_turn):
    if len(adj[a]) != 2:
        return False
    u, v = adj[a]
    d1 = nodes[u] - nodes[a]
    d2 = nodes[v] - nodes[a]
    cos = d1 @ d2 / (np.hypot(*d1) * np.hypot(*d2))
    return 180.0 - np.degrees(np.arccos(np.clip(cos, -1, 1))) > max_turn


def _connected_without(adj, a, b):
    """Would a and b stay connected after removing edge a-b?"""
    seen = {a}
    stack = [a]
    while stack:
        x = stack.pop()
        for y in adj[x]:
            if (x, y) in ((a, b), (b, a)) or y in seen:
                continue
            if y == b:
                return True
            seen.add(y)
            stack.append(y)
    return False


def _repair(nodes, adj, cand_adj, params, rng, occ):
    """Remove sharp degree-2 bends by adding or removing one incident edge."""
    bad = {a for a in range(len(nodes)) if _sharp(nodes, adj, a, params.max_turn_deg)}
    for _ in range(20 * len(nodes)):
        if not bad:
            return True
        order = sorted(bad)
        a = order[rng.integers(len(order))]
        bad.discard(a)
        if not _sharp(nodes, adj, a, params.max_turn_deg):
            continue
        options = [b for b in cand_adj[a] if b not in adj[a] and len(adj[b]) != 1
                   and len(adj[b]) < 4
                   and _angle_ok(nodes, adj, a, b, params.min_angle_deg)
                   and occ.fits(a, b)]
        if options:
            b = options[rng.integers(len(options))]
            adj[a].append(b)
            adj[b].append(a)
            occ.add(a, b)
        else:
            drops = [b for b in adj[a] if _connected_without(adj, a, b)]
            calm = [b for b in drops if len(adj[b]) not in (1, 3)]
            # last resort cuts the graph; the smaller side is discarded later
            drops = calm or drops or list(adj[a])
            b = drops[rng.integers(len(drops))]
            adj[a].remove(b)
            adj[b].remove(a)
            occ.remove(a, b)
        for x in (a, b):
            if _sharp(nodes, adj, x, params.max_turn_deg):
                bad.add(x)
    return not bad


def _select_edges(nodes, cand, base, params, rng, extra_prob, occ):
    n = len(nodes)
    cand_adj = [[] for _ in range(n)]
    for u, v in cand:
        cand_adj[u].append(v)
        cand_adj[v].append(u)
    adj = [[] for _ in range(n)]
    # random spanning tree over the base edges (Kruskal on random weights)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    order = rng.permutation(len(base))
    rest = []
    for k in order:
        u, v = base[k]
        ru, rv = find(u), find(v)
        if ru != rv and _angle_ok(nodes, adj, u, v, params.min_angle_deg) \
                and occ.fits(u, v):
            parent[ru] = rv
            adj[u].append(v)
            adj[v].append(u)
            occ.add(u, v)
        else:
            rest.append((u, v))
    for u, v in rest:
        if find(u) != find(v):
            if _angle_ok(nodes, adj, u, v, params.min_angle_deg) and occ.fits(u, v):
                parent[find(u)] = find(v)
                adj[u].append(v)
                adj[v].append(u)
                occ.add(u, v)
        elif rng.random() < extra_prob and \
                _angle_ok(nodes, adj, u, v, params.min_angle_deg) and occ.fits(u, v):
            adj[u].append(v)
            adj[v].append(u)
            occ.add(u, v)
    # bridge leftover components through any fitting candidate edge
    for u, v in cand:
        if find(u) != find(v) and _angle_ok(nodes, adj, u, v, params.min_angle_deg) \
                and occ.fits(u, v):
            parent[find(u)] = find(v)
            adj[u].append(v)
            adj[v].append(u)
            occ.add(u, v)
    return adj, cand_adj


def _largest_component(adj):
    n = len(adj)
    comp = [-1] * n
    sizes = []
    for s in range(n):
        if comp[s] >= 0:
            continue
        comp[s] = len(sizes)
        stack, size = [s], 0
        while stack:
            x = stack.pop()
            size += 1
            for y in adj[x]:
                if comp[y] < 0:
                    comp[y] = comp[s]
                    stack.append(y)
        sizes.append(size)
    best = int(np.argmax(sizes))
    return [k for k in range(n) if comp[k] == best]


def generate_network(params: SynthParams = SynthParams()) -> RoadGraph:
    """Planar, connected road network with straight edges.

    All node pairs are at least ``min_sep`` apart and the output depends
    only on ``params``.
    """
    seed_seq = np.random.SeedSequence(params.rng_seed)
    for child in seed_seq.spawn(32):
        rng = np.random.default_rng(child)
        if params.style == "jittered_grid":
            nodes, cand = _jittered_grid(params, rng)
            base, extra_prob = cand, params.extra_edge_prob
        else:
            nodes, cand, base = _proximity_graph(params, rng)
            extra_prob = 1.0
        occ = _Occupancy(nodes, PatchGrid(params.image_size, params.patch_size))
        adj, cand_adj = _select_edges(nodes, cand, base, params, rng, extra_prob, occ)
        if _repair(nodes, adj, cand_adj, params, rng, occ) and occ.clean(adj):
            break
    else:
        raise RuntimeError("could not generate a cleanly encodable network")
    keep = _largest_component(adj)
    new_id = {k: i for i, k in enumerate(keep)}
    edges = sorted({(min(new_id[a], new_id[b]), max(new_id[a], new_id[b]))
                    for a in keep for b in adj[a]})
    g = RoadGraph(params.image_size, nodes[keep], edges, width=params.road_width)
    g.validate()
    return g


def _logit(p):
    return np.log(p) - np.log1p(-p)


def perturb_psl(t: PslTensors, noise: NoiseParams) -> PslTensors:
    """Noisy copy of ground-truth tensors.

    ``p`` receives Gaussian noise in logit space (labels are first softened
    to 0.01 / 0.99), ``s`` additive Gaussian noise on road patches clipped
    to ``[0, 1)``, and links are dropped or added per unordered patch pair,
    always in both directions at once.
    """
    rng = np.random.default_rng(noise.rng_seed)
    grid = t.grid
    p = t.p.copy()
    s = t.s.copy()
    l = t.l.copy()
    road = t.p >= 0.5

    if noise.sigma_p > 0:
        soft = np.clip(p, 0.01, 0.99)
        z = _logit(soft) + rng.normal(0.0, noise.sigma_p, p.shape)
        p = 1.0 / (1.0 + np.exp(-z))
    if noise.sigma_s > 0:
        idx = np.flatnonzero(road)
        s[idx] = np.clip(s[idx] + rng.normal(0.0, noise.sigma_s, (len(idx), 2)),
                         0.0, S_MAX)
    if noise.p_drop > 0 or noise.p_add > 0:
        table = neighbor_table(grid.n)
        for j in (4, 5, 6, 7):
            nb = table[:, j]
            pair = road & (nb >= 0)
            pair[pair] &= road[nb[pair]]
            src = np.flatnonzero(pair)
            u = rng.random(len(src))
            linked = (t.l[src, j] >= 0.5) & (t.l[nb[src], 7 - j] >= 0.5)
            drop = linked & (u < noise.p_drop)
            add = ~linked & (u < noise.p_add)
            l[src[drop], j] = 0.0
            l[nb[src[drop]], 7 - j] = 0.0
            l[src[add], j] = 1.0
            l[nb[src[add]], 7 - j] = 1.0
    return replace(t, p=p, s=s, l=l)


def tile_psl(t: PslTensors, reps: int) -> PslTensors:
    """Repeat a tensor set ``reps`` times along both grid axes.

    Used to build large benchmark grids from one scene; no links cross the
    seams because the source scene has none leaving its own grid.
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    n = t.grid.n
    p = np.tile(t.p.reshape(n, n), (reps, reps)).ravel()
    s = np.tile(t.s.reshape(n, n, 2), (reps, reps, 1)).reshape(-1, 2)
    l = np.tile(t.l.reshape(n, n, 8), (reps, reps, 1)).reshape(-1, 8)
    grid = PatchGrid(t.grid.image_size * reps, t.grid.patch_size)
    return PslTensors(p, s, l, grid)
