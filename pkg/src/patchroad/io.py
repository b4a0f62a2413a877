"""Readers and writers for graph JSON, binary PGM masks and PSL tensor files."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .geometry import PatchGrid, PslTensors, RoadGraph

__all__ = [
    "FormatError",
    "graph_to_dict", "graph_from_dict", "write_graph", "read_graph",
    "write_pgm", "read_pgm",
    "write_psl", "read_psl", "psl_bytes",
]

PSL_MAGIC = b"PSL1"


class FormatError(ValueError):
    """A file does not match the expected on-disk format."""


def graph_to_dict(g: RoadGraph) -> dict:
    nodes = []
    for k, (x, y) in enumerate(g.nodes):
        node = {"id": k, "x": float(x), "y": float(y)}
        if g.patch is not None:
            node["patch"] = int(g.patch[k])
        nodes.append(node)
    edges = []
    for k, (a, b) in enumerate(g.edges):
        edge = {"a": a, "b": b}
        if k in g.polylines:
            edge["poly"] = [[float(x), float(y)] for x, y in g.polylines[k]]
        edges.append(edge)
    return {"image_size": int(g.image_size), "width": float(g.width),
            "nodes": nodes, "edges": edges}


def graph_from_dict(d: dict) -> RoadGraph:
    try:
        nodes = sorted(d["nodes"], key=lambda nd: nd["id"])
        if [nd["id"] for nd in nodes] != list(range(len(nodes))):
            raise FormatError("node ids must be dense 0..n-1")
        xy = np.array([[nd["x"], nd["y"]] for nd in nodes], dtype=float)
        patch = None
        if nodes and all("patch" in nd for nd in nodes):
            patch = np.array([nd["patch"] for nd in nodes], dtype=np.int64)
        edges, polys = [], {}
        for k, e in enumerate(d["edges"]):
            edges.append((int(e["a"]), int(e["b"])))
            if e.get("poly") is not None:
                polys[k] = np.asarray(e["poly"], dtype=float)
        g = RoadGraph(int(d["image_size"]), xy.reshape(-1, 2), edges, polys,
                      width=float(d.get("width", 15.0)), patch=patch)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed graph JSON: {exc!r}") from exc
    try:
        g.validate()
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    return g


def write_graph(g: RoadGraph, path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(g), indent=1) + "\n")


def read_graph(path) -> RoadGraph:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not JSON ({exc})") from exc
    return graph_from_dict(d)


def write_pgm(mask, path) -> None:
    """Write a mask as binary PGM; non-zero pixels become 255."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError("mask must be 2-D")
    if m.dtype.kind == "f":
        data = np.clip(np.round(m * 255), 0, 255).astype(np.uint8)
    else:
        data = np.where(m > 0, 255, 0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def _pgm_tokens(buf: bytes):
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(buf[start:pos])
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM as a float array scaled to [0, 1]."""
    buf = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(buf)
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5)")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: bad PGM header") from exc
    if not 0 < maxval < 256:
        raise FormatError(f"{path}: only 8-bit PGM is supported")
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h, offset=offset) \
        if len(buf) - offset >= w * h else None
    if data is None:
        raise FormatError(f"{path}: truncated PGM data")
    return data.reshape(h, w).astype(float) / maxval


def psl_bytes(t: PslTensors) -> bytes:
    head = PSL_MAGIC + struct.pack("<II", t.grid.n, t.grid.patch_size)
    body = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes()
                    for a in (t.p, t.s, t.l))
    return head + body


def write_psl(t: PslTensors, path) -> None:
    Path(path).write_bytes(psl_bytes(t))


def read_psl(path) -> PslTensors:
    buf = Path(path).read_bytes()
    if len(buf) < 12 or buf[:4] != PSL_MAGIC:
        raise FormatError(f"{path}: missing PSL1 magic")
    n, patch = struct.unpack("<II", buf[4:12])
    m = n * n
    expected = 12 + 4 * 11 * m
    if len(buf) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(buf)}")
    if n == 0 or patch == 0:
        raise FormatError(f"{path}: empty patch grid")
    arr = np.frombuffer(buf, dtype="<f4", offset=12).astype(float)
    grid = PatchGrid(n * patch, patch)
    return PslTensors(arr[:m], arr[m:3 * m].reshape(m, 2),
                      arr[3 * m:].reshape(m, 8), grid)
