"""CSR graph container, edge-list ingestion and synthetic generators."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, TextIO

import numpy as np


class GraphInputError(ValueError):
    """Raised on malformed or out-of-range graph input."""


@dataclass(frozen=True, eq=False)
class CsrGraph:
    num_nodes: int
    num_edges: int
    row_ptr: np.ndarray
    col_idx: np.ndarray

    def __post_init__(self):
        rp = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        ci = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        rp.setflags(write=False)
        ci.setflags(write=False)
        object.__setattr__(self, "row_ptr", rp)
        object.__setattr__(self, "col_idx", ci)

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def neighbors(self, node: int) -> np.ndarray:
        return self.col_idx[self.row_ptr[node]:self.row_ptr[node + 1]]

    def edges(self) -> list[tuple[int, int]]:
        src = np.repeat(np.arange(self.num_nodes), self.degrees())
        return list(zip(src.tolist(), self.col_idx.tolist()))

    def max_degree(self) -> int:
        return int(self.degrees().max()) if self.num_nodes else 0

    def validate(self) -> None:
        rp, ci = self.row_ptr, self.col_idx
        if len(rp) != self.num_nodes + 1 or len(ci) != self.num_edges:
            raise GraphInputError("row_ptr/col_idx lengths do not match counts")
        if rp[0] != 0 or rp[-1] != self.num_edges:
            raise GraphInputError("row_ptr must start at 0 and end at num_edges")
        if np.any(np.diff(rp) < 0):
            raise GraphInputError("row_ptr must be non-decreasing")
        if ci.size and (ci.min() < 0 or ci.max() >= self.num_nodes):
            raise GraphInputError("col_idx entry out of range")

    def __eq__(self, other):
        if not isinstance(other, CsrGraph):
            return NotImplemented
        return (self.num_nodes == other.num_nodes
                and np.array_equal(self.row_ptr, other.row_ptr)
                and np.array_equal(self.col_idx, other.col_idx))

    __hash__ = None


@dataclass(frozen=True)
class DegreeStats:
    min: int
    max: int
    mean: float
    histogram: dict[int, int] = field(default_factory=dict)


def from_edges(num_nodes: int, edges: Iterable[tuple[int, int]]) -> CsrGraph:
    """Build a canonical CSR: rows grouped by source, neighbors ascending."""
    arr = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    if arr.size and (arr.min() < 0 or arr.max() >= num_nodes):
        bad = arr[(arr < 0).any(axis=1) | (arr >= num_nodes).any(axis=1)][0]
        raise GraphInputError(
            f"edge ({bad[0]}, {bad[1]}) out of range for {num_nodes} nodes")
    return _from_arrays(num_nodes, arr[:, 0], arr[:, 1])


def _from_arrays(num_nodes: int, src: np.ndarray, dst: np.ndarray) -> CsrGraph:
    order = np.lexsort((dst, src))
    counts = np.bincount(src, minlength=num_nodes)
    row_ptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    return CsrGraph(num_nodes, int(len(src)), row_ptr, dst[order])


def load_edge_list(stream: TextIO) -> CsrGraph:
    edges = []
    max_id = -1
    for lineno, line in enumerate(stream, start=1):
        s = line.strip()
        if not s or s[0] in "#%":
            continue
        parts = s.split()
        if len(parts) < 2:
            raise GraphInputError(f"line {lineno}: expected 'src dst', got {s!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphInputError(f"line {lineno}: non-integer token in {s!r}") from None
        if u < 0 or v < 0:
            raise GraphInputError(f"line {lineno}: negative node id")
        edges.append((u, v))
        max_id = max(max_id, u, v)
    if not edges:
        raise GraphInputError("edge list is empty; node count unknown")
    return from_edges(max_id + 1, edges)


def gen_synthetic(kind: str, num_nodes: int, avg_degree: float, seed: int = 0) -> CsrGraph:
    """Random directed graph with uniform or heavy-tailed in-degree.

    ``uniform`` gives every node floor/ceil(avg_degree) neighbors drawn i.i.d.;
    ``powerlaw`` draws per-node degrees from a Zipf law rescaled to the
    requested mean and clipped to [1, num_nodes - 1].
    """
    if num_nodes < 1 or avg_degree < 0:
        raise GraphInputError("need num_nodes >= 1 and avg_degree >= 0")
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        base = int(np.floor(avg_degree))
        frac = avg_degree - base
        deg = base + (rng.random(num_nodes) < frac).astype(np.int64)
    elif kind == "powerlaw":
        hi = max(num_nodes - 1, 1)
        raw = np.minimum(rng.zipf(2.0, size=num_nodes), hi).astype(np.float64)
        deg = np.clip(np.rint(raw * (avg_degree / raw.mean())), 1, hi).astype(np.int64)
    else:
        raise GraphInputError(f"unknown synthetic kind {kind!r}")
    src = np.repeat(np.arange(num_nodes, dtype=np.int64), deg)
    dst = rng.integers(0, num_nodes, size=len(src), dtype=np.int64)
    return _from_arrays(num_nodes, src, dst)


def degree_stats(g: CsrGraph) -> DegreeStats:
    deg = g.degrees()
    if deg.size == 0:
        return DegreeStats(0, 0, 0.0, {})
    values, counts = np.unique(deg, return_counts=True)
    hist = {int(v): int(c) for v, c in zip(values, counts)}
    return DegreeStats(int(deg.min()), int(deg.max()), float(deg.mean()), hist)


_HEADER = struct.Struct("<QQ")


def dump_csr(g: CsrGraph, fh: BinaryIO) -> None:
    fh.write(_HEADER.pack(g.num_nodes, g.num_edges))
    fh.write(g.row_ptr.astype("<u8").tobytes())
    fh.write(g.col_idx.astype("<u8").tobytes())


def load_csr(fh: BinaryIO) -> CsrGraph:
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise GraphInputError("truncated CSR header")
    n, m = _HEADER.unpack(head)
    rp = np.frombuffer(fh.read(8 * (n + 1)), dtype="<u8")
    ci = np.frombuffer(fh.read(8 * m), dtype="<u8")
    if len(rp) != n + 1 or len(ci) != m:
        raise GraphInputError("truncated CSR body")
    g = CsrGraph(int(n), int(m), rp.astype(np.int64), ci.astype(np.int64))
    g.validate()
    return g
