"""Edge-balanced chunking of target nodes and node-embedding placement."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .costmodel import FLOAT_BYTES, HardwareProfile
from .graph import CsrGraph, GraphInputError

INDEX_BYTES = 8


@dataclass(frozen=True)
class WorkloadSplit:
    num_gpus: int
    num_nodes: int
    split_points: tuple[int, ...]

    @property
    def chunk_ranges(self) -> list[tuple[int, int]]:
        bounds = (0, *self.split_points, self.num_nodes)
        return [(bounds[i], bounds[i + 1]) for i in range(self.num_gpus)]

    def chunk_edges(self, g: CsrGraph) -> list[int]:
        rp = g.row_ptr
        return [int(rp[ub] - rp[lb]) for lb, ub in self.chunk_ranges]


@dataclass(frozen=True)
class NePlacement:
    mode: str
    ranges: tuple[tuple[int, int], ...]
    dim: int

    @property
    def num_gpus(self) -> int:
        return len(self.ranges)

    @property
    def num_nodes(self) -> int:
        return self.ranges[-1][1]

    def owners(self, ids: np.ndarray) -> np.ndarray:
        """Vectorised owner lookup (GPU index per global node id)."""
        uppers = np.array([ub for _, ub in self.ranges], dtype=np.int64)
        return np.searchsorted(uppers, ids, side="right")


@dataclass(frozen=True)
class FootprintReport:
    ne_bytes: tuple[int, ...]
    gp_bytes: tuple[int, ...]
    fits: bool

    @property
    def total_bytes(self) -> tuple[int, ...]:
        return tuple(a + b for a, b in zip(self.ne_bytes, self.gp_bytes))


def _lower_bound(row_ptr: np.ndarray, target: int, lo: int, hi: int) -> int:
    # smallest nid in (lo, hi] with row_ptr[nid] >= target; hi if none
    lo += 1
    while lo < hi:
        mid = (lo + hi) // 2
        if row_ptr[mid] >= target:
            hi = mid
        else:
            lo = mid + 1
    return lo


def split_by_edges(g: CsrGraph, num_gpus: int) -> WorkloadSplit:
    """Range-constrained binary search over the row pointer.

    Each split lands on the first node whose prefix edge count reaches the
    previous split's count plus ``ceil(E / num_gpus)``.
    """
    if num_gpus < 1:
        raise GraphInputError("num_gpus must be >= 1")
    n, rp = g.num_nodes, g.row_ptr
    e_per_gpu = -(-g.num_edges // num_gpus)
    points = []
    last = 0
    for _ in range(num_gpus - 1):
        if last >= n:
            points.append(n)
            continue
        target = min(int(rp[last]) + e_per_gpu, g.num_edges)
        last = _lower_bound(rp, target, last, n)
        points.append(last)
    return WorkloadSplit(num_gpus, n, tuple(points))


def plan_ne_placement(g: CsrGraph, num_gpus: int, mode: str = "follow-split", dim: int = 16,
                      split: WorkloadSplit | None = None) -> NePlacement:
    if num_gpus < 1 or dim < 1:
        raise GraphInputError("need num_gpus >= 1 and dim >= 1")
    n = g.num_nodes
    if mode == "equal-nodes":
        step = math.ceil(n / num_gpus)
        ranges = tuple((min(i * step, n), min((i + 1) * step, n)) for i in range(num_gpus))
    elif mode == "follow-split":
        split = split or split_by_edges(g, num_gpus)
        if split.num_gpus != num_gpus:
            raise GraphInputError("split was built for a different GPU count")
        ranges = tuple(split.chunk_ranges)
    else:
        raise GraphInputError(f"unknown placement mode {mode!r}")
    return NePlacement(mode, ranges, dim)


def translate(p: NePlacement, global_id: int) -> tuple[int, int]:
    if not 0 <= global_id < p.num_nodes:
        raise GraphInputError(f"node id {global_id} out of range [0, {p.num_nodes})")
    gpu = int(p.owners(np.asarray([global_id]))[0])
    return gpu, global_id - p.ranges[gpu][0]


def memory_footprint(g: CsrGraph, p: NePlacement, split: WorkloadSplit,
                     hw: HardwareProfile) -> FootprintReport:
    if p.num_nodes != g.num_nodes or split.num_nodes != g.num_nodes:
        raise GraphInputError("placement, split and graph disagree on node count")
    ne = tuple((ub - lb) * p.dim * FLOAT_BYTES for lb, ub in p.ranges)
    rp = g.row_ptr
    gp = tuple(((ub - lb + 1) + int(rp[ub] - rp[lb])) * INDEX_BYTES
               for lb, ub in split.chunk_ranges)
    fits = all(a + b <= hw.device_mem_bytes for a, b in zip(ne, gp))
    return FootprintReport(ne, gp, fits)


def plan_to_json(split: WorkloadSplit, placement: NePlacement) -> str:
    return json.dumps({
        "num_gpus": split.num_gpus,
        "num_nodes": split.num_nodes,
        "split_points": list(split.split_points),
        "mode": placement.mode,
        "ranges": [list(r) for r in placement.ranges],
        "dim": placement.dim,
    }, indent=2)


def plan_from_json(text: str) -> tuple[WorkloadSplit, NePlacement]:
    d = json.loads(text)
    split = WorkloadSplit(d["num_gpus"], d["num_nodes"], tuple(d["split_points"]))
    placement = NePlacement(d["mode"], tuple(tuple(r) for r in d["ranges"]), d["dim"])
    return split, placement
