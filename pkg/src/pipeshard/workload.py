"""Per-GPU pipeline workload: local/remote split, neighbor partitions, warp and block mapping."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .costmodel import DIST_RANGE, PS_RANGE, WPB_RANGE, ConfigError, KernelConfig, smem
from .graph import CsrGraph
from .placement import NePlacement, WorkloadSplit

LOCAL = "local"
REMOTE = "remote"


@dataclass(frozen=True, eq=False)
class ChunkCsr:
    """CSR over a contiguous target range; column ids stay global."""
    row_start: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    kind: str

    @property
    def num_rows(self) -> int:
        return len(self.row_ptr) - 1

    @property
    def num_edges(self) -> int:
        return int(self.row_ptr[-1])

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr)


@dataclass(frozen=True)
class LocalRemoteSplit:
    gpu_id: int
    local: ChunkCsr
    remote: ChunkCsr
    _parts: dict = field(default_factory=dict, compare=False, repr=False)

    def partitions(self, ps: int | None) -> tuple[tuple, tuple]:
        """Local and remote partitions for ``ps``, memoised per split."""
        if ps not in self._parts:
            self._parts[ps] = (tuple(partition_neighbors(self.local, ps)),
                               tuple(partition_neighbors(self.remote, ps)))
        return self._parts[ps]


@dataclass(frozen=True, eq=False)
class NeighborPartition:
    target: int
    neighbors: np.ndarray
    kind: str

    @property
    def size(self) -> int:
        return len(self.neighbors)

    def __eq__(self, other):
        if not isinstance(other, NeighborPartition):
            return NotImplemented
        return (self.target == other.target and self.kind == other.kind
                and np.array_equal(self.neighbors, other.neighbors))

    __hash__ = None


@dataclass(frozen=True)
class WarpWorkload:
    warp_id: int
    local: tuple[int, ...]
    remote: tuple[int, ...]

    @property
    def ordered_tasks(self) -> list[tuple[str, int]]:
        return [(LOCAL, i) for i in self.local] + [(REMOTE, i) for i in self.remote]

    def pairs(self) -> list[tuple[int | None, int | None]]:
        n = max(len(self.local), len(self.remote))
        return [(self.local[i] if i < len(self.local) else None,
                 self.remote[i] if i < len(self.remote) else None) for i in range(n)]


@dataclass(frozen=True)
class KernelLaunchPlan:
    warps: tuple[WarpWorkload, ...]
    wpb: int
    ps: int
    dim: int
    smem_bytes_per_block: int
    local_parts: tuple[NeighborPartition, ...] = ()
    remote_parts: tuple[NeighborPartition, ...] = ()

    @property
    def blocks(self) -> list[tuple[int, ...]]:
        ids = [w.warp_id for w in self.warps]
        return [tuple(ids[i:i + self.wpb]) for i in range(0, len(ids), self.wpb)]

    def parts(self, kind: str) -> tuple[NeighborPartition, ...]:
        return self.local_parts if kind == LOCAL else self.remote_parts

    @cached_property
    def local_sizes(self) -> np.ndarray:
        return np.fromiter((len(p.neighbors) for p in self.local_parts), np.int64, len(self.local_parts))

    @cached_property
    def remote_sizes(self) -> np.ndarray:
        return np.fromiter((len(p.neighbors) for p in self.remote_parts), np.int64, len(self.remote_parts))

    def to_json(self) -> str:
        return json.dumps({
            "wpb": self.wpb,
            "ps": self.ps,
            "dim": self.dim,
            "smem_bytes_per_block": self.smem_bytes_per_block,
            "local_parts": [[p.target, p.neighbors.tolist()] for p in self.local_parts],
            "remote_parts": [[p.target, p.neighbors.tolist()] for p in self.remote_parts],
            "warps": [{"id": w.warp_id, "local": list(w.local), "remote": list(w.remote)}
                      for w in self.warps],
        })

    @classmethod
    def from_json(cls, text: str) -> "KernelLaunchPlan":
        d = json.loads(text)

        def parts(rows, kind):
            return tuple(NeighborPartition(t, np.asarray(nb, dtype=np.int64), kind) for t, nb in rows)

        warps = tuple(WarpWorkload(w["id"], tuple(w["local"]), tuple(w["remote"])) for w in d["warps"])
        return cls(warps, d["wpb"], d["ps"], d["dim"], d["smem_bytes_per_block"],
                   parts(d["local_parts"], LOCAL), parts(d["remote_parts"], REMOTE))


def _check_range(name: str, value: int, bounds: tuple[int, int]) -> None:
    lo, hi = bounds
    if not lo <= value <= hi:
        raise ConfigError(f"{name}={value} outside [{lo}, {hi}]")


def split_local_remote(g: CsrGraph, split: WorkloadSplit, placement: NePlacement,
                       gpu_id: int) -> LocalRemoteSplit:
    if not 0 <= gpu_id < split.num_gpus:
        raise ConfigError(f"gpu_id {gpu_id} outside [0, {split.num_gpus})")
    lb, ub = split.chunk_ranges[gpu_id]
    rp = g.row_ptr
    cols = g.col_idx[rp[lb]:rp[ub]]
    rows = np.repeat(np.arange(ub - lb), np.diff(rp[lb:ub + 1]))
    is_local = placement.owners(cols) == gpu_id

    def build(mask, kind):
        counts = np.bincount(rows[mask], minlength=ub - lb)
        ptr = np.zeros(ub - lb + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        return ChunkCsr(lb, ptr, cols[mask], kind)

    return LocalRemoteSplit(gpu_id, build(is_local, LOCAL), build(~is_local, REMOTE))


def partition_neighbors(csr: ChunkCsr, ps: int | None) -> list[NeighborPartition]:
    """Cut every row into ceil(degree / ps) consecutive slices.

    ``ps=None`` keeps whole neighbor lists (one partition per non-empty row).
    """
    if ps is not None:
        _check_range("ps", ps, PS_RANGE)
    deg = csr.degrees()
    rows = np.flatnonzero(deg)
    if ps is None:
        counts = np.ones(len(rows), dtype=np.int64)
        step = deg[rows]
    else:
        counts = -(-deg[rows] // ps)
        step = np.full(len(rows), ps, dtype=np.int64)
    row_of = np.repeat(rows, counts)
    first = np.cumsum(counts) - counts
    k = np.arange(int(counts.sum())) - np.repeat(first, counts)
    starts = csr.row_ptr[row_of] + k * np.repeat(step, counts)
    ends = np.minimum(starts + np.repeat(step, counts), csr.row_ptr[row_of + 1])
    ci, kind, base = csr.col_idx, csr.kind, csr.row_start
    return [NeighborPartition(base + r, ci[a:b], kind)
            for r, a, b in zip(row_of.tolist(), starts.tolist(), ends.tolist())]


def interleave(n_local: int, n_remote: int, dist: int) -> list[WarpWorkload]:
    """Give warp w local partitions [w*dist, (w+1)*dist) and the same remote slice."""
    _check_range("dist", dist, DIST_RANGE)
    num_warps = math.ceil(max(n_local, n_remote) / dist)
    return [WarpWorkload(w,
                         tuple(range(w * dist, min((w + 1) * dist, n_local))),
                         tuple(range(w * dist, min((w + 1) * dist, n_remote))))
            for w in range(num_warps)]


def segregate(n_local: int, n_remote: int, dist: int) -> list[WarpWorkload]:
    """Non-interleaved mapping: all local-only warps, then all remote-only warps."""
    _check_range("dist", dist, DIST_RANGE)
    warps = []
    for w in range(math.ceil(n_local / dist)):
        warps.append(WarpWorkload(len(warps), tuple(range(w * dist, min((w + 1) * dist, n_local))), ()))
    for w in range(math.ceil(n_remote / dist)):
        warps.append(WarpWorkload(len(warps), (), tuple(range(w * dist, min((w + 1) * dist, n_remote)))))
    return warps


def map_to_blocks(warps: list[WarpWorkload], wpb: int, dim: int, ps: int,
                  local_parts=(), remote_parts=()) -> KernelLaunchPlan:
    _check_range("wpb", wpb, WPB_RANGE)
    size = smem(KernelConfig(ps, 1, wpb), dim)
    return KernelLaunchPlan(tuple(warps), wpb, ps, dim, size, tuple(local_parts), tuple(remote_parts))


def build_plan(lr: LocalRemoteSplit, cfg: KernelConfig, dim: int, *,
               interleaved: bool = True, whole_lists: bool = False) -> KernelLaunchPlan:
    local, remote = lr.partitions(None if whole_lists else cfg.ps)
    mapper = interleave if interleaved else segregate
    warps = mapper(len(local), len(remote), cfg.dist)
    return map_to_blocks(warps, cfg.wpb, dim, cfg.ps, local, remote)
