"""Cross-iteration heuristic search over (ps, dist, wpb) plus an exhaustive oracle."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field, replace
from typing import Callable

from .costmodel import HardwareProfile, KernelConfig, validate
from .graph import CsrGraph
from .sim import MGG, ScheduleMode, gpu_workloads, multi_gpu_run

PS_STEPS = (1, 2, 4, 8, 16, 32)
DIST_STEPS = (1, 2, 4, 8, 16)
WPB_STEPS = (1, 2, 4, 8, 16)
STEPPED_GRID = (PS_STEPS, DIST_STEPS, WPB_STEPS)

MAX_GRID_POINTS = 1024


class TuneError(RuntimeError):
    def __init__(self, msg: str, config: KernelConfig | None = None):
        super().__init__(msg if config is None else f"{msg} at {config}")
        self.config = config


@dataclass
class Workload:
    """A graph sharded over ``num_gpus``; per-GPU splits are built once and reused."""
    graph: CsrGraph
    num_gpus: int
    dim: int = 16
    placement_mode: str = "follow-split"
    mode: ScheduleMode = MGG
    _splits: list | None = field(default=None, repr=False)

    def splits(self):
        if self._splits is None:
            self._splits = gpu_workloads(self.graph, self.num_gpus, self.dim, self.placement_mode)
        return self._splits


def simulate_cycles(workload: Workload, cfg: KernelConfig, hw: HardwareProfile, dim: int) -> float:
    run = multi_gpu_run(workload.graph, workload.num_gpus, cfg, hw, workload.mode,
                        dim=dim, workloads=workload.splits())
    return run.aggregate_cycles


SimulateFn = Callable[[object, KernelConfig, HardwareProfile, int], float]


@dataclass
class TuneTrace:
    entries: list[tuple[KernelConfig, float]]
    best_config: KernelConfig
    best_cycles: float
    stop_reason: str = ""

    @property
    def iterations(self) -> int:
        return len(self.entries)

    def ranks(self) -> list[int]:
        order = sorted(range(len(self.entries)), key=lambda i: (self.entries[i][1], i))
        rank = [0] * len(order)
        for r, i in enumerate(order, start=1):
            rank[i] = r
        return rank

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ps", "dist", "wpb", "cycles", "rank"])
        for (cfg, cycles), r in zip(self.entries, self.ranks()):
            w.writerow([cfg.ps, cfg.dist, cfg.wpb, cycles, r])
        return buf.getvalue()


class _Stop(Exception):
    pass


def optimize(workload, hw: HardwareProfile, dim: int, simulate: SimulateFn | None = None, *,
             max_evals: int = 15, retreat: str = "latency") -> TuneTrace:
    """Coordinate ascent: ps, then dist, then wpb, with one ps retreat.

    Every parameter starts at 1 and walks up its geometric step list while
    latency strictly drops.  If raising wpb ever makes things slower, ps falls
    back to its second-best value (``retreat="latency"``) or to the next lower
    step (``retreat="value"``) and the wpb ascent is repeated once.  The
    search stops early once the last three measurements all rank below the
    third-lowest latency recorded so far, or when ``max_evals`` is reached.
    """
    if retreat not in ("latency", "value"):
        raise ValueError("retreat must be 'latency' or 'value'")
    simulate = simulate or simulate_cycles
    table: dict[KernelConfig, float] = {}
    entries: list[tuple[KernelConfig, float]] = []
    inf = float("inf")

    def measure(cfg: KernelConfig) -> float:
        if cfg in table:
            return table[cfg]
        if validate(cfg, hw, dim):
            return inf
        if len(entries) >= max_evals:
            raise _Stop("budget")
        try:
            cycles = float(simulate(workload, cfg, hw, dim))
        except Exception as exc:
            raise TuneError(f"simulation failed: {exc}", cfg) from exc
        table[cfg] = cycles
        entries.append((cfg, cycles))
        if len(entries) >= 6:
            third = sorted(c for _, c in entries)[2]
            if all(c > third for _, c in entries[-3:]):
                raise _Stop("top-3")
        return cycles

    def ascend(start: KernelConfig, name: str, steps) -> tuple[KernelConfig, bool]:
        best_cfg, best = start, measure(start)
        for v in steps:
            if v <= getattr(start, name):
                continue
            cand = replace(best_cfg, **{name: v})
            c = measure(cand)
            if c < best:
                best_cfg, best = cand, c
            else:
                return best_cfg, c > best
        return best_cfg, False

    reason = "converged"
    try:
        cfg, _ = ascend(KernelConfig(1, 1, 1), "ps", PS_STEPS)
        ps_best = cfg.ps
        cfg, _ = ascend(cfg, "dist", DIST_STEPS)
        cfg, worsened = ascend(cfg, "wpb", WPB_STEPS)
        if worsened:
            if retreat == "latency":
                tried = sorted((c, k.ps) for k, c in table.items()
                               if k.dist == 1 and k.wpb == 1 and k.ps != ps_best)
                alt = tried[0][1] if tried else None
            else:
                lower = [p for p in PS_STEPS if p < cfg.ps]
                alt = lower[-1] if lower else None
            if alt is not None:
                ascend(KernelConfig(alt, cfg.dist, 1), "wpb", WPB_STEPS)
    except _Stop as stop:
        reason = str(stop)

    if not entries:
        raise TuneError("no valid configuration could be evaluated")
    best_cfg, best = min(entries, key=lambda e: e[1])
    return TuneTrace(entries, best_cfg, best, reason)


def _grid_configs(grid) -> list[KernelConfig]:
    if isinstance(grid, tuple) and len(grid) == 3 and all(isinstance(g, (tuple, list, range)) for g in grid):
        return [KernelConfig(p, d, w) for p, d, w in itertools.product(*grid)]
    return [c if isinstance(c, KernelConfig) else KernelConfig(*c) for c in grid]


def exhaustive(workload, hw: HardwareProfile, dim: int, grid=STEPPED_GRID,
               simulate: SimulateFn | None = None) -> tuple[KernelConfig, list[tuple[KernelConfig, float]]]:
    """Evaluate every valid grid point; returns the best config and the table sorted by cycles."""
    simulate = simulate or simulate_cycles
    configs = _grid_configs(grid)
    if len(configs) > MAX_GRID_POINTS:
        raise TuneError(f"grid has {len(configs)} points; limit is {MAX_GRID_POINTS}")
    valid = [c for c in configs if not validate(c, hw, dim)]
    if not valid:
        raise TuneError("grid contains no valid configuration")
    table = []
    for c in valid:
        try:
            table.append((c, float(simulate(workload, c, hw, dim))))
        except Exception as exc:
            raise TuneError(f"simulation failed: {exc}", c) from exc
    table.sort(key=lambda e: e[1])
    return table[0][0], table
