"""Discrete-event simulation of the LR/LL/AC aggregation pipeline on modeled SMs.

Machine model
-------------
Every SM owns a single compute port and a memory pipe.  A warp executes a
straight-line program of four op kinds:

* ``LL`` / ``LR`` - local / remote embedding load.  Goes to the memory pipe:
  one issue cycle of the warp, data arrives ``cost`` cycles after issue.
* ``WAIT`` - blocks the warp until a given load has arrived.  Costs nothing.
* ``AC`` - aggregation.  Holds the compute port for ``cost`` cycles.

Whenever the port is free the SM starts the AC of the lowest-id ready
resident warp.  Blocks are dispatched in id order to the SM with the most
free warp slots (then most free shared memory, then lowest id) and never
migrate.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .costmodel import FLOAT_BYTES, ConfigError, HardwareProfile, KernelConfig, check
from .graph import CsrGraph
from .placement import plan_ne_placement, split_by_edges
from .workload import LOCAL, REMOTE, KernelLaunchPlan, LocalRemoteSplit, build_plan, split_local_remote

LL, LR, WAIT, AC = 0, 1, 2, 3


class IntegrityError(ValueError):
    """A plan references partitions that do not exist."""


@dataclass(frozen=True)
class ScheduleMode:
    remote_mode: str = "async"          # sync | async
    mapping: str = "interleaved"        # interleaved | segregated
    granularity: str = "partitioned"    # partitioned | wholeNeighborList
    remote_transport: str = "fineGrained"  # fineGrained | paged

    def __post_init__(self):
        allowed = {
            "remote_mode": ("sync", "async"),
            "mapping": ("interleaved", "segregated"),
            "granularity": ("partitioned", "wholeNeighborList"),
            "remote_transport": ("fineGrained", "paged"),
        }
        for name, values in allowed.items():
            if getattr(self, name) not in values:
                raise ConfigError(f"{name} must be one of {values}, got {getattr(self, name)!r}")


MGG = ScheduleMode()


@dataclass(frozen=True)
class SimReport:
    total_cycles: float
    achieved_occupancy: float
    sm_utilization: float
    stage_busy_cycles: dict
    remote_bytes: int
    num_warps: int
    num_blocks: int
    critical_path_cycles: float
    event_trace: tuple | None = field(default=None, repr=False)

    def to_dict(self, include_trace: bool = False) -> dict:
        d = asdict(self)
        d.pop("event_trace")
        if include_trace and self.event_trace is not None:
            d["event_trace"] = [list(e) for e in self.event_trace]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cycle", "sm", "warp", "stage", "event"])
        for row in self.event_trace or ():
            w.writerow(row)
        return buf.getvalue()


@dataclass(frozen=True)
class MultiGpuReport:
    per_gpu: tuple[SimReport, ...]
    aggregate_cycles: float
    remote_fraction: float

    def to_dict(self) -> dict:
        return {
            "aggregate_cycles": self.aggregate_cycles,
            "remote_fraction": self.remote_fraction,
            "per_gpu": [r.to_dict() for r in self.per_gpu],
        }


# ---------------------------------------------------------------------------
# cost functions

def paged_bytes(neighbors: np.ndarray, dim: int, page_bytes: int) -> int:
    """Bytes moved when each embedding drags in every page it overlaps."""
    emb = dim * FLOAT_BYTES
    start = neighbors.astype(np.int64) * emb
    pages = (start + emb - 1) // page_bytes - start // page_bytes + 1
    return int(pages.sum()) * page_bytes


class _Costs:
    def __init__(self, hw: HardwareProfile, dim: int, paged: bool):
        self.lat = hw.latencies
        self.dim = dim
        self.paged = paged
        self.page_bytes = hw.page_bytes

    def ll(self, part) -> float:
        return self.lat.local_load_base + part.size * self.dim * self.lat.per_elem_local

    def remote_bytes(self, part) -> int:
        if self.paged:
            return paged_bytes(part.neighbors, self.dim, self.page_bytes)
        return part.size * self.dim * FLOAT_BYTES

    def lr(self, part) -> float:
        elems = self.remote_bytes(part) / FLOAT_BYTES
        return self.lat.remote_get_base + elems * self.lat.per_elem_remote

    def ac(self, part) -> float:
        return part.size * self.dim * self.lat.per_elem_compute

    def table(self, plan: KernelLaunchPlan) -> "_CostTable":
        """The same costs for every partition of ``plan`` at once."""
        lat, dim = self.lat, self.dim
        ls, rs = plan.local_sizes, plan.remote_sizes
        if self.paged and len(rs):
            emb = dim * FLOAT_BYTES
            nb = np.concatenate([p.neighbors for p in plan.remote_parts]).astype(np.int64) * emb
            pages = (nb + emb - 1) // self.page_bytes - nb // self.page_bytes + 1
            starts = np.concatenate(([0], np.cumsum(rs)[:-1]))
            rbytes = np.add.reduceat(pages, starts) * self.page_bytes
        else:
            rbytes = rs * (dim * FLOAT_BYTES)
        return _CostTable(
            ll=(lat.local_load_base + ls * (dim * lat.per_elem_local)).tolist(),
            lr=(lat.remote_get_base + rbytes / FLOAT_BYTES * lat.per_elem_remote).tolist(),
            ac_local=(ls * (dim * lat.per_elem_compute)).astype(float).tolist(),
            ac_remote=(rs * (dim * lat.per_elem_compute)).astype(float).tolist(),
            remote_bytes=rbytes.astype(np.int64).tolist(),
        )


@dataclass
class _CostTable:
    ll: list
    lr: list
    ac_local: list
    ac_remote: list
    remote_bytes: list


# ---------------------------------------------------------------------------
# warp programs

def _check_plan(plan: KernelLaunchPlan) -> None:
    for kind, n, attr in ((LOCAL, len(plan.local_parts), "local"), (REMOTE, len(plan.remote_parts), "remote")):
        idx = np.fromiter((i for w in plan.warps for i in getattr(w, attr)), np.int64)
        bad = idx[(idx < 0) | (idx >= n)]
        if len(bad):
            owner = next(w.warp_id for w in plan.warps if int(bad[0]) in getattr(w, attr))
            raise IntegrityError(f"warp {owner} references unknown {kind} partition {int(bad[0])}")
        dup = np.flatnonzero(np.bincount(idx, minlength=n) > 1)
        if len(dup):
            raise IntegrityError(f"{kind} partition {int(dup[0])} assigned to more than one warp")


def _update_targets(plan: KernelLaunchPlan) -> set:
    # the first partition of every target node carries the dense update surcharge
    first = {}
    for kind in (LOCAL, REMOTE):
        for i, p in enumerate(plan.parts(kind)):
            first.setdefault(p.target, (kind, i))
    return set(first.values())


def _programs(plan, costs: _Costs, remote_mode: str, update_cost: float):
    """Per-warp op lists: (op, cost, mem_slot) tuples."""
    ct = costs.table(plan)
    ll, lr, acl, acr = ct.ll, ct.lr, ct.ac_local, ct.ac_remote
    if update_cost:
        acl, acr = list(acl), list(acr)
        for kind, i in _update_targets(plan):
            (acl if kind == LOCAL else acr)[i] += update_cost
    prefetch = remote_mode == "async"
    progs = []
    for w in plan.warps:
        ops = []
        mem = 0
        loc, rem = w.local, w.remote
        for k in range(max(len(loc), len(rem))):
            ri = rem[k] if k < len(rem) else None
            lr_slot = None
            if ri is not None and prefetch:
                lr_slot = mem
                ops.append((LR, lr[ri], mem))
                mem += 1
            if k < len(loc):
                li = loc[k]
                ops += [(LL, ll[li], mem), (WAIT, 0.0, mem), (AC, acl[li], None)]
                mem += 1
            if ri is not None:
                if lr_slot is None:
                    lr_slot = mem
                    ops.append((LR, lr[ri], mem))
                    mem += 1
                ops += [(WAIT, 0.0, lr_slot), (AC, acr[ri], None)]
        progs.append(ops)
    return progs, sum(ct.remote_bytes)


def _phase_programs(plan, costs: _Costs, update_cost: float):
    """Communication kernel (remote loads only) and compute kernel (no remote loads)."""
    ct = costs.table(plan)
    ll, lr, acl, acr = ct.ll, ct.lr, ct.ac_local, ct.ac_remote
    if update_cost:
        acl, acr = list(acl), list(acr)
        for kind, i in _update_targets(plan):
            (acl if kind == LOCAL else acr)[i] += update_cost
    comm, comp = [], []
    for w in plan.warps:
        # one remote partition in flight per warp: the staging buffer in
        # shared memory holds a single partition, as in the pipelined kernel
        ops = []
        for m, ri in enumerate(w.remote):
            ops += [(LR, lr[ri], m), (WAIT, 0.0, m)]
        comm.append(ops)
        ops = []
        mem = 0
        for li, ri in w.pairs():
            if li is not None:
                ops += [(LL, ll[li], mem), (WAIT, 0.0, mem), (AC, acl[li], None)]
                mem += 1
            if ri is not None:
                ops.append((AC, acr[ri], None))
        comp.append(ops)
    return comm, comp, sum(ct.remote_bytes)


def serial_cycles(ops) -> float:
    """Completion time of one warp program running alone on an idle SM."""
    t = 0.0
    ready = {}
    for op, cost, slot in ops:
        if op == WAIT:
            t = max(t, ready[slot])
        elif op == AC:
            t += max(cost, 1.0)
        else:
            ready[slot] = t + cost
            t += 1.0
    return t


# ---------------------------------------------------------------------------
# event loop

@dataclass
class _Outcome:
    total: float
    occupancy_num: float
    active_sm_cycles: float
    issue_cycles: float
    active_sms: int
    busy: dict
    trace: list | None


def _execute(programs, wpb: int, smem_per_block: int, hw: HardwareProfile,
             want_trace: bool) -> _Outcome:
    # Every load's arrival time is fixed when it issues, so the cycle at which
    # a warp can issue again is known immediately: one READY event per op.
    n_warps = len(programs)
    n_sm = hw.num_sms
    blocks = [range(i, min(i + wpb, n_warps)) for i in range(0, n_warps, wpb)]
    if blocks and (wpb > hw.max_warps_per_sm or smem_per_block > hw.smem_per_sm_bytes):
        raise ConfigError(
            f"block of {wpb} warps / {smem_per_block} B smem never fits an SM "
            f"({hw.max_warps_per_sm} warp slots, {hw.smem_per_sm_bytes} B)")

    free_slots = [hw.max_warps_per_sm] * n_sm
    free_smem = [hw.smem_per_sm_bytes] * n_sm
    free_blocks = [hw.max_blocks_per_sm] * n_sm
    used_sm = [False] * n_sm
    port_free = [0.0] * n_sm
    ready_heaps = [[] for _ in range(n_sm)]
    resident = [0] * n_sm
    last_change = [0.0] * n_sm
    active_cycles = 0.0

    pc = [0] * n_warps
    sm_of = [0] * n_warps
    born = [0.0] * n_warps
    mem_ready = [None] * n_warps
    left_in_block = [len(b) for b in blocks]
    lifetime = 0.0
    blocked = 0.0

    events = []
    seq = 0
    busy_ll = busy_lr = busy_ac = 0.0
    issue_cycles = 0.0
    trace = [] if want_trace else None
    dirty = set()
    next_block = 0
    finished = 0
    end_time = 0.0
    heappush, heappop = heapq.heappush, heapq.heappop

    def settle(w, t):
        """Run the warp's loads and WAITs from t and queue READY for its next AC."""
        nonlocal seq, blocked, busy_ll, busy_lr
        prog = programs[w]
        mr = mem_ready[w]
        i = pc[w]
        n = len(prog)
        ready = t
        while i < n:
            op, cost, slot = prog[i]
            if op == WAIT:
                at = mr[slot]
                if at > ready:
                    blocked += at - ready
                    ready = at
            elif op == AC:
                break
            else:
                # loads go to the memory pipe: one issue cycle, no port contention
                mr[slot] = ready + cost
                if op == LL:
                    busy_ll += cost
                else:
                    busy_lr += cost
                if trace is not None:
                    stage = "LL" if op == LL else "LR"
                    trace.append((ready, sm_of[w], w, stage, "begin"))
                    trace.append((ready + cost, sm_of[w], w, stage, "end"))
                ready += 1.0
            i += 1
        pc[w] = i
        heappush(events, (ready, seq, sm_of[w], w))
        seq += 1
        return ready

    def dispatch(t):
        nonlocal next_block, active_cycles
        while next_block < len(blocks):
            ws = blocks[next_block]
            need = len(ws)
            best_s = -1
            best_key = None
            for s in range(n_sm):
                if free_slots[s] >= need and free_smem[s] >= smem_per_block and free_blocks[s] > 0:
                    key = (free_slots[s], free_smem[s])
                    if best_key is None or key > best_key:
                        best_key, best_s = key, s
            if best_s < 0:
                return
            s = best_s
            next_block += 1
            free_slots[s] -= need
            free_smem[s] -= smem_per_block
            free_blocks[s] -= 1
            used_sm[s] = True
            if resident[s]:
                active_cycles += t - last_change[s]
            last_change[s] = t
            resident[s] += need
            for w in ws:
                sm_of[w] = s
                born[w] = t
                mem_ready[w] = {}
                settle(w, t)

    dispatch(0.0)
    if next_block < len(blocks) and not any(used_sm):
        raise ConfigError("no block can be placed on any SM")
    t = 0.0
    while True:
        for s in (dirty if len(dirty) < 2 else sorted(dirty)):
            heap = ready_heaps[s]
            if port_free[s] > t or not heap:
                continue
            w = heappop(heap)
            _, cost, _ = programs[w][pc[w]]
            pc[w] += 1
            occ = cost if cost > 1.0 else 1.0
            busy_ac += cost
            if trace is not None:
                trace.append((t, s, w, "AC", "begin"))
                trace.append((t + cost, s, w, "AC", "end"))
            issue_cycles += occ
            port_free[s] = t + occ
            if settle(w, t + occ) != t + occ:
                heappush(events, (t + occ, seq, s, -1))
                seq += 1
        dirty.clear()
        if not events:
            break
        t = events[0][0]
        end_time = t
        while events and events[0][0] == t:
            _, _, s, w = heappop(events)
            dirty.add(s)
            if w < 0:
                continue
            if pc[w] < len(programs[w]):
                heappush(ready_heaps[s], w)
                continue
            finished += 1
            lifetime += t - born[w]
            active_cycles += t - last_change[s]
            last_change[s] = t
            resident[s] -= 1
            b = w // wpb
            left_in_block[b] -= 1
            if left_in_block[b] == 0:
                free_slots[s] += len(blocks[b])
                free_smem[s] += smem_per_block
                free_blocks[s] += 1
                dispatch(t)

    if finished != n_warps:
        raise ConfigError(f"simulation stalled with {n_warps - finished} unfinished warps")
    if trace is not None:
        trace.sort()
    busy = {"LR": busy_lr, "LL": busy_ll, "AC": busy_ac}
    return _Outcome(end_time, lifetime - blocked, active_cycles, issue_cycles,
                    sum(used_sm), busy, trace)


def _report(outcomes: list[_Outcome], hw, remote_bytes, num_warps, num_blocks,
            critical) -> SimReport:
    total = sum(o.total for o in outcomes)
    occ_den = sum(o.active_sm_cycles for o in outcomes) * hw.max_warps_per_sm
    occ = sum(o.occupancy_num for o in outcomes) / occ_den if occ_den else 0.0
    util_den = sum(o.active_sms * o.total for o in outcomes)
    util = sum(o.issue_cycles for o in outcomes) / util_den if util_den else 0.0
    busy = {k: sum(o.busy[k] for o in outcomes) for k in ("LR", "LL", "AC")}
    trace = None
    if outcomes and outcomes[0].trace is not None:
        trace, offset = [], 0.0
        for o in outcomes:
            trace += [(c + offset, *rest) for c, *rest in o.trace]
            offset += o.total
        trace = tuple(trace)
    return SimReport(total, min(occ, 1.0), min(util, 1.0), busy, remote_bytes,
                     num_warps, num_blocks, critical, trace)


def simulate(plan: KernelLaunchPlan, hw: HardwareProfile, dim: int, mode: ScheduleMode = MGG, *,
             update_cost: float = 0.0, trace: bool = False) -> SimReport:
    """Run one GPU's kernel launch plan and report latency, occupancy and utilization."""
    _check_plan(plan)
    costs = _Costs(hw, dim, mode.remote_transport == "paged")
    progs, rbytes = _programs(plan, costs, mode.remote_mode, update_cost)
    out = _execute(progs, plan.wpb, plan.smem_bytes_per_block, hw, trace)
    critical = max((serial_cycles(p) for p in progs), default=0.0)
    return _report([out], hw, rbytes, len(progs), len(plan.blocks), critical)


BASELINES = ("no_np", "no_interleave", "phase_separated", "paged_remote")


def simulate_baseline(lr: LocalRemoteSplit, cfg: KernelConfig, hw: HardwareProfile, dim: int,
                      kind: str, *, update_cost: float = 0.0, trace: bool = False) -> SimReport:
    if kind == "no_np":
        plan = build_plan(lr, cfg, dim, whole_lists=True)
        return simulate(plan, hw, dim, MGG, update_cost=update_cost, trace=trace)
    if kind == "no_interleave":
        plan = build_plan(lr, cfg, dim, interleaved=False)
        return simulate(plan, hw, dim, MGG, update_cost=update_cost, trace=trace)
    if kind == "paged_remote":
        plan = build_plan(lr, cfg, dim)
        return simulate(plan, hw, dim, ScheduleMode(remote_transport="paged"),
                        update_cost=update_cost, trace=trace)
    if kind == "phase_separated":
        plan = build_plan(lr, cfg, dim)
        return simulate_phase_separated(plan, hw, dim, update_cost=update_cost, trace=trace)
    raise ConfigError(f"unknown baseline {kind!r}; expected one of {BASELINES}")


def simulate_phase_separated(plan: KernelLaunchPlan, hw: HardwareProfile, dim: int, *,
                             paged: bool = False, update_cost: float = 0.0,
                             trace: bool = False) -> SimReport:
    """All remote loads finish (kernel 1) before any aggregation starts (kernel 2)."""
    _check_plan(plan)
    costs = _Costs(hw, dim, paged)
    comm, comp, rbytes = _phase_programs(plan, costs, update_cost)
    outs = [_execute(comm, plan.wpb, plan.smem_bytes_per_block, hw, trace),
            _execute(comp, plan.wpb, plan.smem_bytes_per_block, hw, trace)]
    critical = max((serial_cycles(a) + serial_cycles(b) for a, b in zip(comm, comp)), default=0.0)
    return _report(outs, hw, rbytes, len(comp), len(plan.blocks), critical)


def gpu_workloads(g: CsrGraph, num_gpus: int, dim: int,
                  placement_mode: str = "follow-split") -> list[LocalRemoteSplit]:
    split = split_by_edges(g, num_gpus)
    placement = plan_ne_placement(g, num_gpus, placement_mode, dim, split=split)
    return [split_local_remote(g, split, placement, i) for i in range(num_gpus)]


def multi_gpu_run(g: CsrGraph, num_gpus: int, cfg: KernelConfig, hw: HardwareProfile,
                  mode: ScheduleMode = MGG, *, dim: int = 16, baseline: str | None = None,
                  placement_mode: str = "follow-split", update_cost: float = 0.0,
                  workloads: list[LocalRemoteSplit] | None = None,
                  trace: bool = False) -> MultiGpuReport:
    """Simulate every GPU independently; aggregate = slowest GPU + end barrier."""
    if num_gpus < 1:
        raise ConfigError("num_gpus must be >= 1")
    check(cfg, hw, dim)
    workloads = workloads or gpu_workloads(g, num_gpus, dim, placement_mode)
    reports = []
    for lr in workloads:
        if baseline is not None:
            reports.append(simulate_baseline(lr, cfg, hw, dim, baseline, update_cost=update_cost,
                                             trace=trace))
            continue
        plan = build_plan(lr, cfg, dim,
                          interleaved=mode.mapping == "interleaved",
                          whole_lists=mode.granularity == "wholeNeighborList")
        reports.append(simulate(plan, hw, dim, mode, update_cost=update_cost, trace=trace))
    remote = sum(lr.remote.num_edges for lr in workloads)
    local = sum(lr.local.num_edges for lr in workloads)
    frac = remote / (remote + local) if remote + local else 0.0
    agg = max(r.total_cycles for r in reports) + hw.barrier_cycles
    return MultiGpuReport(tuple(reports), agg, frac)


def remote_share(workloads: list[LocalRemoteSplit], cfg: KernelConfig, hw: HardwareProfile,
                 dim: int) -> float:
    """Fraction of serial (no-overlap) time spent in remote loads."""
    lr_t = other = 0.0
    costs = _Costs(hw, dim, False)
    for lr in workloads:
        plan = build_plan(lr, cfg, dim)
        lr_t += sum(costs.lr(p) for p in plan.remote_parts)
        other += sum(costs.ll(p) + costs.ac(p) for p in plan.local_parts)
        other += sum(costs.ac(p) for p in plan.remote_parts)
    return lr_t / (lr_t + other) if lr_t + other else 0.0


def calibrate_remote_base(workloads: list[LocalRemoteSplit], cfg: KernelConfig,
                          hw: HardwareProfile, dim: int, share: float = 0.6) -> float:
    """Solve remote_get_base so remote loads take ``share`` of the serial time."""
    costs = _Costs(hw.with_latencies(remote_get_base=0.0), dim, False)
    n_remote = 0
    variable = other = 0.0
    for lr in workloads:
        plan = build_plan(lr, cfg, dim)
        n_remote += len(plan.remote_parts)
        variable += sum(costs.lr(p) for p in plan.remote_parts)
        other += sum(costs.ll(p) + costs.ac(p) for p in plan.local_parts)
        other += sum(costs.ac(p) for p in plan.remote_parts)
    if n_remote == 0:
        raise ConfigError("workload has no remote partitions to calibrate against")
    base = (share / (1.0 - share) * other - variable) / n_remote
    return max(base, 0.0)
