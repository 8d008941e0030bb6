"""Batch front-end: ``pipeshard {partition,simulate,tune,compare}``.

Column orders are fixed:

* tune trace CSV:   ps,dist,wpb,cycles,rank,seed
* compare CSV:      mode,cycles,occupancy,sm_util,remote_bytes,ratio_vs_mgg,seed
* event trace CSV:  gpu,cycle,sm,warp,stage,event

Exit codes: 0 success, 1 invalid spec or failed validation, 2 unreadable or
malformed input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass

from .costmodel import ConfigError, HardwareProfile, KernelConfig, load_profile, validate
from .graph import CsrGraph, GraphInputError, degree_stats, gen_synthetic, load_csr, load_edge_list
from .placement import memory_footprint, plan_ne_placement, plan_to_json, split_by_edges
from .sim import BASELINES, MGG, ScheduleMode, gpu_workloads, multi_gpu_run
from .tuner import TuneError, Workload, optimize, simulate_cycles

EXIT_SPEC = 1
EXIT_INPUT = 2


class SpecError(Exception):
    """Bad command-line specification (exit 1)."""


@dataclass(frozen=True)
class RunSpec:
    graph_path: str | None
    synthetic: tuple[str, int, float] | None
    num_gpus: int
    profile: str
    dim: int
    cfg: KernelConfig | None
    seed: int
    placement: str = "follow-split"

    def echo(self) -> dict:
        return {
            "graph": self.graph_path,
            "synthetic": list(self.synthetic) if self.synthetic else None,
            "gpus": self.num_gpus,
            "profile": self.profile,
            "dim": self.dim,
            "config": list(self.cfg.as_tuple()) if self.cfg else None,
            "placement": self.placement,
            "seed": self.seed,
        }


def _parse_synthetic(text: str) -> tuple[str, int, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise SpecError(f"--synthetic expects kind:N:deg, got {text!r}")
    kind, n, deg = parts
    try:
        return kind, int(n), float(deg)
    except ValueError:
        raise SpecError(f"--synthetic expects integer N and numeric deg, got {text!r}") from None


def _spec(args, need_cfg: bool) -> RunSpec:
    if (args.graph is None) == (args.synthetic is None):
        raise SpecError("give exactly one of --graph or --synthetic")
    if args.gpus < 1:
        raise SpecError("--gpus must be >= 1")
    if args.dim < 1:
        raise SpecError("--dim must be >= 1")
    cfg = KernelConfig(args.ps, args.dist, args.wpb) if need_cfg else None
    syn = _parse_synthetic(args.synthetic) if args.synthetic else None
    return RunSpec(args.graph, syn, args.gpus, args.profile, args.dim, cfg, args.seed, args.placement)


def _load_graph(spec: RunSpec) -> CsrGraph:
    if spec.synthetic:
        kind, n, deg = spec.synthetic
        try:
            return gen_synthetic(kind, n, deg, spec.seed)
        except GraphInputError as exc:
            raise SpecError(str(exc)) from None
    if spec.graph_path.endswith(".csr"):
        with open(spec.graph_path, "rb") as fh:
            return load_csr(fh)
    with open(spec.graph_path, encoding="utf-8") as fh:
        return load_edge_list(fh)


def _profile(spec: RunSpec) -> HardwareProfile:
    try:
        return load_profile(spec.profile)
    except (ConfigError, TypeError, ValueError, OSError) as exc:
        raise SpecError(f"profile {spec.profile!r}: {exc}") from None


def _check_cfg(spec: RunSpec, hw: HardwareProfile) -> None:
    problems = validate(spec.cfg, hw, spec.dim)
    if problems:
        raise SpecError("invalid config " + str(spec.cfg) + ":\n  " + "\n  ".join(problems))


def _emit(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def cmd_partition(args) -> int:
    spec = _spec(args, need_cfg=False)
    g = _load_graph(spec)
    hw = _profile(spec)
    split = split_by_edges(g, spec.num_gpus)
    placement = plan_ne_placement(g, spec.num_gpus, spec.placement, spec.dim, split=split)
    fp = memory_footprint(g, placement, split, hw)
    plan = json.loads(plan_to_json(split, placement))
    plan["seed"] = spec.seed
    _emit(json.dumps(plan, indent=2, sort_keys=True) + "\n", args.out)
    ideal = -(-g.num_edges // spec.num_gpus)
    print(f"nodes={g.num_nodes} edges={g.num_edges} ideal_per_gpu={ideal} "
          f"max_degree={degree_stats(g).max} seed={spec.seed}", file=sys.stderr)
    for i, ((lb, ub), e) in enumerate(zip(split.chunk_ranges, split.chunk_edges(g))):
        print(f"gpu {i}: nodes [{lb}, {ub}) edges={e} ne_bytes={fp.ne_bytes[i]} "
              f"gp_bytes={fp.gp_bytes[i]}", file=sys.stderr)
    print(f"fits={fp.fits}", file=sys.stderr)
    return 0


def cmd_simulate(args) -> int:
    spec = _spec(args, need_cfg=True)
    g = _load_graph(spec)
    hw = _profile(spec)
    _check_cfg(spec, hw)
    mode = ScheduleMode(remote_mode=args.mode)
    run = multi_gpu_run(g, spec.num_gpus, spec.cfg, hw, mode, dim=spec.dim, baseline=args.baseline,
                        placement_mode=spec.placement, trace=bool(args.trace))
    out = {"spec": spec.echo(), "mode": args.mode, "baseline": args.baseline, **run.to_dict()}
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", args.out)
    if args.trace:
        rows = [["gpu", "cycle", "sm", "warp", "stage", "event"]]
        for gpu, rep in enumerate(run.per_gpu):
            rows += [[gpu, *e] for e in rep.event_trace or ()]
        _emit(_csv(rows), args.trace)
    return 0


def cmd_tune(args) -> int:
    spec = _spec(args, need_cfg=False)
    g = _load_graph(spec)
    hw = _profile(spec)
    w = Workload(g, spec.num_gpus, spec.dim, spec.placement)
    trace = optimize(w, hw, spec.dim, max_evals=args.max_evals)
    rows = [["ps", "dist", "wpb", "cycles", "rank", "seed"]]
    rows += [[c.ps, c.dist, c.wpb, cyc, r, spec.seed]
             for (c, cyc), r in zip(trace.entries, trace.ranks())]
    _emit(_csv(rows), args.out)
    base = dict(trace.entries).get(KernelConfig(1, 1, 1))
    if base is None:
        base = simulate_cycles(w, KernelConfig(1, 1, 1), hw, spec.dim)
    reduction = 1.0 - trace.best_cycles / base if base else 0.0
    print(f"best {trace.best_config} cycles={trace.best_cycles:.0f} "
          f"reduction_vs_111={reduction:.1%} evals={trace.iterations} "
          f"stop={trace.stop_reason} seed={spec.seed}", file=sys.stderr)
    return 0


def cmd_compare(args) -> int:
    spec = _spec(args, need_cfg=True)
    g = _load_graph(spec)
    hw = _profile(spec)
    _check_cfg(spec, hw)
    loads = gpu_workloads(g, spec.num_gpus, spec.dim, spec.placement)
    rows = [["mode", "cycles", "occupancy", "sm_util", "remote_bytes", "ratio_vs_mgg", "seed"]]
    mgg = None
    for name in ("MGG", *BASELINES):
        run = multi_gpu_run(g, spec.num_gpus, spec.cfg, hw, MGG, dim=spec.dim,
                            baseline=None if name == "MGG" else name, workloads=loads)
        reps = run.per_gpu
        occ = sum(r.achieved_occupancy for r in reps) / len(reps)
        util = sum(r.sm_utilization for r in reps) / len(reps)
        rbytes = sum(r.remote_bytes for r in reps)
        mgg = mgg or run.aggregate_cycles
        rows.append([name, run.aggregate_cycles, round(occ, 6), round(util, 6), rbytes,
                     round(run.aggregate_cycles / mgg, 6), spec.seed])
    _emit(_csv(rows), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--graph", help="edge-list text file, or binary CSR with a .csr suffix")
    common.add_argument("--synthetic", metavar="KIND:N:DEG", help="uniform or powerlaw generator")
    common.add_argument("--gpus", type=int, default=4)
    common.add_argument("--profile", default="a100-desk",
                        help="preset name or profile file (searched in $PIPESHARD_PROFILE_DIR)")
    common.add_argument("--dim", type=int, default=16)
    common.add_argument("--placement", choices=("follow-split", "equal-nodes"), default="follow-split")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file (default stdout)")

    cfg = argparse.ArgumentParser(add_help=False)
    cfg.add_argument("--ps", type=int, default=16)
    cfg.add_argument("--dist", type=int, default=1)
    cfg.add_argument("--wpb", type=int, default=2)

    p = argparse.ArgumentParser(prog="pipeshard", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("partition", parents=[common], help="edge-balanced split and placement plan")
    s = sub.add_parser("simulate", parents=[common, cfg], help="simulate one kernel config")
    s.add_argument("--mode", choices=("async", "sync"), default="async")
    s.add_argument("--baseline", choices=BASELINES)
    s.add_argument("--trace", metavar="CSV", help="write the event trace here")
    t = sub.add_parser("tune", parents=[common], help="heuristic (ps, dist, wpb) search")
    t.add_argument("--max-evals", type=int, default=15)
    sub.add_parser("compare", parents=[common, cfg], help="MGG against every ablation baseline")
    return p


_COMMANDS = {"partition": cmd_partition, "simulate": cmd_simulate, "tune": cmd_tune,
             "compare": cmd_compare}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (GraphInputError, OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SpecError, ConfigError, TuneError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
