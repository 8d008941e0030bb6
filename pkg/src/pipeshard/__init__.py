"""Hardware-free model of pipelined multi-GPU GNN neighbor aggregation."""

from .costmodel import HardwareProfile, KernelConfig, Latencies, PRESETS, load_profile
from .graph import CsrGraph, degree_stats, from_edges, gen_synthetic, load_edge_list
from .placement import plan_ne_placement, split_by_edges, translate
from .sim import MGG, ScheduleMode, SimReport, multi_gpu_run, simulate, simulate_baseline

__all__ = [
    "CsrGraph", "HardwareProfile", "KernelConfig", "Latencies", "MGG", "PRESETS",
    "ScheduleMode", "SimReport", "degree_stats", "from_edges", "gen_synthetic",
    "load_edge_list", "load_profile", "multi_gpu_run", "plan_ne_placement",
    "simulate", "simulate_baseline", "split_by_edges", "translate",
]
