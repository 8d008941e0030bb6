"""Analytical resource model for the aggregation kernel and its hardware profiles."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

INT_BYTES = 4
FLOAT_BYTES = 4

PS_RANGE = (1, 32)
DIST_RANGE = (1, 16)
WPB_RANGE = (1, 16)


class ConfigError(ValueError):
    """Invalid kernel configuration or hardware profile."""


@dataclass(frozen=True)
class Latencies:
    remote_get_base: float = 0.0
    local_load_base: float = 0.0
    per_elem_remote: float = 1.0
    per_elem_local: float = 1.0
    per_elem_compute: float = 1.0


@dataclass(frozen=True)
class HardwareProfile:
    name: str
    num_sms: int
    max_warps_per_sm: int
    smem_per_sm_bytes: int
    device_mem_bytes: int
    latencies: Latencies = field(default_factory=Latencies)
    page_bytes: int = 4096
    max_blocks_per_sm: int = 32
    barrier_cycles: float = 0.0

    def __post_init__(self):
        for name in ("num_sms", "max_warps_per_sm", "smem_per_sm_bytes", "max_blocks_per_sm", "page_bytes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"hardware profile {name} must be >= 1")
        if self.device_mem_bytes < 0 or self.barrier_cycles < 0:
            raise ConfigError("hardware profile sizes must be >= 0")
        if any(v < 0 for v in asdict(self.latencies).values()):
            raise ConfigError("latencies must be >= 0")

    def with_latencies(self, **kw) -> "HardwareProfile":
        return replace(self, latencies=replace(self.latencies, **kw))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HardwareProfile":
        d = dict(d)
        lat = Latencies(**d.pop("latencies", {}))
        return cls(latencies=lat, **d)


@dataclass(frozen=True, order=True)
class KernelConfig:
    ps: int = 1
    dist: int = 1
    wpb: int = 1

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.ps, self.dist, self.wpb)

    def __str__(self):
        return f"(ps={self.ps}, dist={self.dist}, wpb={self.wpb})"


@dataclass(frozen=True)
class LaunchGeometry:
    num_warps: int
    num_blocks: int
    blocks_per_sm: float


# Cycles are abstract: one unit is the warp time to aggregate one embedding
# element.  With ~32 lanes per warp, a ~500-cycle global load is ~16000 units.
# remote_get_base is calibrated so the reference scenario (powerlaw N=10000,
# avg degree 16, 4 GPUs, D=16, ps=16/dist=1/wpb=2) spends 60% of its serial
# time in remote loads; see sim.calibrate_remote_base.
_REFERENCE_LATENCIES = Latencies(
    remote_get_base=12958.0,
    local_load_base=16000.0,
    per_elem_remote=2.0,
    per_elem_local=1.0,
    per_elem_compute=1.0,
)

_A100 = dict(max_warps_per_sm=64, smem_per_sm_bytes=164 * 1024, device_mem_bytes=40 * 1024**3,
             latencies=_REFERENCE_LATENCIES, page_bytes=4096, max_blocks_per_sm=64,
             barrier_cycles=4000.0)

PRESETS: dict[str, HardwareProfile] = {
    "a100": HardwareProfile(name="a100", num_sms=108, **_A100),
    # A100 SMs, but only 16 of them: desk-scale graphs are ~1000x smaller than
    # production inputs, and a full-size device would run them in one block wave.
    "a100-desk": HardwareProfile(name="a100-desk", num_sms=16, **_A100),
    "v100": HardwareProfile(
        name="v100", num_sms=80, max_warps_per_sm=64, smem_per_sm_bytes=96 * 1024,
        device_mem_bytes=16 * 1024**3, latencies=_REFERENCE_LATENCIES,
        page_bytes=4096, max_blocks_per_sm=64, barrier_cycles=4000.0),
}


def load_profile(name_or_path: str) -> HardwareProfile:
    """Resolve a preset name, a file path, or a file under $PIPESHARD_PROFILE_DIR."""
    if name_or_path in PRESETS:
        return PRESETS[name_or_path]
    path = Path(name_or_path)
    if not path.exists():
        pdir = os.environ.get("PIPESHARD_PROFILE_DIR")
        candidates = []
        if pdir:
            candidates = [Path(pdir) / name_or_path] + [
                Path(pdir) / f"{name_or_path}{ext}" for ext in (".toml", ".json")]
        for c in candidates:
            if c.exists():
                path = c
                break
        else:
            raise ConfigError(f"unknown hardware profile {name_or_path!r}")
    text = path.read_bytes()
    if path.suffix == ".toml":
        data = tomllib.loads(text.decode("utf-8"))
    else:
        data = json.loads(text)
    data.setdefault("name", path.stem)
    return HardwareProfile.from_dict(data)


def wpw(cfg: KernelConfig, dim: int) -> int:
    """Workload per warp in embedding elements."""
    return 2 * cfg.ps * dim * cfg.dist


def smem(cfg: KernelConfig, dim: int) -> int:
    """Shared memory bytes per block: neighbor ids plus doubled embedding buffers."""
    return cfg.ps * cfg.wpb * INT_BYTES + 2 * cfg.wpb * dim * FLOAT_BYTES


def launch_geometry(n_local_parts: int, n_remote_parts: int, cfg: KernelConfig,
                    hw: HardwareProfile) -> LaunchGeometry:
    num_warps = math.ceil(max(n_local_parts, n_remote_parts) / cfg.dist)
    num_blocks = math.ceil(num_warps / cfg.wpb)
    return LaunchGeometry(num_warps, num_blocks, num_blocks / hw.num_sms)


def validate(cfg: KernelConfig, hw: HardwareProfile, dim: int) -> list[str]:
    """Return the list of violated constraints; empty means the config is usable."""
    out = []
    for name, (lo, hi) in (("ps", PS_RANGE), ("dist", DIST_RANGE), ("wpb", WPB_RANGE)):
        v = getattr(cfg, name)
        if not (lo <= v <= hi):
            out.append(f"{name} range: {v} not in [{lo}, {hi}]")
    if dim < 1:
        out.append(f"dim: {dim} < 1")
    need = smem(cfg, max(dim, 1))
    if need > hw.smem_per_sm_bytes:
        out.append(f"smem: {need} B per block exceeds {hw.smem_per_sm_bytes} B per SM")
    if cfg.wpb > hw.max_warps_per_sm:
        out.append(f"warps: wpb={cfg.wpb} exceeds {hw.max_warps_per_sm} warp slots per SM")
    return out


def check(cfg: KernelConfig, hw: HardwareProfile, dim: int) -> None:
    problems = validate(cfg, hw, dim)
    if problems:
        raise ConfigError("; ".join(problems))
