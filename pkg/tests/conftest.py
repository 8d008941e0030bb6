import numpy as np
import pytest

from pipeshard.costmodel import HardwareProfile, Latencies
from pipeshard.workload import LOCAL, REMOTE, NeighborPartition


def hand_profile(num_sms: int = 1, warps: int = 64) -> HardwareProfile:
    # LL = 3 + |p|, LR = 9 + |p|, AC = 2|p| at D=1
    lat = Latencies(remote_get_base=9, local_load_base=3, per_elem_remote=1,
                    per_elem_local=1, per_elem_compute=2)
    return HardwareProfile("hand", num_sms, warps, 48 * 1024, 1 << 30, lat)


def parts(kind: str, sizes, start: int = 0) -> tuple:
    out, nid = [], start
    for t, n in enumerate(sizes):
        out.append(NeighborPartition(t, np.arange(nid, nid + n), kind))
        nid += n
    return tuple(out)


@pytest.fixture
def hand_hw():
    return hand_profile()


__all__ = ["hand_profile", "parts", "LOCAL", "REMOTE"]


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[name])
