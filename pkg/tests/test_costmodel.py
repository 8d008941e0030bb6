import json

import pytest

from pipeshard.costmodel import (PRESETS, ConfigError, HardwareProfile, KernelConfig, check,
                                 launch_geometry, load_profile, smem, validate, wpw)


def test_wpw_and_smem_examples():
    assert wpw(KernelConfig(1, 1, 1), 1) == 2
    assert wpw(KernelConfig(16, 2, 1), 602) == 38528
    assert wpw(KernelConfig(32, 16, 1), 16) == 16384
    assert smem(KernelConfig(1, 1, 1), 1) == 12
    assert smem(KernelConfig(16, 1, 2), 16) == 384
    assert smem(KernelConfig(32, 1, 16), 602) == 79104 <= PRESETS["a100"].smem_per_sm_bytes


def test_launch_geometry():
    hw = PRESETS["a100"]
    g = launch_geometry(4, 4, KernelConfig(1, 2, 1), hw)
    assert (g.num_warps, g.num_blocks) == (2, 2)
    g = launch_geometry(0, 0, KernelConfig(1, 1, 1), hw)
    assert (g.num_warps, g.num_blocks, g.blocks_per_sm) == (0, 0, 0)
    two = HardwareProfile("two", 2, 64, 1024, 0)
    g = launch_geometry(5, 0, KernelConfig(1, 1, 2), two)
    assert (g.num_warps, g.num_blocks, g.blocks_per_sm) == (5, 3, 1.5)


def test_validate():
    hw = PRESETS["a100"]
    assert any(v.startswith("ps range") for v in validate(KernelConfig(33, 1, 1), hw, 16))
    small = HardwareProfile("small", 1, 64, 100, 0)
    assert any(v.startswith("smem") for v in validate(KernelConfig(16, 1, 2), small, 16))
    assert validate(KernelConfig(16, 1, 2), hw, 16) == []
    with pytest.raises(ConfigError):
        check(KernelConfig(1, 0, 1), hw, 16)


def test_profile_rejects_nonsense():
    with pytest.raises(ConfigError):
        HardwareProfile("bad", 0, 64, 1024, 0)


def test_load_profile_sources(tmp_path, monkeypatch):
    assert load_profile("a100") is PRESETS["a100"]
    d = PRESETS["v100"].to_dict()
    d["name"] = "mine"
    (tmp_path / "mine.json").write_text(json.dumps(d))
    (tmp_path / "t.toml").write_text(
        'num_sms = 2\nmax_warps_per_sm = 8\nsmem_per_sm_bytes = 4096\ndevice_mem_bytes = 1\n'
        '[latencies]\nremote_get_base = 5.0\n')
    monkeypatch.setenv("PIPESHARD_PROFILE_DIR", str(tmp_path))
    assert load_profile("mine") == PRESETS["v100"].__class__.from_dict(d)
    t = load_profile("t")
    assert t.name == "t" and t.latencies.remote_get_base == 5.0
    with pytest.raises(ConfigError):
        load_profile("nope")


def test_monotone():
    base = KernelConfig(2, 2, 2)
    for field in ("ps", "dist", "wpb"):
        bigger = KernelConfig(**{**base.__dict__, field: 4})
        assert wpw(bigger, 8) >= wpw(base, 8) and smem(bigger, 8) >= smem(base, 8)
