import pytest

from specpipe.types import HardwareProfile, ModelSpec, Policy, Workload

GiB = 1024**3


def small_target(n_layer: int = 4) -> ModelSpec:
    return ModelSpec(
        name="toy-target",
        n_layer=n_layer,
        attn_bytes_per_layer=64 * 1024**2,
        ffn_bytes_per_layer=256 * 1024**2,
        other_bytes=128 * 1024**2,
        kv_bytes_per_token_per_layer=4096,
    )


def small_draft(n_layer: int = 2) -> ModelSpec:
    return ModelSpec(
        name="toy-draft",
        n_layer=n_layer,
        attn_bytes_per_layer=16 * 1024**2,
        ffn_bytes_per_layer=48 * 1024**2,
        other_bytes=32 * 1024**2,
        kv_bytes_per_token_per_layer=1024,
    )


def small_hw(**overrides) -> HardwareProfile:
    base = dict(
        gpu_mem_capacity=8 * GiB,
        cpu_mem_capacity=64 * GiB,
        disk_capacity=512 * GiB,
        c2g_bandwidth=10.0e9,
        g2c_bandwidth=10.0e9,
        disk_read_bandwidth=3.0e9,
        disk_write_bandwidth=1.5e9,
        t_attn_cpu=1.0e-4,
        t_ffn_gpu=2.0e-4,
        t_draft_prefill_gpu=2.0e-3,
        t_draft_decode_gpu=1.0e-3,
        t_target_prefill_gpu=0.5,
    )
    base.update(overrides)
    return HardwareProfile(**base)


def small_workload(**overrides) -> Workload:
    base = dict(total_sequences=32, l_input=64, max_new_tokens=16, acceptance_p=0.8)
    base.update(overrides)
    return Workload(**base)


@pytest.fixture
def toy():
    """A small feasible configuration for fast simulator/planner tests."""
    return {
        "hw": small_hw(),
        "target": small_target(),
        "draft": small_draft(),
        "workload": small_workload(),
        "policy": Policy(bs_prefill=16, bs_decoding=16, bs_draft=8, n_cand=4),
    }
