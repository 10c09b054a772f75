"""Built-in hardware and model presets.

Per-layer byte splits are derived from the public architecture configs
at 2 bytes per element (bf16):

  Mixtral 8x7B:  32 layers, d_model 4096, 32 heads / 8 KV heads (dim 128),
                 d_ff 14336, 8 experts, vocab 32000
  Mixtral 8x22B: 56 layers, d_model 6144, 48 heads / 8 KV heads (dim 128),
                 d_ff 16384, 8 experts, vocab 32768
  Mistral 7B:    32 layers, d_model 4096, 32 heads / 8 KV heads (dim 128),
                 d_ff 14336, vocab 32000

Primitive times are rough seeds consistent with published component
runtimes on the corresponding machines; run calibration against measured
throughput before trusting absolute predictions.  The draft acceptance
probability is workload-specific and never shipped as a preset: supply it
yourself (typical measured ranges for a well-matched draft model are
0.6-0.9) or fit it from observations.
"""
from __future__ import annotations

from .errors import UnknownPreset
from .types import HardwareProfile, ModelSpec, validate_profile

GiB = 1024**3


def _attn_bytes(d_model: int, kv_dim: int, dtype: int) -> int:
    # q + o projections (d_model^2 each) and k + v projections (d_model x kv_dim)
    return dtype * 2 * (d_model * d_model + d_model * kv_dim)


def _moe_ffn_bytes(d_model: int, d_ff: int, n_expert: int, dtype: int) -> int:
    # three matrices (gate/up/down) per expert
    return dtype * 3 * d_model * d_ff * n_expert


def _embed_bytes(vocab: int, d_model: int, dtype: int) -> int:
    # input embedding + output head
    return dtype * 2 * vocab * d_model


MIXTRAL_8X7B = ModelSpec(
    name="mixtral-8x7b",
    n_layer=32,
    attn_bytes_per_layer=_attn_bytes(4096, 1024, 2),
    ffn_bytes_per_layer=_moe_ffn_bytes(4096, 14336, 8, 2),
    other_bytes=_embed_bytes(32000, 4096, 2),
    kv_bytes_per_token_per_layer=2 * 2 * 1024,  # k + v, kv_dim 1024, bf16
    dtype_bytes=2,
)

MIXTRAL_8X22B = ModelSpec(
    name="mixtral-8x22b",
    n_layer=56,
    attn_bytes_per_layer=_attn_bytes(6144, 1024, 2),
    ffn_bytes_per_layer=_moe_ffn_bytes(6144, 16384, 8, 2),
    other_bytes=_embed_bytes(32768, 6144, 2),
    kv_bytes_per_token_per_layer=2 * 2 * 1024,
    dtype_bytes=2,
)

MISTRAL_7B = ModelSpec(
    name="mistral-7b",
    n_layer=32,
    attn_bytes_per_layer=_attn_bytes(4096, 1024, 2),
    ffn_bytes_per_layer=2 * 3 * 4096 * 14336,
    other_bytes=_embed_bytes(32000, 4096, 2),
    kv_bytes_per_token_per_layer=2 * 2 * 1024,
    dtype_bytes=2,
)

# Workstation: RTX 4090 (24 GiB), PCIe 3.0 x16, i9-10980XE, 256 GiB DRAM,
# NVMe disk at 3.5 / 1.7 GB/s read / write.
ENV1 = HardwareProfile(
    gpu_mem_capacity=24 * GiB,
    cpu_mem_capacity=256 * GiB,
    disk_capacity=2048 * GiB,
    c2g_bandwidth=10.0e9,
    g2c_bandwidth=10.0e9,
    disk_read_bandwidth=3.5e9,
    disk_write_bandwidth=1.7e9,
    t_attn_cpu=2.7e-3,
    t_ffn_gpu=1.4e-3,
    t_draft_prefill_gpu=0.9,
    t_draft_decode_gpu=0.6,
    t_target_prefill_gpu=40.0,
)

# Cloud server: RTX 4090 (24 GiB), PCIe 4.0 x16, EPYC 7542, 448 GiB DRAM,
# no disk tier.  The 20 GB/s channel is the effective PCIe 4.0 x16 rate
# with pinned host memory.
ENV2 = HardwareProfile(
    gpu_mem_capacity=24 * GiB,
    cpu_mem_capacity=448 * GiB,
    disk_capacity=0,
    c2g_bandwidth=20.0e9,
    g2c_bandwidth=20.0e9,
    disk_read_bandwidth=0.0,
    disk_write_bandwidth=0.0,
    t_attn_cpu=6.5e-3,
    t_ffn_gpu=1.9e-3,
    t_draft_prefill_gpu=1.7,
    t_draft_decode_gpu=1.3,
    t_target_prefill_gpu=26.0,
)

_PRESETS: dict[str, tuple[HardwareProfile, ModelSpec, ModelSpec]] = {
    "env1_8x7b": (ENV1, MIXTRAL_8X7B, MISTRAL_7B),
    "env2_8x22b": (ENV2, MIXTRAL_8X22B, MISTRAL_7B),
}


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def preset(name: str) -> tuple[HardwareProfile, ModelSpec, ModelSpec]:
    """Return ``(hardware, target_model, draft_model)`` for a named setup."""
    try:
        hw, target, draft = _PRESETS[name]
    except KeyError:
        raise UnknownPreset(
            f"unknown preset '{name}'; available: {', '.join(preset_names())}"
        ) from None
    return validate_profile(hw), target, draft
