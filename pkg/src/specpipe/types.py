"""Core domain types.

Unit conventions, used everywhere without exception: sizes in bytes,
times in seconds, bandwidths in bytes/second.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import (
    ConfigError,
    NegativeLatency,
    NonPositiveBandwidth,
    ValidationError,
    ZeroGpuMemory,
)


def _check_unknown(cls, data: dict) -> None:
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key '{key}' for {cls.__name__}")


@dataclass(frozen=True)
class HardwareProfile:
    """Primitive bandwidths, latencies, and capacities of one machine.

    Construction performs no checks; run :func:`validate_profile` to
    enforce invariants (presets are validated on creation).
    """

    gpu_mem_capacity: int
    cpu_mem_capacity: int
    disk_capacity: int  # 0 disables the disk tier
    c2g_bandwidth: float
    g2c_bandwidth: float
    disk_read_bandwidth: float
    disk_write_bandwidth: float
    t_attn_cpu: float  # s per (token x batch-element x layer) of CPU attention
    t_ffn_gpu: float  # s per (layer x batch-element) of GPU FFN compute
    t_draft_prefill_gpu: float  # s per draft sub-batch prefill pass
    t_draft_decode_gpu: float  # s per draft sub-batch single-token decode step
    t_target_prefill_gpu: float  # s per target prefill micro-batch pass

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "HardwareProfile":
        _check_unknown(cls, data)
        return cls(**data)


_TIME_FIELDS = (
    "t_attn_cpu",
    "t_ffn_gpu",
    "t_draft_prefill_gpu",
    "t_draft_decode_gpu",
    "t_target_prefill_gpu",
)


def validate_profile(hw: HardwareProfile) -> HardwareProfile:
    """Check all HardwareProfile invariants; returns the profile unchanged.

    Raises the most specific error naming the violated field.
    """
    if hw.gpu_mem_capacity <= 0:
        raise ZeroGpuMemory("gpu_mem_capacity must be > 0")
    if hw.cpu_mem_capacity <= 0:
        raise ValidationError("cpu_mem_capacity must be > 0")
    if hw.disk_capacity < 0:
        raise ValidationError("disk_capacity must be >= 0")
    if hw.c2g_bandwidth <= 0:
        raise NonPositiveBandwidth("c2g_bandwidth must be > 0")
    if hw.g2c_bandwidth <= 0:
        raise NonPositiveBandwidth("g2c_bandwidth must be > 0")
    if hw.disk_capacity > 0:
        if hw.disk_read_bandwidth <= 0:
            raise NonPositiveBandwidth("disk_read_bandwidth must be > 0")
        if hw.disk_write_bandwidth <= 0:
            raise NonPositiveBandwidth("disk_write_bandwidth must be > 0")
    for name in _TIME_FIELDS:
        if getattr(hw, name) < 0:
            raise NegativeLatency(f"{name} must be >= 0")
    return hw


@dataclass(frozen=True)
class ModelSpec:
    """Per-layer byte sizes of one transformer model."""

    name: str
    n_layer: int
    attn_bytes_per_layer: int
    ffn_bytes_per_layer: int
    other_bytes: int  # embeddings / norms, always resident
    kv_bytes_per_token_per_layer: int
    dtype_bytes: int = 2

    def __post_init__(self):
        if self.n_layer < 1:
            raise ValidationError("n_layer must be >= 1")
        for name in (
            "attn_bytes_per_layer",
            "ffn_bytes_per_layer",
            "other_bytes",
            "kv_bytes_per_token_per_layer",
        ):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.dtype_bytes < 1:
            raise ValidationError("dtype_bytes must be >= 1")

    def total_bytes(self) -> int:
        return (
            self.n_layer * (self.attn_bytes_per_layer + self.ffn_bytes_per_layer)
            + self.other_bytes
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        _check_unknown(cls, data)
        return cls(**data)


@dataclass(frozen=True, order=True)
class Policy:
    """The 4-tuple searched by the planner.

    ``bs_decoding`` is the size of each of the two interleaved batches;
    the total in-flight sequence count under rotation is twice that.
    """

    bs_prefill: int
    bs_decoding: int
    bs_draft: int
    n_cand: int  # draft max new tokens per round

    def __post_init__(self):
        for name in ("bs_prefill", "bs_decoding", "bs_draft", "n_cand"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.bs_draft > self.bs_decoding:
            raise ValidationError("bs_draft must be <= bs_decoding")
        if self.bs_prefill > 2 * self.bs_decoding:
            raise ValidationError("bs_prefill must be <= 2 * bs_decoding")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.bs_prefill, self.bs_decoding, self.bs_draft, self.n_cand)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Policy":
        _check_unknown(cls, data)
        return cls(**data)


@dataclass(frozen=True)
class Workload:
    """Batch shape and generation budget for one run."""

    total_sequences: int  # total in-flight sequences (both interleaved batches)
    l_input: int  # mean prompt length, tokens
    max_new_tokens: int  # generation budget per sequence
    acceptance_p: float  # per-token draft acceptance probability

    def __post_init__(self):
        if self.total_sequences < 1:
            raise ValidationError("total_sequences must be >= 1")
        if self.l_input < 1:
            raise ValidationError("l_input must be >= 1")
        if self.max_new_tokens < 1:
            raise ValidationError("max_new_tokens must be >= 1")
        if not 0.0 <= self.acceptance_p <= 1.0:
            raise ValidationError("acceptance_p must be in [0, 1]")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Workload":
        _check_unknown(cls, data)
        return cls(**data)
