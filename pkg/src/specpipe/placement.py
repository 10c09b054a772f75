"""Tiered tensor placement and the per-layer prefetch schedule.

Tensor groups are assigned to GPU / CPU / disk by a fixed priority order;
only CPU memory interfaces with both GPU memory and disk, so disk-resident
layers are always staged through CPU by the prefetch schedule.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InfeasiblePlan, InsufficientTotalMemory
from .types import HardwareProfile, ModelSpec, Policy, Workload

GPU = "GPU"
CPU = "CPU"
DISK = "DISK"

KINDS = ("attention_params", "ffn_params", "kv_cache", "draft_params", "draft_kv", "other")
_KIND_ORDER = {k: i for i, k in enumerate(KINDS)}

PREFILL = "prefill"
DECODING = "decoding"


@dataclass(frozen=True)
class TensorGroup:
    id: str
    kind: str
    layer: int | None
    bytes: int
    phase_relevance: str  # prefill | decoding | both

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown tensor kind '{self.kind}'")
        if self.bytes < 0:
            raise ValueError("bytes must be >= 0")
        per_layer = self.kind in ("attention_params", "ffn_params")
        if per_layer != (self.layer is not None):
            raise ValueError("layer must be present iff the kind is per-layer")

    def sort_key(self) -> tuple:
        layer = self.layer if self.layer is not None else -1
        return (layer, _KIND_ORDER[self.kind], self.id)


@dataclass(frozen=True)
class PrefetchOp:
    trigger: int  # layer index whose execution start fires the move
    group_id: str
    src: str
    dst: str


@dataclass
class PlacementPlan:
    phase: str
    assignments: dict[str, str]  # group id -> tier
    groups: dict[str, TensorGroup]
    pinned_gpu: set[str]
    window_bytes: int  # GPU bytes reserved for the two-slot layer window
    prefetch_ops: list[PrefetchOp] = field(default_factory=list)

    def tier_bytes(self, tier: str) -> int:
        return sum(
            self.groups[gid].bytes for gid, t in self.assignments.items() if t == tier
        )

    def gpu_bytes_with_window(self) -> int:
        return self.tier_bytes(GPU) + self.window_bytes

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "window_bytes": self.window_bytes,
            "assignments": {
                gid: self.assignments[gid] for gid in sorted(self.assignments)
            },
            "pinned_gpu": sorted(self.pinned_gpu),
            "prefetch_ops": [
                {
                    "trigger": op.trigger,
                    "group_id": op.group_id,
                    "from": op.src,
                    "to": op.dst,
                }
                for op in self.prefetch_ops
            ],
        }


def tensor_groups(
    target: ModelSpec,
    draft: ModelSpec,
    policy: Policy,
    workload: Workload,
    phase: str,
) -> list[TensorGroup]:
    """Enumerate every tensor group the plan must place, in canonical order."""
    groups: list[TensorGroup] = []
    for layer in range(target.n_layer):
        groups.append(
            TensorGroup(
                id=f"target/attn/{layer:03d}",
                kind="attention_params",
                layer=layer,
                bytes=target.attn_bytes_per_layer,
                phase_relevance="both",
            )
        )
        groups.append(
            TensorGroup(
                id=f"target/ffn/{layer:03d}",
                kind="ffn_params",
                layer=layer,
                bytes=target.ffn_bytes_per_layer,
                phase_relevance="both",
            )
        )
    groups.append(
        TensorGroup(
            id="target/other",
            kind="other",
            layer=None,
            bytes=target.other_bytes,
            phase_relevance="both",
        )
    )
    kv_tokens = workload.l_input + workload.max_new_tokens
    groups.append(
        TensorGroup(
            id="target/kv",
            kind="kv_cache",
            layer=None,
            bytes=workload.total_sequences
            * kv_tokens
            * target.kv_bytes_per_token_per_layer
            * target.n_layer,
            phase_relevance="both",
        )
    )
    if phase == DECODING:
        groups.append(
            TensorGroup(
                id="draft/params",
                kind="draft_params",
                layer=None,
                bytes=draft.total_bytes(),
                phase_relevance="decoding",
            )
        )
        groups.append(
            TensorGroup(
                id="draft/kv",
                kind="draft_kv",
                layer=None,
                bytes=policy.bs_draft
                * kv_tokens
                * draft.kv_bytes_per_token_per_layer
                * draft.n_layer,
                phase_relevance="decoding",
            )
        )
    return sorted(groups, key=TensorGroup.sort_key)


def assign_tiers(
    target: ModelSpec,
    draft: ModelSpec,
    hw: HardwareProfile,
    policy: Policy,
    workload: Workload,
    phase: str,
) -> PlacementPlan:
    """Assign every tensor group to a tier by descending priority.

    Priorities: (1) a two-slot GPU window for the current + next layer,
    (2) draft parameters and draft KV on GPU during decoding, (3) extra
    target layers pinned to leftover GPU memory by ascending layer index,
    (4) everything else to CPU, (5) overflow to disk.  Deterministic by
    construction.
    """
    if phase not in (PREFILL, DECODING):
        raise ValueError(f"unknown phase '{phase}'")
    groups = tensor_groups(target, draft, policy, workload, phase)
    by_id = {g.id: g for g in groups}

    if phase == PREFILL:
        # two full-layer slots plus the KV placeholder for one micro-batch
        window = 2 * (
            target.attn_bytes_per_layer + target.ffn_bytes_per_layer
        ) + (
            policy.bs_prefill
            * workload.l_input
            * target.kv_bytes_per_token_per_layer
            * target.n_layer
        )
    else:
        window = 2 * target.ffn_bytes_per_layer

    assignments: dict[str, str] = {}
    pinned: set[str] = set()
    gpu_used = window

    if phase == PREFILL:
        assignments["target/other"] = GPU
        pinned.add("target/other")
        gpu_used += by_id["target/other"].bytes
    else:
        for gid in ("draft/params", "draft/kv"):
            assignments[gid] = GPU
            pinned.add(gid)
            gpu_used += by_id[gid].bytes
    if gpu_used > hw.gpu_mem_capacity:
        raise InfeasiblePlan(
            f"mandatory GPU-resident set ({gpu_used} B) exceeds capacity "
            f"({hw.gpu_mem_capacity} B) in {phase}"
        )

    # low-yield pinning: fill remaining GPU headroom with target layer
    # groups in canonical order (ascending layer, attention before FFN)
    for g in groups:
        if g.id in assignments:
            continue
        if g.kind in ("attention_params", "ffn_params"):
            if phase == DECODING and g.kind == "attention_params":
                continue  # attention runs on the CPU during decoding
            if gpu_used + g.bytes <= hw.gpu_mem_capacity:
                assignments[g.id] = GPU
                pinned.add(g.id)
                gpu_used += g.bytes

    cpu_used = 0
    disk_used = 0
    for g in groups:
        if g.id in assignments:
            continue
        if cpu_used + g.bytes <= hw.cpu_mem_capacity:
            assignments[g.id] = CPU
            cpu_used += g.bytes
        elif hw.disk_capacity > 0 and disk_used + g.bytes <= hw.disk_capacity:
            assignments[g.id] = DISK
            disk_used += g.bytes
        else:
            raise InsufficientTotalMemory(
                f"group '{g.id}' ({g.bytes} B) does not fit in any tier"
            )

    plan = PlacementPlan(
        phase=phase,
        assignments=assignments,
        groups=by_id,
        pinned_gpu=pinned,
        window_bytes=window,
    )
    plan.prefetch_ops = prefetch_schedule(plan, target, phase)
    return plan


def prefetch_schedule(
    plan: PlacementPlan, target: ModelSpec, phase: str
) -> list[PrefetchOp]:
    """Ordered moves overlapping I/O with compute.

    For each layer i executed: load its FFN into the GPU window slot
    (unless pinned), and if layer i+1 lives on disk, stage its parameters
    into CPU memory.  At most one GPU-bound and one CPU-bound transfer
    are in flight per trigger.
    """
    ops: list[PrefetchOp] = []
    for layer in range(target.n_layer):
        ffn_id = f"target/ffn/{layer:03d}"
        if plan.assignments.get(ffn_id) != GPU:
            ops.append(PrefetchOp(trigger=layer, group_id=ffn_id, src=CPU, dst=GPU))
        if layer + 1 < target.n_layer:
            nxt = layer + 1
            for gid in (f"target/attn/{nxt:03d}", f"target/ffn/{nxt:03d}"):
                if plan.assignments.get(gid) == DISK:
                    ops.append(
                        PrefetchOp(trigger=layer, group_id=gid, src=DISK, dst=CPU)
                    )
                    break  # one CPU-bound transfer per trigger
    return ops
