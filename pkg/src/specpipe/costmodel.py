"""Closed-form latency, memory, and throughput model.

All operations are pure functions of (Policy, Workload, HardwareProfile,
target/draft ModelSpec).  The decoding stage is modeled as barrier-
synchronized rounds: per round the verified batch pays, per layer, the
max of CPU attention and FFN parameter load plus the GPU FFN compute,
while the drafted batch runs entirely on the GPU; wall-clock per round is
the max of the two sides.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .acceptance import AcceptanceModel, expected_accepted
from .types import HardwareProfile, ModelSpec, Policy, Workload


@dataclass(frozen=True)
class CostBreakdown:
    policy: Policy
    t_prefill: float
    t_decoding: float
    t_draft_per_round: float
    t_target_per_round: float
    rounds: int
    v_prefill: int
    v_decoding: int
    expected_tokens: float
    throughput: float
    feasible: bool


def prefill_time(policy: Policy, workload: Workload, hw: HardwareProfile) -> float:
    """GPU time of the micro-batched prefill pass (excluding KV offload)."""
    micro_batches = math.ceil(workload.total_sequences / policy.bs_prefill)
    return micro_batches * hw.t_target_prefill_gpu


def prefill_kv_offload_time(
    workload: Workload, hw: HardwareProfile, target: ModelSpec
) -> float:
    """Time to push the whole prefill KV cache over the G2C channel."""
    kv_bytes = (
        workload.total_sequences
        * workload.l_input
        * target.kv_bytes_per_token_per_layer
        * target.n_layer
    )
    return kv_bytes / hw.g2c_bandwidth


def draft_round_time(policy: Policy, workload: Workload, hw: HardwareProfile) -> float:
    """GPU time for one batch of draft generation, chunked by bs_draft."""
    chunks = math.ceil(policy.bs_decoding / policy.bs_draft)
    per_chunk = hw.t_draft_prefill_gpu + (policy.n_cand - 1) * hw.t_draft_decode_gpu
    return chunks * per_chunk


def target_round_time(
    policy: Policy,
    workload: Workload,
    hw: HardwareProfile,
    target: ModelSpec,
    strict_paper_approx: bool = False,
) -> float:
    """One verification pass over all layers for one decoding batch.

    Per layer: CPU attention and the FFN C2G load run in parallel
    (their max), then the GPU FFN compute.  ``strict_paper_approx``
    drops the GPU compute term, keeping only the max.
    """
    attn = policy.n_cand * policy.bs_decoding * hw.t_attn_cpu
    ffn_load = target.ffn_bytes_per_layer / hw.c2g_bandwidth
    ffn_gpu = 0.0 if strict_paper_approx else policy.bs_decoding * hw.t_ffn_gpu
    return target.n_layer * (max(attn, ffn_load) + ffn_gpu)


def decoding_rounds(policy: Policy, workload: Workload) -> int:
    model = AcceptanceModel(p=workload.acceptance_p, n_cand=policy.n_cand)
    return math.ceil(workload.max_new_tokens / expected_accepted(model))


def decoding_time(
    policy: Policy,
    workload: Workload,
    hw: HardwareProfile,
    target: ModelSpec,
    draft: ModelSpec,
    strict_paper_approx: bool = False,
    serial_sd: bool = False,
) -> tuple[float, int]:
    """(total decoding seconds, round count).

    One round advances both interleaved batches by one verify step in
    wall-clock max(target, draft); ``serial_sd`` replaces the max with
    the sum, modeling a loosely-coupled draft-then-verify pipeline.
    """
    rounds = decoding_rounds(policy, workload)
    t_target = target_round_time(policy, workload, hw, target, strict_paper_approx)
    t_draft = draft_round_time(policy, workload, hw)
    per_round = t_target + t_draft if serial_sd else max(t_target, t_draft)
    return rounds * per_round, rounds


def prefill_memory(policy: Policy, workload: Workload, target: ModelSpec) -> int:
    """Peak GPU bytes during prefill.

    Resident parameters are a two-layer sliding window (current layer
    plus prefetch placeholder) and the always-resident remainder; the KV
    cache is charged for one prefill micro-batch.
    """
    window = 2 * (target.attn_bytes_per_layer + target.ffn_bytes_per_layer)
    kv = (
        policy.bs_prefill
        * workload.l_input
        * target.kv_bytes_per_token_per_layer
        * target.n_layer
    )
    return window + target.other_bytes + kv


def decoding_memory(
    policy: Policy, workload: Workload, target: ModelSpec, draft: ModelSpec
) -> int:
    """Peak GPU bytes during decoding.

    Two-slot FFN window for the target, the fully-resident draft model,
    and the draft KV preallocated at worst-case generated length.
    """
    window = 2 * target.ffn_bytes_per_layer
    draft_kv = (
        policy.bs_draft
        * (workload.l_input + workload.max_new_tokens)
        * draft.kv_bytes_per_token_per_layer
        * draft.n_layer
    )
    return window + draft.total_bytes() + draft_kv


def overlapped_total_from_components(
    compute_cpu: float,
    weight_load: float,
    compute_gpu_draft: float,
    compute_gpu_target: float = 0.0,
) -> float:
    """Predicted overlapped decoding wall-clock from isolated component totals.

    The verification side overlaps CPU attention with weight loading
    (max) and then pays the target's GPU compute; the draft side runs
    concurrently, so the wall-clock is the max of the two sides.
    """
    verify = max(compute_cpu, weight_load) + compute_gpu_target
    return max(verify, compute_gpu_draft)


def evaluate(
    policy: Policy,
    workload: Workload,
    hw: HardwareProfile,
    target: ModelSpec,
    draft: ModelSpec,
    strict_paper_approx: bool = False,
    serial_sd: bool = False,
) -> CostBreakdown:
    """Assemble the full cost breakdown for one policy.

    Infeasible policies (peak GPU memory above capacity in either phase)
    get throughput 0.  Each sequence runs to its full generation budget;
    acceptance efficiency is absorbed into the round count.
    """
    t_pf = prefill_time(policy, workload, hw) + prefill_kv_offload_time(
        workload, hw, target
    )
    t_dec, rounds = decoding_time(
        policy, workload, hw, target, draft, strict_paper_approx, serial_sd
    )
    v_pf = prefill_memory(policy, workload, target)
    v_dec = decoding_memory(policy, workload, target, draft)
    feasible = max(v_pf, v_dec) <= hw.gpu_mem_capacity
    expected_tokens = float(workload.total_sequences * workload.max_new_tokens)
    throughput = expected_tokens / (t_pf + t_dec) if feasible else 0.0
    return CostBreakdown(
        policy=policy,
        t_prefill=t_pf,
        t_decoding=t_dec,
        t_draft_per_round=draft_round_time(policy, workload, hw),
        t_target_per_round=target_round_time(
            policy, workload, hw, target, strict_paper_approx
        ),
        rounds=rounds,
        v_prefill=v_pf,
        v_decoding=v_dec,
        expected_tokens=expected_tokens,
        throughput=throughput,
        feasible=feasible,
    )
