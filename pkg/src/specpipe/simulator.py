"""Discrete-event simulation of the interleaved dual-batch pipeline.

Three exclusive resources (GPU compute, CPU compute, C2G channel) plus
G2C and disk channels.  Decoding rounds are barrier-synchronized: per
round one batch is verified layer by layer (CPU attention overlapped
with the FFN load, then the GPU FFN compute) while the other batch runs
draft generation on the GPU.  Draft work is scheduled into GPU gaps only
when it cannot delay a pending FFN compute, so the simulated round time
degenerates to the analytic max when overlap is full.
"""
from __future__ import annotations

import csv as _csv
import io
import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .acceptance import AcceptanceModel, sample_accepted
from .costmodel import decoding_memory, prefill_memory
from .errors import InfeasiblePlan
from .placement import DISK, PlacementPlan
from .types import HardwareProfile, ModelSpec, Policy, Workload

RESOURCES = ("GPU", "CPU", "IO_C2G", "IO_G2C", "IO_DISK")
LABELS = (
    "attn_cpu",
    "ffn_load",
    "ffn_gpu",
    "draft_prefill",
    "draft_decode",
    "kv_offload",
    "disk_prefetch",
    "barrier",
)


@dataclass(frozen=True)
class SimEvent:
    resource: str
    start: float
    end: float
    label: str
    batch: int | None = None
    layer: int | None = None
    round: int | None = None


@dataclass
class SimResult:
    trace: list[SimEvent]
    total_time: float
    tokens_generated: int
    throughput: float
    peak_gpu_bytes: int
    rounds_executed: int
    per_resource_busy: dict[str, float] = field(default_factory=dict)


def _busy(trace: list[SimEvent]) -> dict[str, float]:
    busy = {r: 0.0 for r in RESOURCES}
    for ev in trace:
        busy[ev.resource] += ev.end - ev.start
    return busy


def simulate_prefill(
    policy: Policy,
    workload: Workload,
    hw: HardwareProfile,
    target: ModelSpec,
    plan: PlacementPlan | None = None,
) -> SimResult:
    """Micro-batched prefill with KV offload overlapped into later batches."""
    bs = workload.total_sequences
    n_micro = math.ceil(bs / policy.bs_prefill)
    kv_per_seq = workload.l_input * target.kv_bytes_per_token_per_layer * target.n_layer

    trace: list[SimEvent] = []
    gpu_t = 0.0
    g2c_t = 0.0
    for m in range(n_micro):
        size = min(policy.bs_prefill, bs - m * policy.bs_prefill)
        start = gpu_t
        gpu_t = start + hw.t_target_prefill_gpu
        trace.append(SimEvent("GPU", start, gpu_t, "ffn_gpu", batch=None, round=m))
        off_start = max(gpu_t, g2c_t)
        off_dur = size * kv_per_seq / hw.g2c_bandwidth
        g2c_t = off_start + off_dur
        trace.append(
            SimEvent("IO_G2C", off_start, g2c_t, "kv_offload", batch=None, round=m)
        )
    total = max(gpu_t, g2c_t)
    return SimResult(
        trace=trace,
        total_time=total,
        tokens_generated=0,
        throughput=0.0,
        peak_gpu_bytes=prefill_memory(policy, workload, target),
        rounds_executed=n_micro,
        per_resource_busy=_busy(trace),
    )


def simulate_decoding(
    policy: Policy,
    workload: Workload,
    hw: HardwareProfile,
    target: ModelSpec,
    draft: ModelSpec,
    plan: PlacementPlan | None = None,
    seed: int = 0,
) -> SimResult:
    """Run barrier-synchronized decoding rounds until every sequence finishes.

    Peak GPU memory uses the same conservative accounting as the cost
    model (two-slot FFN window plus the resident draft footprint), so
    planner feasibility and simulated feasibility cannot diverge.
    """
    peak = decoding_memory(policy, workload, target, draft)
    if peak > hw.gpu_mem_capacity:
        raise InfeasiblePlan(
            f"decoding peak {peak} B exceeds GPU capacity {hw.gpu_mem_capacity} B"
        )

    pinned_layers = set()
    disk_ops = []
    if plan is not None:
        for layer in range(target.n_layer):
            if f"target/ffn/{layer:03d}" in plan.pinned_gpu:
                pinned_layers.add(layer)
        disk_ops = [
            op
            for op in plan.prefetch_ops
            if op.src == DISK and plan.assignments.get(op.group_id) == DISK
        ]

    rng = np.random.default_rng(seed)
    model = AcceptanceModel(p=workload.acceptance_p, n_cand=policy.n_cand)
    remaining = np.full(workload.total_sequences, workload.max_new_tokens, dtype=np.int64)

    attn_dur = policy.n_cand * policy.bs_decoding * hw.t_attn_cpu
    load_dur = target.ffn_bytes_per_layer / hw.c2g_bandwidth
    ffn_dur = policy.bs_decoding * hw.t_ffn_gpu
    chunks = math.ceil(policy.bs_decoding / policy.bs_draft)

    trace: list[SimEvent] = []
    now = 0.0
    rounds = 0
    # every sequence commits at least one token per round, so this loop
    # is bounded by max_new_tokens
    while remaining.any():
        verify_batch = rounds % 2
        draft_batch = 1 - verify_batch

        granules: deque[tuple[str, float]] = deque()
        for _ in range(chunks):
            granules.append(("draft_prefill", hw.t_draft_prefill_gpu))
            for _ in range(policy.n_cand - 1):
                granules.append(("draft_decode", hw.t_draft_decode_gpu))

        gpu_t = now
        cur = now
        disk_t = now
        for layer in range(target.n_layer):
            trace.append(
                SimEvent("CPU", cur, cur + attn_dur, "attn_cpu", verify_batch, layer, rounds)
            )
            f = 0.0 if layer in pinned_layers else load_dur
            if f > 0.0:
                trace.append(
                    SimEvent("IO_C2G", cur, cur + f, "ffn_load", verify_batch, layer, rounds)
                )
            ready = cur + max(attn_dur, f)
            # backfill draft granules that cannot delay the FFN compute
            while granules and gpu_t + granules[0][1] <= ready:
                label, dur = granules.popleft()
                trace.append(
                    SimEvent("GPU", gpu_t, gpu_t + dur, label, draft_batch, None, rounds)
                )
                gpu_t += dur
            start_g = max(ready, gpu_t)
            trace.append(
                SimEvent(
                    "GPU", start_g, start_g + ffn_dur, "ffn_gpu", verify_batch, layer, rounds
                )
            )
            gpu_t = start_g + ffn_dur
            cur = gpu_t
        while granules:
            label, dur = granules.popleft()
            trace.append(
                SimEvent("GPU", gpu_t, gpu_t + dur, label, draft_batch, None, rounds)
            )
            gpu_t += dur

        for op in disk_ops:
            group = plan.groups[op.group_id]
            start = max(now + op.trigger * (max(attn_dur, load_dur) + ffn_dur), disk_t)
            dur = group.bytes / hw.disk_read_bandwidth
            trace.append(
                SimEvent("IO_DISK", start, start + dur, "disk_prefetch", None, op.trigger, rounds)
            )
            disk_t = start + dur

        round_end = max(gpu_t, cur, disk_t)
        trace.append(SimEvent("GPU", round_end, round_end, "barrier", None, None, rounds))
        now = round_end

        accepted = sample_accepted(model, rng, size=remaining.size)
        remaining = np.maximum(remaining - accepted, 0)
        rounds += 1

    tokens = workload.total_sequences * workload.max_new_tokens
    throughput = tokens / now if now > 0 else 0.0
    return SimResult(
        trace=trace,
        total_time=now,
        tokens_generated=tokens,
        throughput=throughput,
        peak_gpu_bytes=peak,
        rounds_executed=rounds,
        per_resource_busy=_busy(trace),
    )


def simulate_run(
    policy: Policy,
    workload: Workload,
    hw: HardwareProfile,
    target: ModelSpec,
    draft: ModelSpec,
    prefill_plan: PlacementPlan | None = None,
    decoding_plan: PlacementPlan | None = None,
    seed: int = 0,
) -> SimResult:
    """Prefill followed by decoding on one timeline."""
    pre = simulate_prefill(policy, workload, hw, target, prefill_plan)
    dec = simulate_decoding(policy, workload, hw, target, draft, decoding_plan, seed)
    shift = pre.total_time
    shifted = [
        SimEvent(
            ev.resource, ev.start + shift, ev.end + shift, ev.label, ev.batch, ev.layer, ev.round
        )
        for ev in dec.trace
    ]
    trace = pre.trace + shifted
    total = pre.total_time + dec.total_time
    return SimResult(
        trace=trace,
        total_time=total,
        tokens_generated=dec.tokens_generated,
        throughput=dec.tokens_generated / total if total > 0 else 0.0,
        peak_gpu_bytes=max(pre.peak_gpu_bytes, dec.peak_gpu_bytes),
        rounds_executed=dec.rounds_executed,
        per_resource_busy=_busy(trace),
    )


def _sorted_events(result: SimResult) -> list[SimEvent]:
    return sorted(result.trace, key=lambda e: (e.start, e.resource, e.end, e.label))


def _event_row(ev: SimEvent) -> dict:
    return {
        "resource": ev.resource,
        "label": ev.label,
        "batch": ev.batch,
        "layer": ev.layer,
        "round": ev.round,
        "start_s": round(ev.start, 6),
        "end_s": round(ev.end, 6),
    }


_CSV_COLUMNS = ["resource", "label", "batch", "layer", "round", "start_s", "end_s"]


def export_trace(result: SimResult, format: str = "json") -> str:
    """Serialize a trace; timestamps carry microsecond precision.

    ``json`` and ``csv`` round-trip through :func:`parse_trace`;
    ``chrome`` emits a trace-viewer compatible document.
    """
    events = _sorted_events(result)
    if format == "json":
        doc = {
            "total_time_s": round(result.total_time, 6),
            "tokens_generated": result.tokens_generated,
            "throughput": round(result.throughput, 6),
            "peak_gpu_bytes": result.peak_gpu_bytes,
            "rounds_executed": result.rounds_executed,
            "per_resource_busy_s": {
                r: round(result.per_resource_busy.get(r, 0.0), 6) for r in RESOURCES
            },
            "events": [_event_row(ev) for ev in events],
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if format == "csv":
        buf = io.StringIO()
        writer = _csv.DictWriter(buf, fieldnames=_CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for ev in events:
            row = _event_row(ev)
            row["start_s"] = f"{row['start_s']:.6f}"
            row["end_s"] = f"{row['end_s']:.6f}"
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in _CSV_COLUMNS})
        return buf.getvalue()
    if format == "chrome":
        tids = {r: i for i, r in enumerate(RESOURCES)}
        trace_events = []
        for ev in events:
            trace_events.append(
                {
                    "name": ev.label,
                    "ph": "X",
                    "pid": 0,
                    "tid": tids[ev.resource],
                    "ts": round(ev.start * 1e6, 3),
                    "dur": round((ev.end - ev.start) * 1e6, 3),
                    "args": {"batch": ev.batch, "layer": ev.layer, "round": ev.round},
                }
            )
        meta = [
            {
                "name": "thread_name",
                "ph": "M",
                "pid": 0,
                "tid": tids[r],
                "args": {"name": r},
            }
            for r in RESOURCES
        ]
        return json.dumps({"traceEvents": meta + trace_events}, sort_keys=True, indent=2) + "\n"
    raise ValueError(f"unknown trace format '{format}'")


def parse_trace(doc: str, format: str = "json") -> SimResult:
    """Inverse of :func:`export_trace` for the json and csv formats."""
    if format == "json":
        data = json.loads(doc)
        events = [
            SimEvent(
                resource=row["resource"],
                start=row["start_s"],
                end=row["end_s"],
                label=row["label"],
                batch=row["batch"],
                layer=row["layer"],
                round=row["round"],
            )
            for row in data["events"]
        ]
        return SimResult(
            trace=events,
            total_time=data["total_time_s"],
            tokens_generated=data["tokens_generated"],
            throughput=data["throughput"],
            peak_gpu_bytes=data["peak_gpu_bytes"],
            rounds_executed=data["rounds_executed"],
            per_resource_busy=dict(data["per_resource_busy_s"]),
        )
    if format == "csv":
        reader = _csv.DictReader(io.StringIO(doc))
        events = []
        for row in reader:
            events.append(
                SimEvent(
                    resource=row["resource"],
                    start=float(row["start_s"]),
                    end=float(row["end_s"]),
                    label=row["label"],
                    batch=int(row["batch"]) if row["batch"] else None,
                    layer=int(row["layer"]) if row["layer"] else None,
                    round=int(row["round"]) if row["round"] else None,
                )
            )
        total = max((e.end for e in events), default=0.0)
        return SimResult(
            trace=events,
            total_time=total,
            tokens_generated=0,
            throughput=0.0,
            peak_gpu_bytes=0,
            rounds_executed=0,
            per_resource_busy=_busy(events),
        )
    raise ValueError(f"unknown trace format '{format}'")
