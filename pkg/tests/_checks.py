"""Shared trace validity assertions used by unit and acceptance tests."""
from collections import defaultdict

EPS = 1e-9


def assert_resource_exclusive(trace):
    """No two events on the same resource overlap in time."""
    by_resource = defaultdict(list)
    for ev in trace:
        assert ev.end >= ev.start - EPS, f"negative duration: {ev}"
        by_resource[ev.resource].append(ev)
    for resource, events in by_resource.items():
        events.sort(key=lambda e: (e.start, e.end))
        for prev, cur in zip(events, events[1:]):
            assert cur.start >= prev.end - EPS, (
                f"overlap on {resource}: {prev} then {cur}"
            )


def assert_causality(trace):
    """Each ffn_gpu starts at or after its layer's attn_cpu and ffn_load ends."""
    deps = {}
    for ev in trace:
        if ev.label in ("attn_cpu", "ffn_load") and ev.round is not None:
            key = (ev.round, ev.layer)
            deps[key] = max(deps.get(key, 0.0), ev.end)
    checked = 0
    for ev in trace:
        if ev.label == "ffn_gpu" and ev.round is not None and ev.layer is not None:
            key = (ev.round, ev.layer)
            if key in deps:
                assert ev.start >= deps[key] - EPS, f"ffn_gpu before inputs ready: {ev}"
                checked += 1
    return checked


def assert_dual_batch_overlap(trace):
    """Every decoding round runs verify work and draft work on opposite batches."""
    rounds = defaultdict(lambda: {"verify": set(), "draft": set()})
    for ev in trace:
        if ev.round is None or ev.batch is None:
            continue
        side = "draft" if ev.label.startswith("draft_") else "verify"
        rounds[ev.round][side].add(ev.batch)
    assert rounds, "trace contains no batch-tagged round events"
    for rnd, sides in rounds.items():
        assert sides["verify"], f"round {rnd} has no verify events"
        assert sides["draft"], f"round {rnd} has no draft events"
        assert sides["verify"].isdisjoint(sides["draft"]), (
            f"round {rnd} runs both roles on one batch"
        )
