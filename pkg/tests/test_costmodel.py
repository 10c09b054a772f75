import dataclasses
import math

import pytest

from specpipe import costmodel
from specpipe.types import Policy

from conftest import small_draft, small_hw, small_target, small_workload


@pytest.fixture
def cfg():
    return {
        "hw": small_hw(),
        "target": small_target(),
        "draft": small_draft(),
        "workload": small_workload(),
        "policy": Policy(bs_prefill=16, bs_decoding=16, bs_draft=8, n_cand=4),
    }


def test_prefill_time_micro_batching(cfg):
    wl = small_workload(total_sequences=33)
    pol = Policy(bs_prefill=16, bs_decoding=32, bs_draft=8, n_cand=4)
    # ceil(33 / 16) = 3 micro-batches
    assert costmodel.prefill_time(pol, wl, cfg["hw"]) == pytest.approx(
        3 * cfg["hw"].t_target_prefill_gpu
    )


def test_prefill_kv_offload_time(cfg):
    wl, hw, target = cfg["workload"], cfg["hw"], cfg["target"]
    expected = (
        wl.total_sequences
        * wl.l_input
        * target.kv_bytes_per_token_per_layer
        * target.n_layer
        / hw.g2c_bandwidth
    )
    assert costmodel.prefill_kv_offload_time(wl, hw, target) == pytest.approx(expected)


def test_draft_round_time_chunks(cfg):
    pol = Policy(bs_prefill=16, bs_decoding=20, bs_draft=8, n_cand=3)
    hw = cfg["hw"]
    # ceil(20 / 8) = 3 chunks, each one prefill pass + 2 decode steps
    expected = 3 * (hw.t_draft_prefill_gpu + 2 * hw.t_draft_decode_gpu)
    assert costmodel.draft_round_time(pol, cfg["workload"], hw) == pytest.approx(expected)


def test_target_round_time_load_bound(cfg):
    hw = small_hw(t_attn_cpu=1e-9)
    pol, target = cfg["policy"], cfg["target"]
    load = target.ffn_bytes_per_layer / hw.c2g_bandwidth
    expected = target.n_layer * (load + pol.bs_decoding * hw.t_ffn_gpu)
    got = costmodel.target_round_time(pol, cfg["workload"], hw, target)
    assert got == pytest.approx(expected)


def test_target_round_time_attn_bound(cfg):
    hw = small_hw(t_attn_cpu=1.0)  # attention dwarfs the load
    pol, target = cfg["policy"], cfg["target"]
    attn = pol.n_cand * pol.bs_decoding * hw.t_attn_cpu
    expected = target.n_layer * (attn + pol.bs_decoding * hw.t_ffn_gpu)
    got = costmodel.target_round_time(pol, cfg["workload"], hw, target)
    assert got == pytest.approx(expected)


def test_strict_paper_approx_drops_gpu_term(cfg):
    pol, hw, target = cfg["policy"], cfg["hw"], cfg["target"]
    full = costmodel.target_round_time(pol, cfg["workload"], hw, target)
    strict = costmodel.target_round_time(
        pol, cfg["workload"], hw, target, strict_paper_approx=True
    )
    assert full - strict == pytest.approx(target.n_layer * pol.bs_decoding * hw.t_ffn_gpu)


def test_decoding_rounds_certain_acceptance(cfg):
    wl = small_workload(acceptance_p=1.0, max_new_tokens=16)
    pol = dataclasses.replace(cfg["policy"], n_cand=8)
    # every round commits n_cand + 1 = 9 tokens
    assert costmodel.decoding_rounds(pol, wl) == math.ceil(16 / 9)


def test_decoding_rounds_zero_acceptance(cfg):
    wl = small_workload(acceptance_p=0.0, max_new_tokens=16)
    assert costmodel.decoding_rounds(cfg["policy"], wl) == 16


def test_decoding_time_serial_is_sum(cfg):
    pol, wl, hw = cfg["policy"], cfg["workload"], cfg["hw"]
    target, draft = cfg["target"], cfg["draft"]
    t_par, rounds = costmodel.decoding_time(pol, wl, hw, target, draft)
    t_ser, _ = costmodel.decoding_time(pol, wl, hw, target, draft, serial_sd=True)
    t_t = costmodel.target_round_time(pol, wl, hw, target)
    t_d = costmodel.draft_round_time(pol, wl, hw)
    assert t_par == pytest.approx(rounds * max(t_t, t_d))
    assert t_ser == pytest.approx(rounds * (t_t + t_d))


def test_memory_formulas(cfg):
    pol, wl, target, draft = cfg["policy"], cfg["workload"], cfg["target"], cfg["draft"]
    v_pf = costmodel.prefill_memory(pol, wl, target)
    assert v_pf == (
        2 * (target.attn_bytes_per_layer + target.ffn_bytes_per_layer)
        + target.other_bytes
        + pol.bs_prefill * wl.l_input * target.kv_bytes_per_token_per_layer * target.n_layer
    )
    v_dec = costmodel.decoding_memory(pol, wl, target, draft)
    assert v_dec == (
        2 * target.ffn_bytes_per_layer
        + draft.total_bytes()
        + pol.bs_draft
        * (wl.l_input + wl.max_new_tokens)
        * draft.kv_bytes_per_token_per_layer
        * draft.n_layer
    )


def test_evaluate_throughput_identity(cfg):
    bd = costmodel.evaluate(
        cfg["policy"], cfg["workload"], cfg["hw"], cfg["target"], cfg["draft"]
    )
    assert bd.feasible
    assert bd.expected_tokens == cfg["workload"].total_sequences * cfg["workload"].max_new_tokens
    assert bd.throughput == pytest.approx(bd.expected_tokens / (bd.t_prefill + bd.t_decoding))


def test_evaluate_infeasible_zero_throughput(cfg):
    hw = small_hw(gpu_mem_capacity=1)
    bd = costmodel.evaluate(cfg["policy"], cfg["workload"], hw, cfg["target"], cfg["draft"])
    assert not bd.feasible
    assert bd.throughput == 0.0


def test_doubling_c2g_halves_io_bound_target_round(cfg):
    hw = small_hw(t_attn_cpu=1e-9, t_ffn_gpu=0.0)
    pol, wl, target = cfg["policy"], cfg["workload"], cfg["target"]
    slow = costmodel.target_round_time(pol, wl, hw, target)
    fast = costmodel.target_round_time(
        pol, wl, dataclasses.replace(hw, c2g_bandwidth=2 * hw.c2g_bandwidth), target
    )
    assert fast == pytest.approx(slow / 2)


@pytest.mark.parametrize(
    "field",
    ["t_attn_cpu", "t_ffn_gpu", "t_draft_prefill_gpu", "t_draft_decode_gpu", "t_target_prefill_gpu"],
)
def test_throughput_non_increasing_in_primitive_times(cfg, field):
    base = costmodel.evaluate(
        cfg["policy"], cfg["workload"], cfg["hw"], cfg["target"], cfg["draft"]
    )
    hw2 = dataclasses.replace(cfg["hw"], **{field: getattr(cfg["hw"], field) * 10 + 1e-3})
    worse = costmodel.evaluate(cfg["policy"], cfg["workload"], hw2, cfg["target"], cfg["draft"])
    assert worse.throughput <= base.throughput + 1e-12


def test_overlapped_total_from_components():
    # verification = max(cpu, load) + gpu_target; wall-clock = max(verification, draft)
    assert costmodel.overlapped_total_from_components(10.0, 4.0, 7.0, 2.0) == 12.0
    assert costmodel.overlapped_total_from_components(3.0, 4.0, 9.0, 2.0) == 9.0
