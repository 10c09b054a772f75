import dataclasses
import math

import numpy as np
import pytest

from specpipe.errors import (
    NoFeasiblePolicy,
    NonConvergent,
    Underdetermined,
    ValidationError,
)
from specpipe.planner import (
    SearchSpace,
    ablation_report,
    calibrate,
    predict_throughput,
    rotation_workload,
    search,
)
from specpipe.types import Policy

from conftest import small_draft, small_hw, small_target, small_workload


@pytest.fixture
def cfg():
    return {
        "hw": small_hw(),
        "target": small_target(),
        "draft": small_draft(),
        "workload": small_workload(),
    }


SPACE = SearchSpace(
    bs_prefill_values=(8, 16),
    bs_decoding_values=(16, 32, 64),
    bs_draft_values=(8, 16),
    n_cand_values=(1, 4, 8),
)


class TestSearchSpace:
    def test_policies_skip_invalid_combinations(self):
        space = SearchSpace((64,), (16, 64), (8, 32), (1,))
        tuples = {p.as_tuple() for p in space.policies()}
        # bs_prefill=64 > 2*16 and bs_draft=32 > 16 are dropped
        assert tuples == {(64, 64, 8, 1), (64, 64, 32, 1)}

    def test_rejects_empty_or_non_positive(self):
        with pytest.raises(ValidationError):
            SearchSpace((), (1,), (1,), (1,))
        with pytest.raises(ValidationError):
            SearchSpace((1,), (0,), (1,), (1,))

    def test_dict_round_trip(self):
        assert SearchSpace.from_dict(SPACE.to_dict()) == SPACE


class TestPredictThroughput:
    def test_single_group_matches_rotation_evaluate(self, cfg):
        from specpipe import costmodel

        pol = Policy(16, 16, 8, 4)
        wl = small_workload(total_sequences=32)  # exactly 2 * bs_decoding
        got = predict_throughput(pol, wl, cfg["hw"], cfg["target"], cfg["draft"])
        pair = costmodel.evaluate(
            pol, rotation_workload(wl, pol), cfg["hw"], cfg["target"], cfg["draft"]
        )
        assert got.t_decoding == pytest.approx(pair.t_decoding)
        assert got.throughput == pytest.approx(
            wl.total_sequences * wl.max_new_tokens / (got.t_prefill + got.t_decoding)
        )

    def test_oversized_workload_runs_extra_groups(self, cfg):
        pol = Policy(16, 16, 8, 4)
        one = predict_throughput(
            pol, small_workload(total_sequences=32), cfg["hw"], cfg["target"], cfg["draft"]
        )
        two = predict_throughput(
            pol, small_workload(total_sequences=64), cfg["hw"], cfg["target"], cfg["draft"]
        )
        assert two.t_decoding == pytest.approx(2 * one.t_decoding)

    def test_partial_group_pays_for_full_batches(self, cfg):
        # 33 sequences need two dual-batch groups at bs_decoding=16 but
        # earn only 33 sequences' tokens
        pol = Policy(16, 16, 8, 4)
        full = predict_throughput(
            pol, small_workload(total_sequences=64), cfg["hw"], cfg["target"], cfg["draft"]
        )
        partial = predict_throughput(
            pol, small_workload(total_sequences=33), cfg["hw"], cfg["target"], cfg["draft"]
        )
        assert partial.t_decoding == pytest.approx(full.t_decoding)
        assert partial.throughput < full.throughput


class TestSearch:
    def test_matches_brute_force(self, cfg):
        rng = np.random.default_rng(17)
        for _ in range(5):
            hw = small_hw(
                t_attn_cpu=float(rng.uniform(1e-5, 5e-3)),
                c2g_bandwidth=float(rng.uniform(1e9, 30e9)),
                t_ffn_gpu=float(rng.uniform(1e-5, 1e-3)),
            )
            ranked = search(SPACE, cfg["workload"], hw, cfg["target"], cfg["draft"])
            brute = [
                (p, predict_throughput(p, cfg["workload"], hw, cfg["target"], cfg["draft"]))
                for p in SPACE.policies()
            ]
            brute = [(p, bd) for p, bd in brute if bd.feasible]
            brute.sort(key=lambda e: (-e[1].throughput, e[0].as_tuple()))
            assert [p for p, _ in ranked.entries] == [p for p, _ in brute]
            assert [bd.throughput for _, bd in ranked.entries] == [
                bd.throughput for _, bd in brute
            ]

    def test_singleton_grid(self, cfg):
        space = SearchSpace((16,), (16,), (8,), (4,))
        ranked = search(space, cfg["workload"], cfg["hw"], cfg["target"], cfg["draft"])
        assert ranked.best == Policy(16, 16, 8, 4)

    def test_dominating_policy_ranked_first(self, cfg):
        # higher n_cand commits more tokens per round at identical memory
        space = SearchSpace((16,), (16,), (8,), (1, 8))
        hw = small_hw(t_draft_prefill_gpu=1e-6, t_draft_decode_gpu=1e-6)
        wl = small_workload(acceptance_p=0.9)
        ranked = search(space, wl, hw, cfg["target"], cfg["draft"])
        assert ranked.best.n_cand == 8

    def test_no_feasible_policy(self, cfg):
        hw = small_hw(gpu_mem_capacity=1)
        with pytest.raises(NoFeasiblePolicy):
            search(SPACE, cfg["workload"], hw, cfg["target"], cfg["draft"])


def _synthetic_observations(cfg, policies):
    return [
        (
            p,
            predict_throughput(p, cfg["workload"], cfg["hw"], cfg["target"], cfg["draft"]).throughput,
        )
        for p in policies
    ]


RECOVERY_POLICIES = [
    Policy(16, 16, 8, 1),
    Policy(16, 32, 8, 2),
    Policy(16, 64, 8, 8),
    Policy(16, 64, 16, 4),
    Policy(16, 48, 8, 6),
    Policy(16, 64, 8, 1),
    Policy(8, 16, 16, 2),
    Policy(16, 32, 16, 8),
]


class TestCalibrate:
    def test_underdetermined(self, cfg):
        obs = _synthetic_observations(cfg, RECOVERY_POLICIES[:1])
        with pytest.raises(Underdetermined):
            calibrate(
                obs,
                cfg["workload"],
                cfg["hw"],
                cfg["target"],
                cfg["draft"],
                free_params=("t_attn_cpu", "c2g_bandwidth"),
            )

    def test_unknown_free_param(self, cfg):
        obs = _synthetic_observations(cfg, RECOVERY_POLICIES)
        with pytest.raises(ValidationError):
            calibrate(
                obs,
                cfg["workload"],
                cfg["hw"],
                cfg["target"],
                cfg["draft"],
                free_params=("gpu_mem_capacity",),
            )

    def test_self_consistency_exact(self, cfg):
        # observations generated from the template itself: zero residual,
        # parameters unchanged
        obs = _synthetic_observations(cfg, RECOVERY_POLICIES)
        res = calibrate(
            obs,
            cfg["workload"],
            cfg["hw"],
            cfg["target"],
            cfg["draft"],
            free_params=("t_attn_cpu", "c2g_bandwidth"),
        )
        assert res.max_abs_residual < 1e-6
        assert res.fitted["t_attn_cpu"] == pytest.approx(cfg["hw"].t_attn_cpu, rel=1e-2)
        assert res.fitted["c2g_bandwidth"] == pytest.approx(cfg["hw"].c2g_bandwidth, rel=1e-2)

    def test_recovery_from_perturbed_template(self, cfg):
        obs = _synthetic_observations(cfg, RECOVERY_POLICIES)
        template = dataclasses.replace(
            cfg["hw"],
            t_attn_cpu=cfg["hw"].t_attn_cpu * 3,
            c2g_bandwidth=cfg["hw"].c2g_bandwidth / 2,
        )
        res = calibrate(
            obs,
            cfg["workload"],
            template,
            cfg["target"],
            cfg["draft"],
            free_params=("t_attn_cpu", "c2g_bandwidth"),
            damping=0.0,
        )
        assert res.fitted["t_attn_cpu"] == pytest.approx(cfg["hw"].t_attn_cpu, rel=1e-2)
        assert res.fitted["c2g_bandwidth"] == pytest.approx(cfg["hw"].c2g_bandwidth, rel=1e-2)

    def test_non_convergent(self, cfg):
        obs = [
            (p, t * 100.0) for p, t in _synthetic_observations(cfg, RECOVERY_POLICIES)
        ]
        with pytest.raises(NonConvergent):
            calibrate(
                obs,
                cfg["workload"],
                cfg["hw"],
                cfg["target"],
                cfg["draft"],
                free_params=("t_attn_cpu",),
                residual_threshold=0.5,
            )

    def test_deterministic(self, cfg):
        obs = _synthetic_observations(cfg, RECOVERY_POLICIES)
        kwargs = dict(free_params=("t_attn_cpu", "c2g_bandwidth", "acceptance_p"))
        a = calibrate(obs, cfg["workload"], cfg["hw"], cfg["target"], cfg["draft"], **kwargs)
        b = calibrate(obs, cfg["workload"], cfg["hw"], cfg["target"], cfg["draft"], **kwargs)
        assert a.fitted == b.fitted
        np.testing.assert_array_equal(a.residuals, b.residuals)


class TestAblation:
    def test_report_structure(self, cfg):
        best = Policy(16, 16, 8, 4)
        report = ablation_report(cfg["workload"], cfg["hw"], cfg["target"], cfg["draft"], best)
        names = [v["variant"] for v in report["variants"]]
        assert names == ["full", "no_sd", "serial_sd", "random_policy"]
        by_name = {v["variant"]: v for v in report["variants"]}
        assert by_name["no_sd"]["policy"]["n_cand"] == 1
        assert by_name["serial_sd"]["throughput"] <= by_name["full"]["throughput"] + 1e-12

    def test_no_sd_loses_when_draft_is_cheap(self, cfg):
        hw = small_hw(t_draft_prefill_gpu=1e-6, t_draft_decode_gpu=1e-6)
        wl = small_workload(acceptance_p=0.9)
        report = ablation_report(wl, hw, cfg["target"], cfg["draft"], Policy(16, 16, 8, 4))
        by_name = {v["variant"]: v for v in report["variants"]}
        assert by_name["no_sd"]["throughput"] < by_name["full"]["throughput"]

    def test_random_policy_deterministic_per_seed(self, cfg):
        best = Policy(16, 16, 8, 4)
        a = ablation_report(cfg["workload"], cfg["hw"], cfg["target"], cfg["draft"], best, seed=9)
        b = ablation_report(cfg["workload"], cfg["hw"], cfg["target"], cfg["draft"], best, seed=9)
        assert a == b
