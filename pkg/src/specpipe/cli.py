"""Command-line frontend.

Subcommands: plan, simulate, pmf, calibrate, ablation, presets.
Exit codes: 0 success, 1 config error, 2 infeasible or underdetermined,
3 internal feasibility violation.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import AcceptanceModel, expected_accepted, pmf
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    InfeasiblePlan,
    NoFeasiblePolicy,
    SpecPipeError,
    Underdetermined,
    ValidationError,
)
from .placement import DECODING, PREFILL, assign_tiers
from .planner import RankedPolicies, ablation_report, calibrate, search
from .presets import preset, preset_names
from .simulator import export_trace, simulate_run
from .types import Policy, Workload

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_INTERNAL = 3

_RANKING_COLUMNS = [
    "bs_prefill",
    "bs_decoding",
    "bs_draft",
    "n_cand",
    "throughput_pred",
    "t_prefill_s",
    "t_decoding_s",
    "v_decoding_bytes",
    "feasible",
]


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _write_meta(out: Path, config_path: str, seed: int) -> None:
    digest = hashlib.sha256(Path(config_path).read_bytes()).hexdigest()
    _write_json(
        out / "meta.json",
        {"config_sha256": digest, "seed": seed, "tool_version": __version__},
    )


def _ranking_rows(ranked: RankedPolicies) -> list[dict]:
    rows = []
    for policy, bd in ranked.entries:
        rows.append(
            {
                "bs_prefill": policy.bs_prefill,
                "bs_decoding": policy.bs_decoding,
                "bs_draft": policy.bs_draft,
                "n_cand": policy.n_cand,
                "throughput_pred": bd.throughput,
                "t_prefill_s": bd.t_prefill,
                "t_decoding_s": bd.t_decoding,
                "v_decoding_bytes": bd.v_decoding,
                "feasible": bd.feasible,
            }
        )
    return rows


def _write_ranking(out: Path, rows: list[dict]) -> None:
    with (out / "ranking.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_RANKING_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    _write_json(out / "ranking.json", rows)


def _out_dir(args, config: RunConfig | None = None) -> Path:
    out = args.out or (config.output_dir if config else None) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_plan(args) -> int:
    config = load_config(args.config)
    if config.search_space is None:
        raise ConfigError("'plan' requires a 'search_space' key in the config")
    out = _out_dir(args, config)
    try:
        ranked = search(
            config.search_space,
            config.workload,
            config.hardware,
            config.target_model,
            config.draft_model,
            strict_paper_approx=args.strict_paper_approx,
        )
    except NoFeasiblePolicy as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if args.simulate_top_k:
        ranked = _rerank_by_simulation(config, ranked, args.simulate_top_k)
    rows = _ranking_rows(ranked)
    _write_ranking(out, rows)
    _write_meta(out, args.config, config.seed)
    best = ranked.best
    print(
        f"best policy: ({best.bs_prefill}, {best.bs_decoding}, "
        f"{best.bs_draft}, {best.n_cand}) "
        f"predicted {ranked.entries[0][1].throughput:.3f} tok/s"
    )
    return EXIT_OK


def _rerank_by_simulation(config: RunConfig, ranked: RankedPolicies, k: int) -> RankedPolicies:
    """Re-rank the analytic top-k by simulated throughput."""
    from .planner import rotation_workload

    top = ranked.entries[:k]
    rescored = []
    for policy, bd in top:
        workload = rotation_workload(config.workload, policy)
        dec_plan = assign_tiers(
            config.target_model, config.draft_model, config.hardware, policy, workload, DECODING
        )
        pre_plan = assign_tiers(
            config.target_model, config.draft_model, config.hardware, policy, workload, PREFILL
        )
        result = simulate_run(
            policy,
            workload,
            config.hardware,
            config.target_model,
            config.draft_model,
            prefill_plan=pre_plan,
            decoding_plan=dec_plan,
            seed=config.seed,
        )
        rescored.append((result.throughput, policy, bd))
    rescored.sort(key=lambda e: (-e[0], e[1].as_tuple()))
    entries = [(p, bd) for _, p, bd in rescored] + ranked.entries[k:]
    return RankedPolicies(entries=entries)


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    if config.policy is None:
        raise ConfigError("'simulate' requires a 'policy' key in the config")
    out = _out_dir(args, config)
    seed = args.seed if args.seed is not None else config.seed
    policy = config.policy
    workload = config.workload
    dec_plan = assign_tiers(
        config.target_model, config.draft_model, config.hardware, policy, workload, DECODING
    )
    pre_plan = assign_tiers(
        config.target_model, config.draft_model, config.hardware, policy, workload, PREFILL
    )
    result = simulate_run(
        policy,
        workload,
        config.hardware,
        config.target_model,
        config.draft_model,
        prefill_plan=pre_plan,
        decoding_plan=dec_plan,
        seed=seed,
    )
    fmt = args.format
    ext = {"json": "json", "csv": "csv", "chrome": "chrome.json"}[fmt]
    (out / f"trace.{ext}").write_text(export_trace(result, fmt))
    busy = {r: round(v / result.total_time, 6) for r, v in result.per_resource_busy.items()}
    _write_json(
        out / "summary.json",
        {
            "policy": policy.to_dict(),
            "seed": seed,
            "total_time_s": round(result.total_time, 6),
            "tokens_generated": result.tokens_generated,
            "throughput": round(result.throughput, 6),
            "rounds_executed": result.rounds_executed,
            "peak_gpu_bytes": result.peak_gpu_bytes,
            "busy_fraction": busy,
            "decoding_plan": dec_plan.to_dict(),
        },
    )
    _write_meta(out, args.config, seed)
    print(
        f"simulated {result.tokens_generated} tokens in {result.total_time:.3f} s "
        f"({result.throughput:.3f} tok/s, {result.rounds_executed} rounds)"
    )
    return EXIT_OK


def cmd_pmf(args) -> int:
    model = AcceptanceModel(p=args.p, n_cand=args.n_cand)
    probs = pmf(model)
    print("k\tpmf\tcumulative")
    cum = 0.0
    for k, prob in enumerate(probs, start=1):
        cum += prob
        print(f"{k}\t{prob:.9f}\t{cum:.9f}")
    print(f"expected accepted per round: {expected_accepted(model):.9f}")
    return EXIT_OK


def _read_observations(path: str) -> list[tuple[Policy, float]]:
    obs = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            policy = Policy(
                bs_prefill=int(row["bs_prefill"]),
                bs_decoding=int(row["bs_decoding"]),
                bs_draft=int(row["bs_draft"]),
                n_cand=int(row["n_cand"]),
            )
            obs.append((policy, float(row["throughput"])))
    return obs


def cmd_calibrate(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args, config)
    observations = _read_observations(args.observations)
    free_params = tuple(args.free_params.split(","))
    try:
        result = calibrate(
            observations,
            config.workload,
            config.hardware,
            config.target_model,
            config.draft_model,
            free_params=free_params,
        )
    except Underdetermined as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _write_json(out / "fitted_profile.json", result.hardware.to_dict())
    _write_json(
        out / "residuals.json",
        {
            "free_params": list(result.free_params),
            "fitted": result.fitted,
            "acceptance_p": result.workload.acceptance_p,
            "relative_residuals": [round(float(r), 9) for r in result.residuals],
            "max_abs_residual": round(result.max_abs_residual, 9),
        },
    )
    _write_meta(out, args.config, config.seed)
    print(
        f"fitted {len(result.free_params)} parameters; "
        f"max relative residual {result.max_abs_residual:.4f}"
    )
    return EXIT_OK


def cmd_ablation(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args, config)
    if config.policy is not None:
        best = config.policy
    elif config.search_space is not None:
        try:
            best = search(
                config.search_space,
                config.workload,
                config.hardware,
                config.target_model,
                config.draft_model,
            ).best
        except NoFeasiblePolicy as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
    else:
        raise ConfigError("'ablation' requires a 'policy' or 'search_space' key")
    report = ablation_report(
        config.workload,
        config.hardware,
        config.target_model,
        config.draft_model,
        best,
        seed=config.seed,
    )
    _write_json(out / "ablation.json", report)
    _write_meta(out, args.config, config.seed)
    for row in report["variants"]:
        p = row["policy"]
        print(
            f"{row['variant']:>13}: {row['throughput']:8.3f} tok/s "
            f"({p['bs_prefill']}, {p['bs_decoding']}, {p['bs_draft']}, {p['n_cand']})"
        )
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.emit_config:
        hw, target, draft = preset(args.emit_config)
        doc = RunConfig(
            hardware=hw,
            target_model=target,
            draft_model=draft,
            workload=Workload(
                total_sequences=2 * 192, l_input=503, max_new_tokens=16, acceptance_p=0.8
            ),
        ).to_dict()
        print(json.dumps(doc, sort_keys=True, indent=2))
        return EXIT_OK
    for name in preset_names():
        hw, target, draft = preset(name)
        print(
            f"{name}: target={target.name} ({target.total_bytes() / 1e9:.1f} GB, "
            f"{target.n_layer} layers), draft={draft.name} "
            f"({draft.total_bytes() / 1e9:.1f} GB), "
            f"gpu={hw.gpu_mem_capacity / 1024**3:.0f} GiB"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specpipe",
        description="Performance models for speculative-decoding offloaded inference",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="rank a policy grid by predicted throughput")
    p_plan.add_argument("--config", required=True)
    p_plan.add_argument("--out", default=None)
    p_plan.add_argument("--simulate-top-k", type=int, default=0)
    p_plan.add_argument("--strict-paper-approx", action="store_true")
    p_plan.set_defaults(func=cmd_plan)

    p_sim = sub.add_parser("simulate", help="simulate one policy end to end")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", default=None)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--format", choices=["json", "csv", "chrome"], default="json")
    p_sim.set_defaults(func=cmd_simulate)

    p_pmf = sub.add_parser("pmf", help="print the accepted-token distribution")
    p_pmf.add_argument("p", type=float)
    p_pmf.add_argument("n_cand", type=int)
    p_pmf.set_defaults(func=cmd_pmf)

    p_cal = sub.add_parser("calibrate", help="fit hardware primitives to measurements")
    p_cal.add_argument("--config", required=True)
    p_cal.add_argument("--observations", required=True)
    p_cal.add_argument("--out", default=None)
    from .estimator import DEFAULT_FREE_PARAMS

    p_cal.add_argument("--free-params", default=",".join(DEFAULT_FREE_PARAMS))
    p_cal.set_defaults(func=cmd_calibrate)

    p_abl = sub.add_parser("ablation", help="compare the pipeline against ablations")
    p_abl.add_argument("--config", required=True)
    p_abl.add_argument("--out", default=None)
    p_abl.set_defaults(func=cmd_ablation)

    p_pre = sub.add_parser("presets", help="list built-in presets")
    p_pre.add_argument("--emit-config", default=None, metavar="NAME")
    p_pre.set_defaults(func=cmd_presets)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValidationError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoFeasiblePolicy, Underdetermined) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except InfeasiblePlan as exc:
        print(f"internal feasibility violation: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except SpecPipeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
