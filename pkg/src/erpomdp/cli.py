"""Command-line front end.

Subcommands: ``validate``, ``solve``, ``simulate``, ``oracle``.  Every
randomized command requires an explicit ``--seed``; there is no wall-clock
seeding anywhere.  Exit codes: 0 success, 2 validation error, 3 convergence
warning (policy still written), 4 resource guard.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .entropy import build_pwlc, default_base_points, linear_cost_vectors, load_base_points
from .errors import ErpomdpError, ModelValidationError, TooLarge, WeightMismatch
from .estimation import PolicyTable, brute_force_entropies, expected_belief_sums, identity_residuals
from .harness import monte_carlo, write_criteria_csv, write_episode_csv
from .model import load_model, model_hash
from .solver import SolverConfig, load_policy, save_policy, solve

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_GUARD = 4


def _file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(path, command: str, inputs: dict, config: dict, seed, timings: dict) -> None:
    doc = {
        "command": command,
        "inputs": {str(p): _file_sha256(p) for p in inputs.values()},
        "config": config,
        "seed": seed,
        "toolkit_version": __version__,
        "timings": timings,
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def cmd_validate(args) -> int:
    try:
        model = load_model(args.model)
    except (ModelValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        if args.json:
            print(json.dumps({"valid": False, "error": str(exc)}))
        return EXIT_VALIDATION
    summary = {
        "valid": True,
        "num_states": model.num_states,
        "num_actions": model.num_actions,
        "num_obs": model.num_obs,
        "discount": model.discount,
        "beta": model.beta,
        "lambda": model.lam,
        "model_hash": model_hash(model),
    }
    if args.json:
        print(json.dumps(summary))
    else:
        print(
            f"model ok: {model.num_states} states, {model.num_actions} actions, "
            f"{model.num_obs} observations, discount={model.discount}, "
            f"beta={model.beta}, lambda={model.lam}"
        )
    return EXIT_OK


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    try:
        model = load_model(args.model)
    except ModelValidationError as exc:
        print(f"invalid model: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        if args.mode == "linear":
            cost_planes = linear_cost_vectors(model)
            num_base_points = 0
        else:
            if args.base_points:
                base_points = load_base_points(args.base_points)
            else:
                base_points = default_base_points(model.num_states)
            cost_planes = build_pwlc(model, base_points)
            num_base_points = len(base_points)
    except WeightMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    config = SolverConfig(
        belief_set_size=args.belief_set_size,
        expansion_rounds=args.expansion_rounds,
        bellman_residual_tol=args.tol,
        max_iterations=args.max_iterations,
        seed=args.seed,
    )
    policy = solve(model, cost_planes, config)
    policy.metadata.update(
        {
            "model_hash": model_hash(model),
            "mode": args.mode,
            "num_base_points": num_base_points,
        }
    )
    save_policy(args.out, policy)
    _write_manifest(
        str(args.out) + ".manifest.json",
        command="solve",
        inputs={"model": args.model, **({"base_points": args.base_points} if args.base_points else {})},
        config={**config.to_dict(), "mode": args.mode, "num_base_points": num_base_points},
        seed=args.seed,
        timings={"total_seconds": time.perf_counter() - t0},
    )
    meta = policy.metadata
    print(
        f"iterations={meta['iterations']} residual={meta['residual']:.3e} "
        f"vectors={meta['vector_count']} beliefs={meta['belief_count']} "
        f"solve_time={meta['solve_time_seconds']:.3f}s converged={meta['converged']}"
    )
    if not meta["converged"]:
        print("warning: residual tolerance not reached (policy written anyway)", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def _parse_horizon(text: str):
    if text == "geometric":
        return None, True
    if text.startswith("fixed:"):
        value = int(text.split(":", 1)[1])
        if value < 0:
            raise ValueError("fixed horizon must be >= 0")
        return value, False
    raise ValueError(f"horizon must be 'fixed:<T>' or 'geometric', got {text!r}")


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    try:
        model = load_model(args.model)
        horizon, geometric = _parse_horizon(args.horizon)
    except (ModelValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = {}
    for i, policy_path in enumerate(args.policies):
        policy = load_policy(policy_path)
        if policy.weight_matrix.shape[1] != model.num_states:
            print(
                f"error: policy {policy_path} has {policy.weight_matrix.shape[1]} states, "
                f"model has {model.num_states}",
                file=sys.stderr,
            )
            return EXIT_VALIDATION
        label = Path(policy_path).stem
        if label in reports:
            label = f"{label}_{i}"
        reports[label] = monte_carlo(
            model, policy, episodes=args.episodes, horizon=0 if horizon is None else horizon,
            seed=args.seed + i, geometric=geometric,
        )

    manifest_path = out_dir / "run_manifest.json"
    comment = f"manifest: {manifest_path.name}"
    write_criteria_csv(out_dir / "criteria.csv", reports, comment=comment)
    write_episode_csv(out_dir / "episodes.csv", reports, comment=comment)
    _write_manifest(
        manifest_path,
        command="simulate",
        inputs={"model": args.model, **{f"policy{i}": p for i, p in enumerate(args.policies)}},
        config={"episodes": args.episodes, "horizon": args.horizon},
        seed=args.seed,
        timings={"total_seconds": time.perf_counter() - t0},
    )
    for label, report in reports.items():
        print(
            f"{label}: goal_cost={report.goal_cost.mean:.2f} "
            f"io={report.io_entropy.mean:.2f} smoother={report.smoother_entropy.mean:.3f} "
            f"joint={report.joint_entropy.mean:.2f} belief_sum={report.belief_entropy_sum.mean:.2f} "
            f"map_err={report.map_error_prob.mean:.3f}"
        )
    print(f"wrote {out_dir / 'criteria.csv'} and {out_dir / 'episodes.csv'}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    try:
        model = load_model(args.model)
        policy = PolicyTable.load(args.policy_table)
    except (ModelValidationError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        exact = brute_force_entropies(model, policy, args.horizon)
        smoother_form, io_form = expected_belief_sums(model, policy, args.horizon)
        residuals = identity_residuals(model, policy, args.horizon)
    except TooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    print(f"smoother_entropy_bits={exact.smoother:.12f}")
    print(f"io_entropy_bits={exact.io:.12f}")
    print(f"joint_entropy_bits={exact.joint:.12f}")
    print(f"causal_obs_entropy_bits={exact.causal_obs:.12f}")
    print(f"causal_control_entropy_bits={exact.causal_control:.12f}")
    print(f"filter_smoother_sum_bits={smoother_form:.12f}")
    print(f"filter_causal_obs_sum_bits={io_form:.12f}")
    for name, value in residuals.items():
        print(f"residual_{name}={value:.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="erpomdp",
        description="Entropy-regularized POMDP toolkit: validate models, build "
        "alpha-vector costs, solve, simulate, and run exact entropy oracles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file against the schema invariants")
    p.add_argument("model")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="solve a model and write an alpha-vector policy")
    p.add_argument("model")
    p.add_argument("--mode", choices=["pwlc", "linear"], required=True)
    p.add_argument("--base-points", default=None, help="base-point file (pwlc mode; default scheme otherwise)")
    p.add_argument("--out", required=True, help="policy output path")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--belief-set-size", type=int, default=200)
    p.add_argument("--expansion-rounds", type=int, default=30)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iterations", type=int, default=2000)
    p.add_argument("--threads", type=int, default=1, help="worker hint; results are identical for any value")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="Monte Carlo evaluation of one or more policies")
    p.add_argument("model")
    p.add_argument("policies", nargs="+", help="policy file(s)")
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--horizon", required=True, help="'fixed:<T>' or 'geometric'")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--threads", type=int, default=1, help="worker hint; results are identical for any value")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="exact entropies of a small instance by enumeration")
    p.add_argument("model")
    p.add_argument("--policy-table", required=True, help="explicit policy table JSON")
    p.add_argument("--horizon", type=int, required=True)
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except ErpomdpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
