"""Command-line entry point.

Exit codes: 0 success, 1 a verification check failed, 2 invalid input or
configuration, 3 solver fault.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import ContractError, SolverFault
from .experiments import ExperimentConfig, generate_initial_data, run_stability_experiment, sweep_epsilon
from .inequalities import (
    PRODUCT_IDS, _call, agmon_1d, agmon_profile, minkowski_check, random_trials,
)
from .norms import EnergyLedger, I1_terms, NormSpec, norm, substitution_residual
from .solver import MHDState, SolverConfig, load_checkpoint, run
from .spectral import Grid, VectorField, _leray_arrays, random_vector_field

EXIT_OK, EXIT_CHECK, EXIT_INVALID, EXIT_FAULT = 0, 1, 2, 3

log = logging.getLogger("anisomhd")


def _grid_arg(text: str) -> tuple:
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("grid takes N or N1,N2,N3")
    return tuple(parts)


def _float_list(text: str) -> list:
    return [float(p) for p in text.split(",") if p]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", type=_grid_arg, help="N or N1,N2,N3")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--mode", choices=["mhd", "ns_horizontal", "inviscid"])
    p.add_argument("--out", dest="output_dir", type=str)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anisomhd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single stability experiment")
    _add_common(p)

    p = sub.add_parser("sweep", help="epsilon sweep")
    _add_common(p)
    p.add_argument("--sweep", type=_float_list, help="comma-separated epsilon values")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("verify-inequalities", help="random trial corpus for the inequality checks")
    p.add_argument("--budget", type=int, default=200, help="random trials per inequality")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=_grid_arg, default=(48, 48, 48))
    p.add_argument("--out", type=Path, help="write JSON reports (one per line) here")

    p = sub.add_parser("check-identities", help="cancellation, L2 balance and substitution checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=_grid_arg, default=(16, 16, 16))
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-end", dest="t_end", type=float, default=0.2)
    p.add_argument("--samples", type=int, default=10)

    p = sub.add_parser("resume", help="continue a run from a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--t-end", dest="t_end", type=float, required=True)
    p.add_argument("--out", dest="output_dir", type=str)
    return parser


def _load_config(args) -> ExperimentConfig:
    data = {}
    if args.config is not None:
        cfg = ExperimentConfig.from_json(args.config)
        data = cfg.to_dict()
    for key in ("seed", "grid", "epsilon", "dt", "t_end", "mode", "output_dir"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = list(val) if key == "grid" else val
    if getattr(args, "sweep", None) is not None:
        data["sweep"] = args.sweep
    return ExperimentConfig.from_dict(data)


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


def cmd_run(args) -> int:
    config = _load_config(args)
    result = run_stability_experiment(config)
    _print(result.summary())
    return EXIT_FAULT if result.fault else EXIT_OK


def cmd_sweep(args) -> int:
    config = _load_config(args)
    result = sweep_epsilon(config, workers=args.workers)
    print("epsilon,sup_E0_plus_E1,C0_fit,breached,wall_time,fault")
    for r in result.rows:
        print(f"{r.epsilon:.6g},{r.sup_e0_plus_e1:.6e},{r.c0_fit:.6g},{r.breached},{r.wall_time:.2f},{r.fault or ''}")
    return EXIT_FAULT if any(r.fault for r in result.rows) else EXIT_OK


def verify_inequalities(budget: int, seed: int, grid: Grid):
    """Reports for ``budget`` random trial tuples per bound plus Agmon and Minkowski checks."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng(seed)
    reports = []
    for ineq in PRODUCT_IDS:
        for _ in range(budget):
            rep = _call(ineq, random_trials(ineq, rng), grid)
            rep.seed = seed
            reports.append(rep)
    x = np.linspace(-40.0, 40.0, 16001)
    for _ in range(budget):
        rep = agmon_1d(agmon_profile(x, math.exp(rng.uniform(-4, 0.7)), rng.uniform(1, 2), rng.uniform(0.5, 1.5)), x)
        rep.seed = seed
        reports.append(rep)
    xs = np.linspace(-6, 6, 121)
    for _ in range(min(budget, 20)):
        q = float(rng.choice([1, 2, 3]))
        p = float(rng.choice([q, q + 1, math.inf]))
        a, b, c = rng.uniform(0.5, 2, size=3)
        f = np.exp(-a * xs[:, None] ** 2 - b * xs[None, :] ** 2 - c * xs[:, None] * xs[None, :] / 2)
        rep = minkowski_check(f, p, q, xs[1] - xs[0], xs[1] - xs[0])
        rep.seed = seed
        reports.append(rep)
    return reports


def cmd_verify(args) -> int:
    reports = verify_inequalities(args.budget, args.seed, Grid(*args.grid))
    lines = [r.to_json() for r in reports]
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text("\n".join(lines) + "\n")
    summary = {}
    for r in reports:
        s = summary.setdefault(r.inequality_id, {"count": 0, "max_ratio": 0.0, "bound": r.bound, "failures": 0})
        s["count"] += 1
        s["max_ratio"] = max(s["max_ratio"], r.ratio)
        s["failures"] += not r.within_bound
    _print(summary)
    return EXIT_CHECK if any(s["failures"] for s in summary.values()) else EXIT_OK


def check_identities(seed: int, grid: Grid, dt: float, t_end: float, samples: int) -> dict:
    """Cancellation on random states and balance/substitution residuals on a short run."""
    rng = np.random.default_rng(seed)
    h4 = NormSpec(4)
    worst_i1 = 0.0
    for _ in range(samples):
        u = VectorField(grid, _leray_arrays(random_vector_field(grid, rng).data * grid.dealias_mask, grid))
        b = VectorField(grid, _leray_arrays(random_vector_field(grid, rng).data * grid.dealias_mask, grid))
        a, c = I1_terms(MHDState(u, b, 0.0))
        worst_i1 = max(worst_i1, abs(a + c) / (norm(u, h4) * norm(b, h4)))
    config = ExperimentConfig(grid=grid.shape, dt=dt, t_end=t_end, epsilon=1e-2, seed=seed)
    state0 = generate_initial_data(config)
    sink: list = []
    solver_cfg = SolverConfig(dt=dt, t_end=t_end, diagnostics_stride=1)
    states = []
    run(state0, solver_cfg, EnergyLedger(), sink, on_step=lambda i, s: states.append(s))
    e_init = norm(state0.u) ** 2 + norm(state0.b) ** 2
    subs = [substitution_residual(states[i - 1], states[i], dt) for i in range(1, len(states))]
    return {
        "I1_relative_max": worst_i1,
        "I1_ok": worst_i1 <= 1e-10,
        "l2_balance_relative": abs(sink[-1].l2_balance_residual) / e_init,
        "l2_balance_ok": abs(sink[-1].l2_balance_residual) <= 1e-6 * e_init,
        "substitution_residual_max": max(subs) if subs else 0.0,
        "divergence_max": max(max(d.divergence_max_u, d.divergence_max_b) for d in sink),
    }


def cmd_check(args) -> int:
    out = check_identities(args.seed, Grid(*args.grid), args.dt, args.t_end, args.samples)
    _print(out)
    return EXIT_OK if out["I1_ok"] and out["l2_balance_ok"] else EXIT_CHECK


def cmd_resume(args) -> int:
    state, header = load_checkpoint(args.checkpoint)
    extra = header.get("extra") or {}
    if "config" not in extra:
        raise ContractError(f"{args.checkpoint}: checkpoint carries no experiment configuration")
    config = ExperimentConfig.from_dict(extra["config"])
    config = replace(config, t_end=args.t_end, output_dir=args.output_dir)
    ledger = EnergyLedger.resume_from(extra["ledger"]) if "ledger" in extra else None
    result = run_stability_experiment(config, state, ledger, extra.get("e0_initial"))
    _print(result.summary())
    return EXIT_FAULT if result.fault else EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "verify-inequalities": cmd_verify,
    "check-identities": cmd_check,
    "resume": cmd_resume,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SolverFault as exc:
        print(f"solver fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except (ValueError, ContractError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
