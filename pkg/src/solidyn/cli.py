"""Command line interface.

Subcommands: groundstate, classical, evolve, sweep, fit, report.
Exit codes: 0 success, 2 usage, otherwise a nonzero code per error
category (printed to stderr as `error: category=<cat>: <message>`).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .classical import ClassicalState, solve_trajectory, write_trajectory_csv
from .errors import ConfigError, SolidynError
from .harness import (SweepSpec, build_scenario, load_config,
                      obtain_ground_state, predicted_plateau, refit,
                      regenerate_report, run_member, run_scenario,
                      scenario_names)

EXIT_CODES = {
    "usage": 2,
    "config": 3,
    "stability": 4,
    "convergence": 5,
    "conservation": 6,
    "domain": 7,
    "data": 8,
    "internal": 9,
}


def _parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="solidyn",
        description="semiclassical soliton dynamics: ground states, "
                    "evolution, eps sweeps and slope reports")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, need_out=True):
        p.add_argument("--scenario", choices=scenario_names(),
                       help="named preset from the catalog")
        p.add_argument("--config", help="INI config file (overrides preset)")
        if need_out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("groundstate", help="solve and serialize a ground state")
    common(p)

    p = sub.add_parser("classical", help="integrate the driving trajectory only")
    common(p)
    p.add_argument("--eps", type=float, required=True)

    p = sub.add_parser("evolve", help="single-eps evolution with diagnostics")
    common(p)
    p.add_argument("--eps", type=float, required=True)

    p = sub.add_parser("sweep", help="full eps sweep with reports")
    common(p)
    p.add_argument("--epsilons", help="comma list, descending")
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("fit", help="re-fit slopes from stored CSVs")
    p.add_argument("--in", dest="in_dir", required=True)

    p = sub.add_parser("report", help="regenerate summary and plot script")
    p.add_argument("--in", dest="in_dir", required=True)

    return top


def _resolve_spec(args) -> SweepSpec:
    if getattr(args, "config", None):
        spec = load_config(args.config)
        if args.scenario and args.scenario != spec.scenario:
            raise ConfigError("--scenario conflicts with the config file")
        return spec
    if not getattr(args, "scenario", None):
        raise ConfigError("either --scenario or --config is required")
    return SweepSpec(scenario=args.scenario)


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0

    try:
        return _dispatch(args)
    except SolidynError as exc:
        print(f"error: category={exc.category}: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 9)


def _dispatch(args) -> int:
    if args.command == "groundstate":
        spec = _resolve_spec(args)
        scenario = build_scenario(spec.scenario, spec.overrides)
        os.makedirs(args.out, exist_ok=True)
        gs = obtain_ground_state(scenario)
        path = os.path.join(args.out, "groundstate.npz")
        gs.save(path)
        print(f"ground state saved to {path}: masses={gs.masses.tolist()} "
              f"energy={gs.energy:.12g} residual={gs.residual:.3e}")
        return 0

    if args.command == "classical":
        spec = _resolve_spec(args)
        scenario = build_scenario(spec.scenario, spec.overrides)
        os.makedirs(args.out, exist_ok=True)
        eps = args.eps
        state0 = ClassicalState(
            position=np.asarray(scenario.x0_macro) / eps,
            velocity=np.asarray(scenario.xi0), time=0.0, epsilon=eps)
        t_final = scenario.t_final(eps)
        n = max(1, int(round(t_final / scenario.dt)))
        traj = solve_trajectory(state0, scenario.potentials(),
                                scenario.params(), np.ones(scenario.m),
                                dt=t_final / n, n_steps=n)
        path = os.path.join(args.out, f"classical_eps{eps:g}.csv")
        write_trajectory_csv(traj, path, stride=max(1, n // 2000))
        drift = float(np.max(np.abs(traj.h_total - traj.h_total[0])))
        print(f"trajectory written to {path}; Hamiltonian drift {drift:.3e}")
        return 0

    if args.command == "evolve":
        spec = _resolve_spec(args)
        scenario = build_scenario(spec.scenario, spec.overrides)
        os.makedirs(args.out, exist_ok=True)
        gs = obtain_ground_state(scenario)
        gs_path = os.path.join(args.out, "groundstate.npz")
        gs.save(gs_path)
        plateau = predicted_plateau(scenario, [args.eps])
        member = run_member(spec.scenario, dict(spec.overrides), args.eps,
                            gs_path, plateau, args.out, spec.seed)
        if not member.ok:
            err = SolidynError(member.error)
            err.category = member.error_category or "internal"
            raise err
        print(json.dumps(member.summary, indent=2, sort_keys=True))
        return 0

    if args.command == "sweep":
        spec = _resolve_spec(args)
        if getattr(args, "epsilons", None):
            eps = tuple(float(t) for t in args.epsilons.split(","))
            spec = SweepSpec(scenario=spec.scenario, epsilons=eps,
                             seed=spec.seed, overrides=spec.overrides)
        result = run_scenario(spec, args.out, workers=args.workers)
        status = "PARTIAL" if result.partial else "ok"
        print(f"sweep {spec.scenario} -> {args.out} [{status}]")
        for name in sorted(result.slopes):
            print(f"  slope {name}: {result.slopes[name].slope:.4f}")
        return 1 if result.partial else 0

    if args.command == "fit":
        slopes = refit(args.in_dir)
        for name in sorted(slopes):
            print(f"slope {name}: {slopes[name].slope:.4f}")
        return 0

    if args.command == "report":
        regenerate_report(args.in_dir)
        print(f"report regenerated in {args.in_dir}")
        return 0

    raise ConfigError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
