"""Command-line front end: run orbits, run property suites, emit tables.

Exit codes: 0 success / all checks pass, 1 property violation or solver
failure, 2 usage or configuration error, 3 inapplicable request (e.g. a
domination suite without a reference problem in the file).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import checks
from .flow import EvolveError, evolve, semigroup_distance
from .hilbert import positive_cone
from .problems import PROBLEM_KINDS, builtin_problems, load_problem

SUITES = ("positivity", "order", "linf", "complete", "domination", "comparison")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="integrate one orbit and write trajectory.csv / summary.json")
    run.add_argument("--problem", required=True, help="problem file (JSON)")
    run.add_argument("--T", type=float, default=1.0)
    run.add_argument("--tau", type=float, default=0.05)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--tol", type=float, default=None, help="solver tolerance override")
    run.add_argument("--out", default=".", help="output directory")

    chk = sub.add_parser("check", help="run the applicable property suite and write report.json")
    chk.add_argument("--problem", required=True)
    chk.add_argument("--seed", type=int, required=True)
    chk.add_argument("--suite", choices=SUITES + ("all",), default="all")
    chk.add_argument("--samples", type=int, default=30)
    chk.add_argument("--T", type=float, default=0.5)
    chk.add_argument("--tau", type=float, default=0.05)
    chk.add_argument("--out", default=".")

    sub.add_parser("list-problems", help="list problem kinds and bundled configurations")
    return parser


def _load(path_str: str):
    path = Path(path_str)
    if not path.exists():
        print(f"jflow: problem file not found: {path}", file=sys.stderr)
        return None
    try:
        return load_problem(path)
    except KeyError as exc:
        print(f"jflow: bad problem file: unknown key {exc}", file=sys.stderr)
        return None
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"jflow: bad problem file: {exc}", file=sys.stderr)
        return None


def _initial_state(bundle, seed: int) -> np.ndarray:
    cfg = bundle.meta.get("initial")
    dim = bundle.pair.space.dim
    if cfg is None or cfg.get("kind") == "gaussian":
        rng = np.random.default_rng(seed)
        scale = 1.0 if cfg is None else float(cfg.get("scale", 1.0))
        return checks.sample_states(bundle.pair, 1, rng, scale=scale)[0]
    if cfg["kind"] == "constant":
        return np.full(dim, float(cfg["value"]))
    if cfg["kind"] == "values":
        vals = np.asarray(cfg["values"], float)
        if vals.shape != (dim,):
            raise ValueError(f"initial values must have length {dim}")
        return vals
    raise ValueError(f"unknown initial kind {cfg['kind']!r}")


def _write_trajectory(path: Path, traj) -> None:
    m = traj.states.shape[1]
    header = ["t"] + [f"node_{i}" for i in range(m)] + ["energy", "step_residual"]
    lines = [",".join(header)]
    for k in range(traj.states.shape[0]):
        energy = traj.energies[k] if traj.energies is not None else math.nan
        row = [f"{traj.times[k]:.12g}"]
        row += [f"{x:.16g}" for x in traj.states[k]]
        row += [f"{energy:.16g}", f"{traj.step_residuals[k]:.6g}"]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def cmd_run(args) -> int:
    bundle = _load(args.problem)
    if bundle is None:
        return 2
    if args.tau <= 0 or args.T < args.tau:
        print("jflow: need tau > 0 and T >= tau", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        u0 = _initial_state(bundle, args.seed)
    except ValueError as exc:
        print(f"jflow: {exc}", file=sys.stderr)
        return 2

    try:
        traj = evolve(bundle.pair, u0, args.T, args.tau, tol=args.tol)
    except EvolveError as exc:
        _write_trajectory(out / "trajectory.csv", exc.partial)
        print(f"jflow: {exc} (partial trajectory flushed)", file=sys.stderr)
        return 1
    _write_trajectory(out / "trajectory.csv", traj)

    energies = traj.energies
    diffs = np.diff(traj.states, axis=0)
    w = bundle.pair.space.weights
    step_norms2 = (diffs * diffs) @ w
    dissipation_gap = float(
        np.max(energies[1:] + step_norms2 / (2.0 * args.tau) - energies[:-1], initial=-math.inf)
    )

    rng = np.random.default_rng(args.seed + 1)
    v0 = u0 + 0.1 * checks.sample_states(bundle.pair, 1, rng, scale=1.0)[0]
    dists = semigroup_distance(bundle.pair, u0, v0, args.T, args.tau, tol=args.tol)
    contraction_gap = float(np.max(np.diff(dists), initial=-math.inf))

    summary = {
        "problem": bundle.name,
        "kind": bundle.kind,
        "T": args.T,
        "tau": args.tau,
        "seed": args.seed,
        "final_energy": float(energies[-1]),
        "dissipation": {"max_gap": dissipation_gap, "passed": dissipation_gap <= 1e-7},
        "contraction": {
            "max_distance_increase": contraction_gap,
            "passed": bool(contraction_gap <= 1e-8) if bundle.pair.omega == 0 else None,
        },
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'trajectory.csv'} and {out / 'summary.json'}")
    return 0


def _applicable_suites(bundle) -> list[str]:
    suites = ["positivity", "order", "linf", "complete"]
    if bundle.reference is not None:
        suites += ["comparison", "domination"]
    return suites


def _run_suite(bundle, suite: str, args) -> checks.PropertyReport:
    pair = bundle.pair
    kw = dict(samples=args.samples, T=args.T, tau=args.tau, seed=args.seed)
    if suite == "positivity":
        return checks.check_invariance(pair, positive_cone(), **kw)
    if suite == "order":
        return checks.check_order_preserving(pair, **kw)
    if suite == "linf":
        return checks.check_linf_contractivity(pair, **kw)
    if suite == "complete":
        return checks.check_complete_contractivity(
            pair, samples=min(args.samples, 6), T=args.T, tau=args.tau, seed=args.seed
        )
    if suite == "comparison":
        return checks.check_comparison(bundle.reference, pair, **kw)
    if suite == "domination":
        return checks.check_domination(bundle.reference, pair, **kw)
    raise ValueError(f"unknown suite {suite!r}")


def cmd_check(args) -> int:
    bundle = _load(args.problem)
    if bundle is None:
        return 2
    applicable = _applicable_suites(bundle)
    if args.suite == "all":
        suites = applicable
    else:
        if args.suite not in applicable:
            print(f"jflow: suite {args.suite!r} is not applicable (no reference pair)", file=sys.stderr)
            return 3
        suites = [args.suite]

    reports = []
    for suite in suites:
        report = _run_suite(bundle, suite, args)
        reports.append(report)
        status = "pass" if report.passed else "FAIL"
        print(f"{suite:12s} {status}  max_violation={report.max_violation:.3g} tol={report.tolerance:.3g}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "problem": bundle.name,
        "kind": bundle.kind,
        "seed": args.seed,
        "suites": suites,
        "checks": [r.to_dict() for r in reports],
        "passed": all(r.passed for r in reports),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return 0 if payload["passed"] else 1


def cmd_list() -> int:
    print("problem kinds:", ", ".join(PROBLEM_KINDS))
    print("bundled configurations:")
    for name, cfg in builtin_problems().items():
        grid_cfg = cfg["grid"]
        if grid_cfg["topology"] == "chain":
            shape = f"chain({grid_cfg['n']})"
        else:
            shape = f"grid({grid_cfg['nx']}x{grid_cfg['ny']})"
        extra = f" p={cfg['p']:g}" if "p" in cfg else ""
        ref = " +reference" if cfg.get("reference") else ""
        print(f"  {name:16s} {cfg['problem']:9s} {shape}{extra}{ref}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "check":
        return cmd_check(args)
    return cmd_list()


if __name__ == "__main__":
    sys.exit(main())
