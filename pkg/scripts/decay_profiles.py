#!/usr/bin/env python3
"""Integrate every bundled problem from a shared random datum and tabulate
energy decay and contraction margins (plot-ready CSV on stdout)."""

import argparse

import numpy as np

from jflow import checks
from jflow.flow import evolve, semigroup_distance
from jflow.problems import builtin_problems, load_problem


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--tau", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print("problem,dim,energy_initial,energy_final,max_euler_gap,max_distance_increase")
    for name, cfg in builtin_problems().items():
        pair = load_problem(cfg).pair
        rng = np.random.default_rng(args.seed)
        u0 = checks.sample_states(pair, 1, rng)[0]
        traj = evolve(pair, u0, args.T, args.tau)
        diffs = np.diff(traj.states, axis=0)
        steps2 = (diffs * diffs) @ pair.space.weights
        gap = float(np.max(traj.energies[1:] + steps2 / (2 * args.tau) - traj.energies[:-1]))
        v0 = u0 + 0.1 * checks.sample_states(pair, 1, rng)[0]
        dist = semigroup_distance(pair, u0, v0, args.T, args.tau)
        print(
            f"{name},{pair.space.dim},{traj.energies[0]:.6g},{traj.energies[-1]:.6g},"
            f"{gap:.3g},{float(np.max(np.diff(dist))):.3g}"
        )


if __name__ == "__main__":
    main()
