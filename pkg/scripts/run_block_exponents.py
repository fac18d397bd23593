#!/usr/bin/env python3
"""Measure how fast the three fresh-block crossing outcomes die off.

A fresh block of N draws either lifts some window sum above N*r_hi, drops one
below N*r_lo, does both, or neither. The first three probabilities decay
exponentially in N; this script estimates them on a grid, fits the decay
slopes and prints them next to the rate-function targets.
"""

import argparse

from histwalk.distributions import Gaussian
from histwalk.experiments import fit_block_exponents


def describe(name, fit):
    lines = [f"{name}:"]
    for n, value, se in zip(fit.ns, fit.values, fit.stderrs):
        lines.append(f"  N={n:<4d} p={value:.6g} (se {se:.2g})")
    target = "none" if fit.target is None else f"{fit.target:.6g}"
    lines.append(f"  slope {fit.slope:.4f} +- {fit.slope_se:.4f}   target {target}")
    return "\n".join(lines)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mu", type=float, default=1.0)
    ap.add_argument("--sigma2", type=float, default=1.0)
    ap.add_argument("--r-lo", type=float, default=0.4)
    ap.add_argument("--r-hi", type=float, default=1.6)
    ap.add_argument("--grid", default="10,20,30,40")
    ap.add_argument("--samples", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()

    grid = tuple(int(x) for x in args.grid.split(","))
    report = fit_block_exponents(
        Gaussian(args.mu, args.sigma2), args.r_lo, args.r_hi, grid, args.samples, args.seed
    )
    for warning in report.warnings:
        print(f"warning: {warning}")
    print(describe("upward crossing", report.up))
    print(describe("downward crossing", report.down))
    if report.both is None:
        print("double crossing: too rare to fit at this sample size")
    else:
        print(describe("double crossing", report.both))
        verdict = "yes" if report.both_dominates_singles else "no"
        print(f"double-crossing slope beats both one-sided slopes: {verdict}")


if __name__ == "__main__":
    main()
