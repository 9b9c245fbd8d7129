#!/usr/bin/env python3
"""Sweep perturbation strength and record where and why devices get refused.

Running with a loose ``--gate`` lets perturbed devices past the statistics
gate so the later stages (propositions, isomorphism, extraction) show their
own residuals.
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass

from bellcert import devices
from bellcert.engine import Tolerances, self_test


@dataclass(frozen=True)
class SweepConfig:
    epsilons: tuple[float, ...] = (0.0, 1e-4, 1e-3, 0.01, 0.05, 0.1)
    kinds: tuple[str, ...] = ("angle_tilt", "state_perturb")
    seeds: int = 3
    gate: float = 1e-9


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--seeds", type=int, default=SweepConfig.seeds)
    p.add_argument("--gate", type=float, default=SweepConfig.gate, help="statistics/proposition tolerance")
    p.add_argument("--scrambled", action="store_true", help="perturb a scrambled device instead of the ideal one")
    args = p.parse_args()
    cfg = SweepConfig(seeds=args.seeds, gate=args.gate)
    tol = Tolerances(gate=cfg.gate)
    base = devices.scramble(2, 2, 1, 1, seed=0) if args.scrambled else devices.embed_ideal()

    print(f"{'kind':>14} {'eps':>8} {'seed':>4}  {'max |dp|':>9}  verdict")
    for kind in cfg.kinds:
        for eps in cfg.epsilons:
            for seed in range(cfg.seeds):
                r = self_test(devices.perturb(base, kind, eps, seed=seed), tol)
                verdict = "certified" if r.certified else f"refused({r.stage})"
                print(f"{kind:>14} {eps:8.0e} {seed:4d}  {r.gate.max_abs_deviation:9.2e}  {verdict}")


if __name__ == "__main__":
    main()
