#!/usr/bin/env python3
"""Certify a seeded family of scrambled devices and summarize the residuals."""
from __future__ import annotations

import argparse
import itertools
import time
from dataclasses import dataclass

import numpy as np

from bellcert import devices
from bellcert.engine import Tolerances, self_test


@dataclass(frozen=True)
class FamilyConfig:
    count: int = 50
    base_seed: int = 1000
    garbage_dims: tuple[int, ...] = (1, 2, 3, 4)
    pads: tuple[int, ...] = (0, 1, 2, 3)


def parameter_grid(cfg: FamilyConfig):
    grid = list(itertools.product(cfg.garbage_dims, cfg.garbage_dims, cfg.pads, cfg.pads))
    rng = np.random.default_rng(cfg.base_seed)
    order = rng.permutation(len(grid))
    return [grid[i] for i in order[: cfg.count]]


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--count", type=int, default=FamilyConfig.count)
    p.add_argument("--seed", type=int, default=FamilyConfig.base_seed)
    args = p.parse_args()
    cfg = FamilyConfig(count=args.count, base_seed=args.seed)
    tol = Tolerances()

    rows, start = [], time.perf_counter()
    for k, (ga, gb, pa, pb) in enumerate(parameter_grid(cfg)):
        d = devices.scramble(ga, gb, pa, pb, seed=cfg.base_seed + k)
        r = self_test(d, tol)
        if r.certified:
            rows.append((d.shape, r.dim_e_a, r.dim_e_b, r.residuals))
            status = "certified"
        else:
            status = f"refused({r.stage})"
        print(f"seed {cfg.base_seed + k:5d}  gA={ga} gB={gb} pads=({pa},{pb})  dims={tuple(d.shape)}  {status}")

    elapsed = time.perf_counter() - start
    print(f"\n{len(rows)}/{cfg.count} certified in {elapsed:.2f} s")
    for key in ("cond1", "cond2", "cond3"):
        vals = np.array([res[key] for *_, res in rows])
        if vals.size:
            print(f"{key}: max {vals.max():.2e}  median {np.median(vals):.2e}")


if __name__ == "__main__":
    main()
