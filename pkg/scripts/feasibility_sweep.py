"""Sweep P6 on the 7-bus network and bisect the feasibility boundaries.

Writes the per-point CSV to results/sweep_p6.csv and prints the boundaries.
The default grid takes a few minutes on one core; use --jobs to spread it.
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass
from pathlib import Path

from helmpf.cli import write_output
from helmpf.netmodel import load_network
from helmpf.solver import SolveConfig, SweepParam, sweep, sweep_csv

ROOT = Path(__file__).resolve().parents[1]


@dataclass
class SweepConfig:
    start: float = -0.2
    stop: float = 1.2
    step: float = 0.02
    order: int = 200
    jobs: int = 1
    out: Path = ROOT / "results" / "sweep_p6.csv"


def main(cfg: SweepConfig):
    net = load_network(ROOT / "networks" / "7bus.json")
    param = SweepParam("6", "p_gen", cfg.start, cfg.stop, cfg.step)
    res = sweep(net, param, SolveConfig(max_order=cfg.order), jobs=cfg.jobs)
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    write_output(sweep_csv(res, net), str(cfg.out))
    for b in res.boundaries:
        print(f"boundary P6 = {b.estimate:.5f}  in [{b.lo:.5f}, {b.hi:.5f}], "
              f"feasible on the {b.feasible_side} side")
    print(f"{len(res.points)} solves written to {cfg.out}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--start", type=float, default=-0.2)
    ap.add_argument("--stop", type=float, default=1.2)
    ap.add_argument("--step", type=float, default=0.02)
    ap.add_argument("--order", type=int, default=200)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=SweepConfig.out)
    a = ap.parse_args()
    main(SweepConfig(a.start, a.stop, a.step, a.order, a.jobs, a.out))
