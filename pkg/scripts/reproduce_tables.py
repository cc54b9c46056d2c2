"""Print the 7-bus voltage tables: Pade solution next to flat-start Newton-Raphson.

    python3 scripts/reproduce_tables.py [--order 200] [--precision 512]
"""
from __future__ import annotations

import argparse
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from helmpf.netmodel import load_network
from helmpf.nr import nr_solve
from helmpf.solver import SolveConfig, solve

NETWORK = Path(__file__).resolve().parents[1] / "networks" / "7bus.json"


@dataclass
class TableConfig:
    p6: list[float] = field(default_factory=lambda: [0.20, 0.30, 0.75, 1.00, 1.02, 1.12])
    nr_region: list[float] = field(
        default_factory=lambda: [round(1.0416 + k * 1e-4, 4) for k in range(9)])
    order: int = 200
    precision: int | None = None


def _fmt(vals):
    return " ".join(f"{v:.4f}" for v in vals)


def main(cfg: TableConfig):
    base = load_network(NETWORK)
    scfg = SolveConfig(max_order=cfg.order, precision=cfg.precision)
    print(f"{'P6':>7}  {'verdict':<12} {'|V1..V4| (HELM)':<29} {'|V1..V4| (NR)':<29} secs")
    for p6 in cfg.p6:
        net = base.with_value("6", "p_gen", p6)
        t0 = time.perf_counter()
        rep = solve(net, scfg)
        dt = time.perf_counter() - t0
        helm = _fmt(rep.vmag(b) for b in "1234") if rep.voltages else "-"
        out = nr_solve(net)
        nr = _fmt(np.abs(out.voltages[:4])) if out.converged else f"({out.reason})"
        print(f"{p6:7.4f}  {rep.verdict:<12} {helm:<29} {nr:<29} {dt:.2f}")

    print("\nNewton-Raphson in the erratic region")
    for p6 in cfg.nr_region:
        out = nr_solve(base.with_value("6", "p_gen", p6))
        desc = _fmt(np.abs(out.voltages[:4])) if out.converged else out.reason
        print(f"{p6:7.4f}  iters={out.iterations:<3d} {desc}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--order", type=int, default=200)
    ap.add_argument("--precision", type=int)
    a = ap.parse_args()
    main(TableConfig(order=a.order, precision=a.precision))
