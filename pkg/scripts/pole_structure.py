"""Diagonal Pade poles of one bus voltage across P6, with the ratio estimate.

Shows how the nearest genuine pole on the positive real axis moves toward
s = 1 as the loading approaches the fold, and crosses it beyond. Zero-pole
CSVs for each case land in results/ for plotting elsewhere.
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass, field
from pathlib import Path

from helmpf.cli import write_output
from helmpf.helm import compute_series, ratio_estimate
from helmpf.netmodel import load_network
from helmpf.numerics import working_precision
from helmpf.pade import pade_from_series, zero_pole, zero_pole_csv

ROOT = Path(__file__).resolve().parents[1]


@dataclass
class PoleConfig:
    p6: list[float] = field(default_factory=lambda: [0.75, 1.00, 1.05, 1.12])
    bus: str = "6"
    degree: int = 60
    precision: int = 1024
    outdir: Path = ROOT / "results"


def main(cfg: PoleConfig):
    base = load_network(ROOT / "networks" / "7bus.json")
    cfg.outdir.mkdir(parents=True, exist_ok=True)
    for p6 in cfg.p6:
        st = compute_series(base.with_value("6", "p_gen", p6), 2 * cfg.degree, cfg.precision)
        coeffs = st.c[cfg.bus][: 2 * cfg.degree + 1]
        sb = ratio_estimate(coeffs).sb
        with working_precision(cfg.precision):
            zp = zero_pole(pade_from_series(coeffs, cfg.degree, cfg.degree), cfg.bus, f"p6={p6}")
        near = sorted(z.real for z in map(complex, zp.genuine_poles())
                      if z.real > 0 and abs(z.imag) <= 0.05)
        nflag = sum(zp.pole_froissart)
        print(f"P6={p6:.3f}  nearest real pole {near[0] if near else float('nan'):.5f}  "
              f"ratio estimate {sb.real:+.5f}{sb.imag:+.5f}j  doublets {nflag}")
        write_output(zero_pole_csv([zp]), str(cfg.outdir / f"zeropole_p6_{p6:.3f}.csv"))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p6", type=float, nargs="+", default=PoleConfig().p6)
    ap.add_argument("--bus", default="6")
    ap.add_argument("--degree", type=int, default=60)
    ap.add_argument("--precision", type=int, default=1024)
    a = ap.parse_args()
    main(PoleConfig(a.p6, a.bus, a.degree, a.precision))
