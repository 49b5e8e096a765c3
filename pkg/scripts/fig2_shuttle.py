"""Well count and equipotential contours over a voltage sweep.

Default scenario: a middle-electrode bump on a harmonic background, which
splits the string into two wells.  ``--baseline`` instead sweeps the
five-electrode baseline along (0, 1, 0, -1, 0).
"""
import argparse
from pathlib import Path

import numpy as np

from ionpotential import Harmonic
from ionpotential.io import SvgPlot, write_csv
from ionpotential.isolation import ShuttleScenario, equipotential_contours, grid_scan_wells, shuttle_scan


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("-o", "--out", default="out/fig2")
    ap.add_argument("--baseline", action="store_true", help="sweep the five-electrode baseline instead")
    ap.add_argument("--spacing-mev", type=float, default=0.4)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)

    if args.baseline:
        scen = ShuttleScenario(domain_um=(-200.0, 200.0))
        deltas = np.round(np.linspace(-1.0, 1.0, 21), 6)
    else:
        scen = ShuttleScenario(baseline=(0.0,) * 5, direction=(0, 0, 1, 0, 0), background=Harmonic(1.25e-4))
        deltas = np.round(np.arange(0, 0.0101, 0.0005), 6)
    scan = shuttle_scan(scen, deltas, workers=args.workers)

    xg = np.linspace(-150, 150, 30001)
    oracle = [grid_scan_wells(lambda x: scen.potential_at(d).value(x), xg) if s == "ok" else 0
              for d, s in zip(deltas, scan.status)]
    write_csv(out / "wells.csv", ["delta_V", "status", "n_wells", "oracle_wells", "minima_um"],
              [[d, s, n, o, ";".join(f"{m:.3f}" for m in mins)]
               for d, s, n, o, mins in zip(deltas, scan.status, scan.well_counts, oracle, scan.minima)])

    p = SvgPlot(f"equipotentials, {args.spacing_mev:g} meV spacing", "x (um)", "delta (V)")
    for level, lines in equipotential_contours(scan, args.spacing_mev * 1e-3):
        for ln in lines:
            p.line(ln[:, 1], ln[:, 0], width=0.8)
    pts = [(m, d) for d, mins in zip(deltas, scan.minima) for m in mins]
    if pts:
        p.points([a for a, _ in pts], [b for _, b in pts], color="#d62728", label="minima")
    p.save(out / "fig2_contours.svg")
    for d, n, o in zip(deltas, scan.well_counts, oracle):
        print(f"delta {d * 1e3:8.2f} mV  wells {n}  grid oracle {o}")


if __name__ == "__main__":
    main()
