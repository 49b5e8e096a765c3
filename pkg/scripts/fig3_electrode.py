"""Single-electrode unit potential stitched from several string stations.

Solves every (station, delta) record of a scenario config, reconstructs
each curve, differences, aligns and averages them, and compares with the
analytic strip potential.
"""
import argparse
from pathlib import Path

import numpy as np

from ionpotential import reconstruct, solve_equilibrium
from ionpotential.config import ScenarioConfig
from ionpotential.io import SvgPlot, write_json
from ionpotential.isolation import MeasurementRecord, isolate_electrode
from ionpotential.trap import strip_unit_potential

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(HERE.parent / "configs" / "electrode_stations.json"))
    ap.add_argument("-o", "--out", default="out/fig3")
    args = ap.parse_args()
    cfg = ScenarioConfig.load(args.config)
    out = Path(args.out)

    recs, extents = [], []
    for rec in cfg.records():
        r = solve_equilibrium(cfg.potential_for(rec), cfg.n_ions, cfg.solver, units=cfg.units)
        curve = reconstruct(r.string, grid_step=cfg.grid_um).to_physical()
        extents.append(curve.domain[1] - curve.domain[0])
        recs.append(MeasurementRecord(tuple(rec["voltages"]), cfg.electrode, rec["delta"], curve,
                                      rec["background"]))
    strip = cfg.geometry.strips[cfg.electrode]
    truth = lambda x: strip_unit_potential(x, strip, cfg.geometry.height)  # noqa: E731
    unit, segs, offsets = isolate_electrode(recs, cfg.pairs, cfg.delta_min_mv * 1e-3, cfg.weighting)
    anchored = unit.anchored(truth)
    shift = float(anchored.psi[0] - unit.psi[0])  # moves the segments into the anchored gauge
    unit = anchored

    p = SvgPlot(f"electrode {cfg.electrode} unit potential", "x (um)", "psi (eV per V)")
    for s, c in zip(segs, offsets):
        p.line(s.x, s.values + c + shift, color="#9ecae1", width=0.8)
    p.line(unit.x, unit.psi, color="#08306b", width=2.5, label="average")
    p.line(unit.x, truth(unit.x), color="#d62728", dash="5,3", label="strip model")
    p.save(out / "fig3_unit_potential.svg")

    tv = truth(unit.x)
    summary = {"stations": len(cfg.stations_um or ()), "segments": len(segs),
               "longest_string_um": max(extents), "stitched_extent_um": unit.extent,
               "peak_relative_error": float(np.max(np.abs(unit.psi - tv)) / np.max(np.abs(tv)))}
    write_json(out / "fig3_summary.json", summary)
    for k, v in summary.items():
        print(f"{k}: {v}")


if __name__ == "__main__":
    main()
