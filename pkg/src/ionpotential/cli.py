"""Command-line pipelines.

    ionpotential simulate scenario.json -o out/
    ionpotential reconstruct out/manifest.json -o out/
    ionpotential isolate out/session.json --electrode 2 -o out/
    ionpotential shuttle scenario.json -o out/
    ionpotential image-gen out/positions.csv --seed 1 -o out/
    ionpotential image-fit out/frame.png -o out/

Every step reads and writes plain files.  Exit codes: 0 success, 1 usage or
configuration error, 2 partial numerical failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ConfigError, ImagingConfig, ScenarioConfig, resolve_config_path
from .equilibrium import ConvergenceError, solve_equilibrium
from .imaging import FitConfig, Frame, NoPeaksError, column_profile, estimate_background, fit_positions, render_frame
from .io import (MalformedFileError, SvgPlot, config_hash, file_hash, fmt, numeric_columns, read_csv, read_json,
                 read_png16, write_csv, write_json, write_png16)
from .isolation import (DisconnectedError, MeasurementRecord, ShuttleScenario, equipotential_contours,
                        isolate_electrode, shuttle_scan)
from .physics import DomainError, IonString, UnitSystem, convert
from .reconstruction import PotentialCurve, offset_label, parse_offset, reconstruct
from .trap import TrapGeometry, strip_unit_potential

log = logging.getLogger("ionpotential")

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _units_meta(mode: str, units: UnitSystem) -> dict:
    return {"units": mode, "length_unit_m": units.length_unit, "energy_unit_eV": units.energy_unit}


def _units_from_meta(meta: dict) -> UnitSystem:
    try:
        return UnitSystem(length_unit=float(meta.get("length_unit_m", 1e-6)))
    except ValueError as exc:
        raise MalformedFileError(f"bad length_unit_m in header: {exc}") from None


def _out(args, default: str = "out") -> Path:
    return Path(args.out if args.out is not None else default)


# -- positions and curves ------------------------------------------------------


def write_positions(path, positions, units: UnitSystem, mode: str, meta: dict, sigma=None) -> Path:
    x = np.asarray(positions, dtype=float)
    if mode == "physical":
        cols = ["index", "x_um"]
        vals = [convert(x, "length", "um", units)]
        if sigma is not None:
            cols.append("sigma_um")
            vals.append(convert(np.asarray(sigma, dtype=float), "length", "um", units))
    else:
        cols = ["index", "x"]
        vals = [x] + ([np.asarray(sigma, dtype=float)] if sigma is not None else [])
        if sigma is not None:
            cols.append("sigma")
    rows = [[i] + [v[i] for v in vals] for i in range(x.size)]
    return write_csv(path, cols, rows, {**meta, **_units_meta(mode, units)})


def read_positions(path):
    """Ion positions (internal units) and optional sigma from a positions or fit CSV."""
    meta, cols, _ = read_csv(path)
    units = _units_from_meta(meta)
    if "x_um" in cols:
        meta, c = numeric_columns(path, ["x_um"], ["sigma_um"])
        x = convert(c["x_um"], "um", "length", units)
        sig = convert(c["sigma_um"], "um", "length", units) if "sigma_um" in c else None
    elif "x" in cols:
        meta, c = numeric_columns(path, ["x"], ["sigma"])
        x, sig = c["x"], c.get("sigma")
    else:
        raise MalformedFileError(f"{path}: needs an 'x_um' or 'x' column")
    if not np.all(np.isfinite(x)):
        raise MalformedFileError(f"{path}: non-finite positions")
    return np.asarray(x, dtype=float), sig, units, meta


def write_curve(path, curve: PotentialCurve, mode: str, meta: dict) -> Path:
    c = curve.to_physical() if mode == "physical" else curve.to_internal()
    cols = ["x_um", "psi_eV"] if mode == "physical" else ["x", "psi"]
    vals = [c.x, c.psi]
    if c.sigma is not None:
        cols.append("sigma_eV" if mode == "physical" else "sigma")
        vals.append(c.sigma)
    rows = list(zip(*vals))
    extra = {"offset": c.offset, "domain": list(c.domain)}
    if c.step is not None:
        extra["step"] = c.step
    return write_csv(path, cols, rows, {**meta, **extra, **_units_meta(mode, curve.units)})


def read_curve(path) -> PotentialCurve:
    """Curve CSV as a physical (um, eV) PotentialCurve."""
    meta, cols, _ = read_csv(path)
    units = _units_from_meta(meta)
    step = float(meta["step"]) if "step" in meta else None
    if "x_um" in cols:
        meta, c = numeric_columns(path, ["x_um", "psi_eV"], ["sigma_eV"])
        curve = PotentialCurve(c["x_um"], c["psi_eV"], meta.get("offset", "raw"), c.get("sigma_eV"), True,
                               units, step)
    else:
        meta, c = numeric_columns(path, ["x", "psi"], ["sigma"])
        curve = PotentialCurve(c["x"], c["psi"], meta.get("offset", "raw"), c.get("sigma"), False,
                               units, step).to_physical()
    return curve


# -- simulate ------------------------------------------------------------------


def _solve_record(cfg: ScenarioConfig, rec: dict):
    try:
        res = solve_equilibrium(cfg.potential_for(rec), cfg.n_ions, cfg.solver, units=cfg.units)
    except (ConvergenceError, ValueError) as exc:
        return None, f"failed: {exc}"
    if not res.converged:
        return res, "failed: not converged"
    return res, "ok" if res.stable else "unstable"


def cmd_simulate(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    out = _out(args, cfg.output_dir)
    recs = cfg.records()
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(lambda r: _solve_record(cfg, r), recs))
    else:
        results = [_solve_record(cfg, r) for r in recs]

    digest = cfg.sha256()
    entries = []
    for rec, (res, status) in zip(recs, results):
        name = "positions.csv" if len(recs) == 1 else f"positions_{rec['index']:03d}.csv"
        entry = {**rec, "status": status, "positions": None}
        if res is not None:
            meta = {"command": "simulate", "config_sha256": digest, "n_ions": cfg.n_ions, "delta_V": rec["delta"],
                    "status": status, "residual": res.residual, "iterations": res.iterations}
            if rec["voltages"] is not None:
                meta["voltages_V"] = rec["voltages"]
            if rec["station_um"] is not None:
                meta["station_um"] = rec["station_um"]
            write_positions(out / name, res.positions, cfg.units, args.units, meta)
            entry.update(positions=name, residual=res.residual, iterations=res.iterations, stable=res.stable)
        else:
            log.warning("record %d (delta=%g): %s", rec["index"], rec["delta"], status)
        entries.append(entry)

    m = cfg.geometry.n_electrodes
    cols = ["index", "delta_V"] + ([f"V{i + 1}" for i in range(m)] if cfg.is_trap else []) \
        + ["station_um", "status", "file"]
    rows = []
    for e in entries:
        volts = e["voltages"] if cfg.is_trap else []
        st = "" if e["station_um"] is None else e["station_um"]
        rows.append([e["index"], e["delta"], *volts, st, e["status"], e["positions"] or ""])
    write_csv(out / "manifest.csv", cols, rows, {"command": "simulate", "config_sha256": digest})
    write_json(out / "manifest.json", {"schema_version": cfg.schema_version, "command": "simulate",
                                       "config_sha256": digest, "config": cfg.to_dict(),
                                       "geometry": cfg.geometry.to_dict() if cfg.is_trap else None,
                                       "electrode": cfg.electrode if cfg.is_trap else None,
                                       "units": args.units, "records": entries})
    failed = [e for e in entries if e["status"].startswith("failed")]
    print(f"simulate: {len(entries) - len(failed)}/{len(entries)} records converged -> {out}")
    return EXIT_PARTIAL if failed else EXIT_OK


# -- reconstruct ---------------------------------------------------------------


def _curve_plot(curves, title: str, string_x=None) -> SvgPlot:
    plot = SvgPlot(title, "x (um)", "psi (eV)")
    for i, c in enumerate(curves):
        c = c.to_physical()
        if c.sigma is not None:
            plot.band(c.x, c.psi - 3 * c.sigma, c.psi + 3 * c.sigma, color="#1f77b4")
        plot.line(c.x, c.psi, color=None if len(curves) > 1 else "#1f77b4", width=1.5)
    if string_x is not None and len(curves) == 1:
        c = curves[0].to_physical()
        xs = convert(string_x, "length", "um", c.units)
        plot.points(xs, c(np.clip(xs, *c.domain)), color="#d62728")
    return plot


def _reconstruct_file(path: Path, args, out_csv: Path, extra_meta: Optional[dict] = None):
    x, sig, units, _ = read_positions(path)
    if x.size < 2:
        raise ConfigError(f"{path}: reconstruction needs at least two ions, found {x.size}")
    if np.any(np.diff(x) < 0):
        log.warning("%s: rows not ordered by position; sorting", path)
        order = np.argsort(x, kind="stable")
        x = x[order]
        sig = sig[order] if sig is not None else None
    string = IonString(x, units, sig)
    step = float(convert(args.grid_um, "um", "length", units))
    psig = None if args.position_sigma_um is None else float(convert(args.position_sigma_um, "um", "length", units))
    curve = reconstruct(string, step, args.offset, position_sigma=psig, n_replicas=args.replicas, seed=args.seed)
    opts = {"grid_um": args.grid_um, "offset": offset_label(args.offset), "replicas": args.replicas,
            "seed": args.seed, "position_sigma_um": args.position_sigma_um, "units": args.units}
    digest = config_hash({"command": "reconstruct", "options": opts, "input_sha256": file_hash(path)})
    meta = {"command": "reconstruct", "config_sha256": digest, "n_ions": x.size, **(extra_meta or {})}
    write_curve(out_csv, curve, args.units, meta)
    return curve, string


def cmd_reconstruct(args) -> int:
    src = Path(args.input)
    out = _out(args, str(src.parent))
    parse_offset(args.offset)
    if src.suffix.lower() != ".json":
        curve, string = _reconstruct_file(src, args, out / "curve.csv")
        _curve_plot([curve], f"reconstructed potential ({len(string)} ions)", string.positions).save(out / "curve.svg")
        print(f"reconstruct: {len(string)} ions -> {out / 'curve.csv'}")
        return EXIT_OK

    manifest = read_json(src)
    try:
        entries = manifest["records"]
    except (KeyError, TypeError):
        raise MalformedFileError(f"{src}: manifest lacks 'records'") from None
    session, curves, partial = [], [], False
    for e in entries:
        if not e.get("positions"):
            partial = True
            continue
        name = f"curve_{int(e['index']):03d}.csv"
        try:
            curve, _ = _reconstruct_file(src.parent / e["positions"], args, out / name,
                                         {"delta_V": e.get("delta", 0.0)})
        except (ValueError, DomainError) as exc:
            if isinstance(exc, MalformedFileError):
                raise
            log.warning("record %s: %s", e.get("index"), exc)
            partial = True
            continue
        curves.append(curve)
        session.append({"index": e["index"], "voltages": e.get("voltages"), "electrode": manifest.get("electrode"),
                        "delta": e.get("delta", 0.0), "background": e.get("background", ""), "curve": name})
    write_json(out / "session.json", {"schema_version": manifest.get("schema_version", 1), "command": "reconstruct",
                                      "source_sha256": file_hash(src), "geometry": manifest.get("geometry"),
                                      "electrode": manifest.get("electrode"), "records": session})
    if curves:
        _curve_plot(curves, f"reconstructed potentials ({len(curves)} records)").save(out / "curves.svg")
    print(f"reconstruct: {len(curves)}/{len(entries)} records -> {out / 'session.json'}")
    return EXIT_PARTIAL if partial or not curves else EXIT_OK


# -- isolate -------------------------------------------------------------------


def cmd_isolate(args) -> int:
    src = Path(args.session)
    session = read_json(src)
    electrode = args.electrode if args.electrode is not None else session.get("electrode")
    if electrode is None:
        raise ConfigError("no electrode given and none recorded in the session")
    records = []
    try:
        for r in session["records"]:
            if r.get("voltages") is None:
                raise ConfigError("isolation needs records with voltage vectors")
            if int(r.get("electrode", electrode)) != electrode:
                continue
            records.append(MeasurementRecord(tuple(r["voltages"]), int(electrode), float(r["delta"]),
                                             read_curve(src.parent / r["curve"]), r.get("background", "")))
    except (KeyError, TypeError) as exc:
        raise MalformedFileError(f"{src}: bad record: {exc}") from None
    if not records:
        raise ConfigError(f"session has no records for electrode {electrode}")

    geometry = TrapGeometry.from_dict(session["geometry"]) if session.get("geometry") else None
    analytic = None
    if geometry is not None:
        strip, h = geometry.strips[electrode], geometry.height
        analytic = lambda x: strip_unit_potential(x, strip, h)  # noqa: E731
    if args.anchor == "analytic" and analytic is None:
        raise ConfigError("analytic anchoring needs a trap geometry in the session")

    try:
        unit, segs, offsets = isolate_electrode(records, args.pairs, args.delta_min_mv * 1e-3, args.weighting,
                                                args.grid_um)
    except DisconnectedError as exc:
        print(f"isolate: {exc}", file=sys.stderr)
        for comp, (a, b) in zip(exc.components, exc.intervals):
            print(f"  component {list(comp)}: [{a:g}, {b:g}] um", file=sys.stderr)
        return EXIT_PARTIAL
    # constant applied on top of the first-segment gauge
    shift = 0.0
    if args.anchor == "analytic":
        anchored = unit.anchored(analytic)
        shift = float(anchored.psi[0] - unit.psi[0])
        unit = anchored

    out = _out(args, str(src.parent))
    units = records[0].curve.units
    opts = {"electrode": electrode, "pairs": args.pairs, "weighting": args.weighting,
            "delta_min_mv": args.delta_min_mv, "grid_um": args.grid_um, "anchor": args.anchor, "units": args.units}
    digest = config_hash({"command": "isolate", "options": opts, "input_sha256": file_hash(src),
                          "curves": [file_hash(src.parent / r["curve"]) for r in session["records"]]})
    meta = {"command": "isolate", "config_sha256": digest, "electrode": electrode, "n_segments": len(segs),
            "anchor": args.anchor, **_units_meta(args.units, units)}

    def xs(x):
        return x if args.units == "physical" else convert(x, "um", "length", units)

    def es(v):
        return v if args.units == "physical" else convert(v, "eV", "energy", units)

    xcol, pcol = ("x_um", "psi_eV_per_V") if args.units == "physical" else ("x", "psi_per_V")
    write_csv(out / "unit_potential.csv", [xcol, pcol, "spread", "count"],
              zip(xs(unit.x), es(unit.psi), es(unit.spread), unit.count), meta)
    rows = []
    for k, (s, c) in enumerate(zip(segs, offsets)):
        rows += [[k, s.pair[0], s.pair[1], s.delta_a, s.delta_b, a, b]
                 for a, b in zip(xs(s.x), es(s.values + c + shift))]
    write_csv(out / "segments.csv", ["segment", "record_a", "record_b", "delta_a_V", "delta_b_V", xcol, pcol],
              rows, meta)

    plot = SvgPlot(f"electrode {electrode} unit potential", "x (um)", "psi (eV per V)")
    for s, c in zip(segs, offsets):
        plot.line(s.x, s.values + c + shift, color="#9ecae1", width=0.8)
    plot.line(unit.x, unit.psi, color="#08306b", width=2.5, label="average")
    if analytic is not None and args.overlay:
        truth = np.asarray(analytic(unit.x))
        truth = truth - np.mean(truth - unit.psi)
        plot.line(unit.x, truth, color="#d62728", width=1.2, dash="5,3", label="trap model")
    plot.save(out / "unit_potential.svg")
    print(f"isolate: {len(segs)} segments over {unit.extent:g} um -> {out / 'unit_potential.csv'}")
    return EXIT_OK


# -- shuttle -------------------------------------------------------------------


def cmd_shuttle(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    if not cfg.is_trap or cfg.baseline is None:
        raise ConfigError("shuttle needs a trap scenario with a baseline and deltas")
    if cfg.stations_um is not None:
        raise ConfigError("shuttle scans use a single station")
    grid_um = args.grid_um if args.grid_um is not None else cfg.grid_um
    offset = args.offset if args.offset is not None else cfg.offset
    spacing_mev = args.spacing_mev if args.spacing_mev is not None else cfg.contour_spacing_mev
    workers = args.workers if args.workers is not None else cfg.workers
    scen = ShuttleScenario(cfg.geometry, cfg.baseline, tuple(cfg.direction_vector()), cfg.n_ions,
                           cfg.background_at(None), cfg.units, cfg.domain_um)
    scan = shuttle_scan(scen, cfg.deltas, cfg.solver, grid_um, offset, workers=workers)
    contours = equipotential_contours(scan, spacing_mev * 1e-3)

    out = _out(args, cfg.output_dir)
    opts = {"grid_um": grid_um, "offset": offset_label(offset), "spacing_mev": spacing_mev}
    digest = config_hash({"command": "shuttle", "config": cfg.to_dict(), "options": opts})
    meta = {"command": "shuttle", "config_sha256": digest, "contour_spacing_eV": spacing_mev * 1e-3,
            **_units_meta("physical", cfg.units)}
    write_csv(out / "shuttle_map.csv", ["delta_V", "n_wells"] + [f"psi_eV@x_um={fmt(x)}" for x in scan.x],
              [[d, n, *row] for d, n, row in zip(scan.deltas, scan.well_counts, scan.psi)], meta)
    write_csv(out / "wells.csv", ["delta_V", "status", "n_wells", "minima_um"],
              [[d, s, n, ";".join(fmt(v) for v in m)]
               for d, s, n, m in zip(scan.deltas, scan.status, scan.well_counts, scan.minima)], meta)
    crow = []
    for lev, lines in contours:
        for j, line in enumerate(lines):
            crow += [[lev, j, d, x] for d, x in line]
    write_csv(out / "contours.csv", ["level_eV", "line", "delta_V", "x_um"], crow, meta)

    plot = SvgPlot(f"potential contours, {spacing_mev:g} meV spacing", "x (um)", "delta (V)")
    for lev, lines in contours:
        for line in lines:
            plot.line(line[:, 1], line[:, 0], color="#1f77b4", width=0.8)
    for d, m in zip(scan.deltas, scan.minima):
        if len(m):
            plot.points(m, np.full(len(m), d), color="#d62728", r=2.0)
    plot.save(out / "shuttle_contours.svg")
    failed = sum(s != "ok" for s in scan.status)
    print(f"shuttle: {len(scan.deltas) - failed}/{len(scan.deltas)} deltas, wells {scan.well_counts.tolist()} -> {out}")
    return EXIT_PARTIAL if failed else EXIT_OK


# -- imaging -------------------------------------------------------------------


def _imaging_config(args) -> tuple[ImagingConfig, Optional[int]]:
    if args.config is not None:
        cfg = ScenarioConfig.load(args.config)
        return cfg.imaging, cfg.seed
    return ImagingConfig(), 0


def cmd_image_gen(args) -> int:
    img, seed = _imaging_config(args)
    if args.seed is not None:
        seed = args.seed
    x, _, units, _ = read_positions(args.positions)
    x_um = convert(x, "length", "um", units)
    cols = img.shape[1]
    origin = img.origin_um if img.origin_um is not None else float(np.mean(x_um)) - 0.5 * img.pitch_um * (cols - 1)
    frame = render_frame(x_um - origin, img.psf_sigma_um, img.peak_counts, img.background_columns(), img.pitch_um,
                         img.shape, seed, img.exposure_s)
    if frame.counts.max() > 65535:
        log.warning("counts exceed 16 bits; PNG output is clipped")
    out = _out(args)
    meta = {"command": "image-gen", "seed": "none" if seed is None else seed, "origin_um": origin,
            "pitch_um": img.pitch_um, "psf_sigma_um": img.psf_sigma_um, "exposure_s": img.exposure_s,
            "config_sha256": config_hash({"imaging": img.__dict__, "seed": seed,
                                          "input_sha256": file_hash(args.positions)})}
    write_png16(out / "frame.png", frame.counts, meta)
    write_csv(out / "frame.csv", [f"c{j}" for j in range(cols)], frame.counts, meta)
    print(f"image-gen: {len(x)} ions, {img.shape[0]}x{cols} px -> {out / 'frame.png'}")
    return EXIT_OK


def _read_frame(path: Path) -> tuple[np.ndarray, dict]:
    if path.suffix.lower() == ".png":
        return read_png16(path)
    meta, _, rows = read_csv(path)
    try:
        return np.array([[float(v) for v in r] for r in rows]), meta
    except ValueError as exc:
        raise MalformedFileError(f"{path}: {exc}") from None


def cmd_image_fit(args) -> int:
    img, _ = _imaging_config(args)
    path = Path(args.frame)
    counts, meta = _read_frame(path)
    if counts.ndim != 2 or counts.size == 0:
        raise MalformedFileError(f"{path}: not a 2D count matrix")
    pitch = float(meta.get("pitch_um", img.pitch_um))
    origin = float(meta.get("origin_um", img.origin_um or 0.0))
    psf_um = float(meta.get("psf_sigma_um", img.psf_sigma_um))
    fc = FitConfig(psf_sigma_px=psf_um / pitch, background_window=img.background_window,
                   threshold_sigma=img.threshold_sigma)
    frame = Frame(counts, pitch, img.exposure_s)
    prof = column_profile(frame)
    bg = estimate_background(prof, fc.background_window, fc.threshold_sigma)
    try:
        fit = fit_positions(prof, bg, fc, pitch)
    except NoPeaksError as exc:
        print(f"image-fit: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    x_um = origin + fit.positions_um
    out = _out(args)
    units = UnitSystem()
    digest = config_hash({"frame_sha256": file_hash(path), "fit": fc.__dict__, "origin_um": origin})
    fmeta = {"command": "image-fit", "config_sha256": digest, "origin_um": origin, "pitch_um": pitch,
             "n_merged": int(fit.merged.sum()), **_units_meta("physical", units)}
    write_csv(out / "fit.csv", ["index", "x_px", "x_um", "sigma_um"],
              [[i, p, u, s] for i, (p, u, s) in enumerate(zip(fit.positions_px, x_um, fit.sigma_um))], fmeta)
    plot = SvgPlot("column profile", "column (px)", "counts")
    plot.line(prof.columns, prof.counts, color="#1f77b4", width=1.0, label="profile")
    plot.line(prof.columns, bg, color="#d62728", width=1.5, label="background")
    plot.points(fit.positions_px, np.interp(fit.positions_px, prof.columns, prof.counts), color="#2ca02c")
    plot.save(out / "profile.svg")
    print(f"image-fit: {fit.positions_px.size} ions -> {out / 'fit.csv'}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ionpotential", description="Axial potentials from trapped-ion string positions.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, units=True):
        sp.add_argument("-o", "--out", help="output directory")
        if units:
            sp.add_argument("--units", choices=("internal", "physical"), default="physical",
                            help="units of written positions and curves (default: physical)")

    s = sub.add_parser("simulate", help="equilibrium positions for a scenario")
    s.add_argument("config", help="scenario JSON (looked up in $IONPOTENTIAL_CONFIG_DIR if not found)")
    s.add_argument("--workers", type=int, help="threads for independent records")
    common(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("reconstruct", help="potential curve(s) from positions CSV or a simulate manifest")
    s.add_argument("input", help="positions/fit CSV or manifest.json")
    s.add_argument("--grid-um", type=float, default=1.0, help="output grid spacing in um (default 1)")
    s.add_argument("--offset", default="min-zero", help="min-zero | mean-zero | anchor=<x internal>")
    s.add_argument("--replicas", type=int, default=0, help="Monte Carlo replicas for an uncertainty band")
    s.add_argument("--position-sigma-um", type=float, help="position uncertainty for the band")
    s.add_argument("--seed", type=int, default=0)
    common(s)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("isolate", help="single-electrode unit potential from a session")
    s.add_argument("session", help="session.json written by reconstruct")
    s.add_argument("--electrode", type=int, help="electrode index (default: from session)")
    s.add_argument("--delta-min-mv", type=float, default=10.0, help="smallest usable delta difference (mV)")
    s.add_argument("--grid-um", type=float, help="common grid spacing in um (default: finest curve grid)")
    s.add_argument("--pairs", choices=("all", "adjacent"), default="all")
    s.add_argument("--weighting", choices=("uniform", "variance"), default="uniform")
    s.add_argument("--anchor", choices=("segment", "analytic"), default="segment",
                   help="fix the free constant by the first segment or by the trap model")
    s.add_argument("--no-overlay", dest="overlay", action="store_false", help="omit the trap-model overlay")
    common(s)
    s.set_defaults(func=cmd_isolate)

    s = sub.add_parser("shuttle", help="potential map and wells over a delta sweep")
    s.add_argument("config")
    s.add_argument("--grid-um", type=float)
    s.add_argument("--offset")
    s.add_argument("--spacing-mev", type=float, help="contour spacing (default 0.4 meV)")
    s.add_argument("--workers", type=int)
    common(s, units=False)
    s.set_defaults(func=cmd_shuttle)

    s = sub.add_parser("image-gen", help="synthetic camera frame from positions")
    s.add_argument("positions")
    s.add_argument("--config", help="scenario JSON providing imaging settings and seed")
    s.add_argument("--seed", type=int)
    common(s, units=False)
    s.set_defaults(func=cmd_image_gen)

    s = sub.add_parser("image-fit", help="ion positions from a frame (PNG or CSV)")
    s.add_argument("frame")
    s.add_argument("--config", help="scenario JSON providing imaging settings")
    common(s, units=False)
    s.set_defaults(func=cmd_image_fit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "config", None) is not None and args.command in ("simulate", "shuttle"):
            args.config = resolve_config_path(args.config)
        return args.func(args)
    except MalformedFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
