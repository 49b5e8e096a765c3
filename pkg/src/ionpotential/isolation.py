"""Single-electrode potentials from differences of reconstructed curves.

Two measurements that differ only by a voltage step on one electrode
differ, by superposition, by that step times the electrode's unit
potential.  Each pair yields a segment known up to a constant; segments
are aligned on their overlaps and averaged.  The same machinery builds
shuttle-scan maps from a sweep of voltage sets.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .equilibrium import ConvergenceError, SolverConfig, solve_equilibrium
from .physics import DEFAULT_UNITS, UnitSystem, convert
from .potentials import Potential1D
from .reconstruction import PotentialCurve, reconstruct
from .trap import TrapGeometry, TrapPotential, VOLTAGE_RANGE

log = logging.getLogger(__name__)

DELTA_MIN = 0.010  # V
CONTOUR_SPACING_EV = 0.4e-3


class DisconnectedError(ValueError):
    """Segments fall into several groups with no overlap between groups."""

    def __init__(self, components, intervals):
        self.components = components
        self.intervals = intervals
        spans = ", ".join(f"[{a:g}, {b:g}]" for a, b in intervals)
        super().__init__(f"segment overlap graph has {len(components)} components: {spans}")


@dataclass(frozen=True)
class MeasurementRecord:
    """One reconstructed curve with the voltages it was taken at.

    ``voltages`` are the applied voltages (V); ``delta`` is the step applied
    to electrode ``electrode`` relative to its baseline.  ``background``
    labels any fixed contribution not captured by ``voltages``.
    """

    voltages: tuple
    electrode: int
    delta: float
    curve: PotentialCurve
    background: str = ""
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "voltages", tuple(float(v) for v in self.voltages))
        if not 0 <= self.electrode < len(self.voltages):
            raise ValueError(f"electrode index {self.electrode} outside voltage vector")

    @property
    def baseline(self) -> float:
        return self.voltages[self.electrode] - self.delta

    def background_key(self) -> tuple:
        rest = tuple(v for i, v in enumerate(self.voltages) if i != self.electrode)
        return (self.background, self.electrode, rest, round(self.baseline, 12))


@dataclass(frozen=True)
class DifferenceSegment:
    x: np.ndarray
    values: np.ndarray
    pair: tuple
    delta_a: float
    delta_b: float
    step: float
    physical: bool = True
    sigma: Optional[np.ndarray] = None
    offset_known: bool = False

    @property
    def interval(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    @property
    def delta_span(self) -> float:
        return abs(self.delta_a - self.delta_b)

    def shifted(self, c: float) -> "DifferenceSegment":
        return DifferenceSegment(self.x, self.values + c, self.pair, self.delta_a, self.delta_b,
                                 self.step, self.physical, self.sigma, self.offset_known)


@dataclass(frozen=True)
class ElectrodeUnitPotential:
    """Averaged potential of one electrode at 1 V with all others grounded."""

    x: np.ndarray
    psi: np.ndarray
    spread: np.ndarray
    count: np.ndarray
    physical: bool = True
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def stderr(self) -> np.ndarray:
        return self.spread / np.sqrt(self.count)

    @property
    def extent(self) -> float:
        return float(self.x[-1] - self.x[0])

    def shifted(self, c: float) -> "ElectrodeUnitPotential":
        return ElectrodeUnitPotential(self.x, self.psi + c, self.spread, self.count, self.physical, self.meta)

    def anchored(self, reference: Callable) -> "ElectrodeUnitPotential":
        """Shift by the constant that best matches ``reference`` (least squares)."""
        return self.shifted(float(np.mean(np.asarray(reference(self.x)) - self.psi)))


def lattice(lo: float, hi: float, step: float) -> np.ndarray:
    eps = 1e-9 * step
    k = np.arange(math.ceil((lo - eps) / step), math.floor((hi + eps) / step) + 1)
    return k * step


def _curve_step(curve: PotentialCurve) -> float:
    if curve.step is not None:
        return curve.step
    return float(np.median(np.diff(curve.x))) if curve.x.size > 1 else math.inf


def pairwise_difference(a: MeasurementRecord, b: MeasurementRecord, grid_step: Optional[float] = None,
                        delta_min: float = DELTA_MIN, pair=(0, 1)) -> DifferenceSegment:
    """(psi_a - psi_b) / (delta_a - delta_b) on the overlap of the two curves."""
    if a.electrode != b.electrode:
        raise ValueError("records perturb different electrodes")
    if a.background_key() != b.background_key():
        raise ValueError("records differ in background voltages V_B")
    if a.curve.physical != b.curve.physical:
        raise ValueError("records mix physical and internal units")
    dd = a.delta - b.delta
    if dd == 0:
        raise ValueError("degenerate pair: both records have the same delta")
    if abs(dd) < delta_min:
        raise ValueError(f"degenerate pair: |delta_a - delta_b| = {abs(dd):g} V below delta_min {delta_min:g} V")
    lo = max(a.curve.domain[0], b.curve.domain[0])
    hi = min(a.curve.domain[1], b.curve.domain[1])
    step = grid_step or min(_curve_step(a.curve), _curve_step(b.curve))
    grid = lattice(lo, hi, step) if hi > lo else np.empty(0)
    grid = grid[(grid >= lo) & (grid <= hi)]
    if grid.size < 2:
        raise ValueError(f"no overlap between curves {a.curve.domain} and {b.curve.domain}")
    values = (a.curve(grid) - b.curve(grid)) / dd
    sigma = None
    if a.curve.sigma is not None and b.curve.sigma is not None:
        sa = np.interp(grid, a.curve.x, a.curve.sigma)
        sb = np.interp(grid, b.curve.x, b.curve.sigma)
        sigma = np.hypot(sa, sb) / abs(dd)
    return DifferenceSegment(grid, values, tuple(pair), a.delta, b.delta, step, a.curve.physical, sigma)


def select_pairs(records: Sequence[MeasurementRecord], mode: str = "all",
                 delta_min: float = DELTA_MIN) -> list[tuple[int, int]]:
    """Record index pairs sharing a background, ``all`` or ``adjacent`` in delta."""
    if mode not in ("all", "adjacent"):
        raise ValueError(f"unknown pair mode {mode!r}")
    groups: dict = {}
    for i, r in enumerate(records):
        groups.setdefault(r.background_key(), []).append(i)
    pairs = []
    for idx in groups.values():
        idx = sorted(idx, key=lambda i: (records[i].delta, i))
        cand = zip(idx, idx[1:]) if mode == "adjacent" else itertools.combinations(idx, 2)
        for i, j in cand:
            if abs(records[i].delta - records[j].delta) >= delta_min:
                pairs.append((j, i))
    return pairs


def difference_segments(records: Sequence[MeasurementRecord], pairs: str = "all",
                        delta_min: float = DELTA_MIN, grid_step: Optional[float] = None) -> list[DifferenceSegment]:
    chosen = select_pairs(records, pairs, delta_min)
    if not chosen:
        raise ValueError("degenerate pair: no record pair with distinct delta above delta_min")
    segs = []
    for i, j in chosen:
        try:
            segs.append(pairwise_difference(records[i], records[j], grid_step, delta_min, pair=(i, j)))
        except ValueError as exc:
            log.warning("skipping pair %s: %s", (i, j), exc)
    if not segs:
        raise ValueError("no record pair overlaps")
    return segs


def _point_variance(seg: DifferenceSegment, xs: np.ndarray) -> np.ndarray:
    """Relative variance of a segment at points ``xs`` for variance weighting."""
    if seg.sigma is not None:
        return np.maximum(np.interp(xs, seg.x, seg.sigma), 1e-300) ** 2
    # without an error band, differencing noise scales as 1/|delta_a - delta_b|
    return np.full(xs.shape, 1.0 / seg.delta_span**2)


def _check_weighting(weighting: str):
    if weighting not in ("uniform", "variance"):
        raise ValueError(f"unknown weighting {weighting!r}")


def _overlap(sj: DifferenceSegment, sk: DifferenceSegment):
    lo = max(sj.interval[0], sk.interval[0])
    hi = min(sj.interval[1], sk.interval[1])
    if hi < lo:
        return None
    m = (sj.x >= lo) & (sj.x <= hi)
    if not np.any(m):
        return None
    return m


def _components(n, edges):
    seen, comps = set(), []
    adj = {i: set() for i in range(n)}
    for j, k in edges:
        adj[j].add(k)
        adj[k].add(j)
    for s in range(n):
        if s in seen:
            continue
        stack, comp = [s], []
        seen.add(s)
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u] - seen:
                seen.add(v)
                stack.append(v)
        comps.append(sorted(comp))
    return comps


def align_offsets(segments: Sequence[DifferenceSegment], weighting: str = "uniform") -> np.ndarray:
    """Constants c_j minimising the summed squared mismatch on all overlaps.

    The gauge is fixed by c_0 = 0.  Raises :class:`DisconnectedError` if the
    overlap graph is not connected.
    """
    _check_weighting(weighting)
    n = len(segments)
    if n == 0:
        raise ValueError("no segments to align")
    lap = np.zeros((n, n))
    rhs = np.zeros(n)
    edges = []
    for j, k in itertools.combinations(range(n), 2):
        sj, sk = segments[j], segments[k]
        m = _overlap(sj, sk)
        if m is None:
            continue
        xs = sj.x[m]
        r = sj.values[m] - np.interp(xs, sk.x, sk.values)
        if weighting == "variance":
            w = 1.0 / (_point_variance(sj, xs) + _point_variance(sk, xs))
        else:
            w = np.ones(xs.size)
        wsum = float(np.sum(w))
        lap[j, j] += wsum
        lap[k, k] += wsum
        lap[j, k] -= wsum
        lap[k, j] -= wsum
        s = float(np.sum(w * r))
        rhs[j] -= s
        rhs[k] += s
        edges.append((j, k))
    comps = _components(n, edges)
    if len(comps) > 1:
        intervals = [(min(segments[i].interval[0] for i in c), max(segments[i].interval[1] for i in c))
                     for c in comps]
        raise DisconnectedError(comps, intervals)
    c = np.zeros(n)
    if n > 1:
        c[1:] = np.linalg.solve(lap[1:, 1:], rhs[1:])
    return c


def stitch_average(segments: Sequence[DifferenceSegment], offsets, grid_step: Optional[float] = None,
                   weighting: str = "uniform") -> ElectrodeUnitPotential:
    """Pointwise mean and spread of the aligned segments on their union."""
    _check_weighting(weighting)
    if len(segments) == 0:
        raise ValueError("no segments to stitch")
    offsets = np.asarray(offsets, dtype=float)
    step = grid_step or min(s.step for s in segments)
    lo = min(s.interval[0] for s in segments)
    hi = max(s.interval[1] for s in segments)
    grid = lattice(lo, hi, step)
    n = grid.size
    acc = np.zeros(n)
    wacc = np.zeros(n)
    count = np.zeros(n, dtype=int)
    vals = []
    for seg, c in zip(segments, offsets):
        a, b = seg.interval
        m = (grid >= a - 1e-9 * step) & (grid <= b + 1e-9 * step)
        v = np.full(n, np.nan)
        v[m] = np.interp(grid[m], seg.x, seg.values) + c
        w = np.zeros(n)
        w[m] = 1.0 / _point_variance(seg, grid[m]) if weighting == "variance" else 1.0
        acc[m] += w[m] * v[m]
        wacc[m] += w[m]
        count[m] += 1
        vals.append((v, w))
    keep = count > 0
    mean = np.where(keep, acc / np.where(wacc > 0, wacc, 1.0), np.nan)
    var = np.zeros(n)
    for v, w in vals:
        m = ~np.isnan(v)
        var[m] += w[m] * (v[m] - mean[m]) ** 2
    spread = np.sqrt(np.maximum(var / np.where(wacc > 0, wacc, 1.0), 0.0))
    return ElectrodeUnitPotential(grid[keep], mean[keep], spread[keep], count[keep],
                                  segments[0].physical, {"n_segments": len(segments)})


def isolate_electrode(records: Sequence[MeasurementRecord], pairs: str = "all", delta_min: float = DELTA_MIN,
                      weighting: str = "uniform", grid_step: Optional[float] = None,
                      reference: Optional[Callable] = None):
    """Difference, align and average; returns (unit potential, segments, offsets).

    With ``reference`` the stitched curve's free constant is fixed by a
    least-squares match to it; otherwise the first segment sets the gauge.
    """
    segs = difference_segments(records, pairs, delta_min, grid_step)
    offsets = align_offsets(segs, weighting)
    unit = stitch_average(segs, offsets, grid_step, weighting)
    if reference is not None:
        unit = unit.anchored(reference)
    return unit, segs, offsets


# -- shuttle scans -------------------------------------------------------------


@dataclass
class ShuttleScenario:
    """Voltage sweep V(delta) = baseline + delta * direction on a trap.

    ``background`` (internal units) adds fixed contributions.  Positions in
    the resulting curves are in um and energies in eV.
    """

    geometry: TrapGeometry = field(default_factory=TrapGeometry)
    baseline: tuple = (40.5, 4.64, 30.8, 4.50, 40.5)
    direction: tuple = (0.0, 1.0, 0.0, -1.0, 0.0)
    n_ions: int = 20
    background: Optional[Potential1D] = None
    units: UnitSystem = DEFAULT_UNITS
    # search domain in um; None leaves it unbounded
    domain_um: Optional[tuple] = None
    vrange: Optional[tuple] = VOLTAGE_RANGE

    def voltages_at(self, delta: float) -> np.ndarray:
        return np.asarray(self.baseline, dtype=float) + delta * np.asarray(self.direction, dtype=float)

    def potential_at(self, delta: float) -> TrapPotential:
        dom = (-math.inf, math.inf)
        if self.domain_um is not None:
            dom = tuple(convert(np.asarray(self.domain_um, dtype=float), "um", "length", self.units))
        return TrapPotential(self.geometry, self.voltages_at(delta), self.units, dom, self.background,
                             self.vrange)


@dataclass(frozen=True)
class ShuttleScanMap:
    deltas: np.ndarray
    x: np.ndarray
    psi: np.ndarray  # (len(deltas), len(x)); NaN outside each curve's domain
    minima: tuple
    well_counts: np.ndarray
    status: tuple
    physical: bool = True
    units: UnitSystem = DEFAULT_UNITS


def _parabolic_vertex(x, y, i):
    x0, x1, x2 = x[i - 1:i + 2]
    y0, y1, y2 = y[i - 1:i + 2]
    d = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / d
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / d
    if a <= 0:
        return x1
    return min(max(-b / (2 * a), x0), x2)


def find_wells(x, psi, sigma=None, uncertainty: float = 0.0, nsigma: float = 3.0) -> np.ndarray:
    """Interior local minima of a sampled curve, parabolically refined.

    A well survives only if the barrier separating it from its neighbour is
    higher than ``nsigma`` times the local uncertainty (the larger of
    ``sigma`` at the barrier and ``uncertainty``); shallower wells are merged
    into deeper ones.
    """
    x = np.asarray(x, dtype=float)
    psi = np.asarray(psi, dtype=float)
    ok = np.isfinite(psi)
    x, psi = x[ok], psi[ok]
    sig = None if sigma is None else np.asarray(sigma, dtype=float)[ok]
    if x.size < 3:
        return np.empty(0)
    floor = max(uncertainty, 1e-12 * float(np.ptp(psi)))
    idx = [i for i in range(1, x.size - 1) if psi[i] < psi[i - 1] and psi[i] <= psi[i + 1]]
    while len(idx) > 1:
        worst, worst_barrier = None, math.inf
        for p, (i, j) in enumerate(zip(idx, idx[1:])):
            top = i + int(np.argmax(psi[i:j + 1]))
            barrier = psi[top] - max(psi[i], psi[j])
            local = max(floor, 0.0 if sig is None else float(sig[top]))
            if barrier < nsigma * local and barrier < worst_barrier:
                worst, worst_barrier = p, barrier
        if worst is None:
            break
        i, j = idx[worst], idx[worst + 1]
        idx.remove(i if psi[i] > psi[j] else j)
    return np.array([_parabolic_vertex(x, psi, i) for i in idx])


def _scan_one(scenario, delta, solver, grid_step, offset):
    pot = scenario.potential_at(delta)
    res = solve_equilibrium(pot, scenario.n_ions, solver, units=scenario.units)
    if not res.converged:
        raise ConvergenceError("solver did not converge")
    step = convert(grid_step, "um", "length", scenario.units)
    return reconstruct(res.string, grid_step=step, offset=offset).to_physical()


def shuttle_map(deltas, curves: Sequence[Optional[PotentialCurve]], status=None, uncertainty: float = 0.0,
                nsigma: float = 3.0, units: UnitSystem = DEFAULT_UNITS) -> ShuttleScanMap:
    """Assemble a map from per-delta curves (``None`` marks a failed delta)."""
    good = [c for c in curves if c is not None]
    if not good:
        raise ValueError("no curve in the scan")
    step = min(_curve_step(c) for c in good)
    lo = min(c.domain[0] for c in good)
    hi = max(c.domain[1] for c in good)
    xg = lattice(lo, hi, step)
    psi = np.full((len(curves), xg.size), np.nan)
    minima, counts = [], []
    for row, c in enumerate(curves):
        if c is None:
            minima.append(np.empty(0))
            counts.append(0)
            continue
        m = (xg >= c.domain[0]) & (xg <= c.domain[1])
        psi[row, m] = c(xg[m])
        w = find_wells(c.x, c.psi, c.sigma, uncertainty, nsigma)
        minima.append(w)
        counts.append(len(w))
    status = tuple(status) if status is not None else tuple("ok" for _ in curves)
    return ShuttleScanMap(np.asarray(deltas, dtype=float), xg, psi, tuple(minima), np.array(counts),
                          status, good[0].physical, units)


def shuttle_scan(scenario: ShuttleScenario, deltas: Sequence[float], solver: Optional[SolverConfig] = None,
                 grid_step: float = 1.0, offset="min-zero", uncertainty: float = 0.0, nsigma: float = 3.0,
                 workers: Optional[int] = None) -> ShuttleScanMap:
    """Forward-solve and reconstruct the potential at every delta.

    ``grid_step`` is in um.  A failing delta is recorded in ``status`` and
    the scan continues.
    """
    deltas = [float(d) for d in deltas]

    def job(d):
        try:
            return _scan_one(scenario, d, solver, grid_step, offset), "ok"
        except (ConvergenceError, ValueError) as exc:
            log.warning("delta=%g failed: %s", d, exc)
            return None, f"failed: {exc}"

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(job, deltas))
    else:
        out = [job(d) for d in deltas]
    curves = [c for c, _ in out]
    status = [s for _, s in out]
    return shuttle_map(deltas, curves, status, uncertainty, nsigma, scenario.units)


def grid_scan_wells(potential_fn: Callable, x: np.ndarray) -> int:
    """Number of interior local minima of a function on a grid (brute force)."""
    y = np.asarray(potential_fn(x))
    return int(np.sum((y[1:-1] < y[:-2]) & (y[1:-1] <= y[2:])))


def level_crossings(x, psi, level: float) -> np.ndarray:
    """Positions where a sampled curve crosses ``level`` (linear interpolation)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(psi, dtype=float) - level
    ok = np.isfinite(y[:-1]) & np.isfinite(y[1:])
    s = np.nonzero(ok & (y[:-1] * y[1:] < 0))[0]
    out = [x[i] - y[i] * (x[i + 1] - x[i]) / (y[i + 1] - y[i]) for i in s]
    out += list(x[np.nonzero(y == 0)[0]])
    return np.sort(np.array(out))


def equipotential_contours(scan: ShuttleScanMap, spacing: Optional[float] = None):
    """Level sets at k * spacing above the global minimum.

    ``spacing`` is in the map's energy unit (eV for physical maps) and
    defaults to 0.4 meV.  Returns ``[(level, [polyline, ...]), ...]`` with
    polylines as (n, 2) arrays of (delta, x).  NaN marks undefined map
    regions; infinite values are rejected.
    """
    z = np.asarray(scan.psi, dtype=float)
    if np.any(np.isinf(z)):
        raise ValueError("map contains infinite values")
    if not np.any(np.isfinite(z)):
        raise ValueError("map has no finite values")
    if spacing is None:
        spacing = CONTOUR_SPACING_EV if scan.physical else convert(CONTOUR_SPACING_EV, "eV", "energy", scan.units)
    if not spacing > 0:
        raise ValueError("contour spacing must be positive")
    zmin, zmax = np.nanmin(z), np.nanmax(z)
    nlev = int(math.floor((zmax - zmin) / spacing + 1e-12))
    levels = [zmin + k * spacing for k in range(1, nlev + 1)]
    out = []
    if z.shape[0] == 1 or z.shape[1] == 1:
        for lev in levels:
            lines = []
            for row, d in enumerate(scan.deltas):
                for xc in level_crossings(scan.x, z[row], lev):
                    lines.append(np.array([[d, xc]]))
            out.append((lev, lines))
        return out
    import contourpy

    gen = contourpy.contour_generator(scan.x, scan.deltas, np.ma.masked_invalid(z),
                                      line_type=contourpy.LineType.Separate)
    for lev in levels:
        # contourpy returns (x, delta) pairs; reorder to (delta, x)
        out.append((lev, [seg[:, ::-1].copy() for seg in gen.lines(lev)]))
    return out
