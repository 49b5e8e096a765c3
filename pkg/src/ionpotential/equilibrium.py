"""Forward solver: equilibrium positions of N ions in an axial potential."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .physics import (DEFAULT_UNITS, IonString, UnitSystem, energy_gradient,
                      energy_hessian, total_energy)
from .potentials import Potential1D, local_minima

log = logging.getLogger(__name__)

# 3-point Gauss-Legendre rule on [0, 1]
_GL_T = np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)])
_GL_W = np.array([5.0, 8.0, 5.0]) / 18.0


class ConvergenceError(RuntimeError):
    pass


@dataclass
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 500
    initial_guess: str = "even"  # "even" | "given"
    # no gap between neighbours may shrink by more than this fraction per step
    max_gap_shrink: float = 0.5
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    seed_wells: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.initial_guess not in ("even", "given"):
            raise ValueError(f"unknown initial guess strategy {self.initial_guess!r}")
        if not 0 < self.max_gap_shrink < 1:
            raise ValueError("max_gap_shrink must lie in (0, 1)")


@dataclass(frozen=True)
class EquilibriumResult:
    string: IonString
    residual: float
    iterations: int
    converged: bool
    stable: bool
    potential: Potential1D = field(repr=False)

    @property
    def positions(self) -> np.ndarray:
        return self.string.positions

    @property
    def energy(self) -> float:
        return total_energy(self.positions, self.potential)


def is_positive_definite(h: np.ndarray) -> bool:
    try:
        cho_factor(h)
    except LinAlgError:
        return False
    return True


def is_stable(result: EquilibriumResult) -> bool:
    return is_positive_definite(energy_hessian(result.positions, result.potential))


def even_guess(potential: Potential1D, n: int) -> np.ndarray:
    a, b = potential.search_interval(n)
    if n == 1:
        return np.array([potential.center_hint() if a <= potential.center_hint() <= b else 0.5 * (a + b)])
    mid, half = 0.5 * (a + b), 0.3 * (b - a)
    return np.linspace(mid - half, mid + half, n)


def _well_seed(potential: Potential1D, center: float, n: int) -> np.ndarray:
    if n == 1:
        return np.array([center])
    c = float(potential.curvature(np.array([center]))[0])
    length = (1.0 / c) ** (1 / 3) if c > 0 else 1.0
    half = length * (1.5 * n * math.log(max(n, 2))) ** (1 / 3)
    lo, hi = potential.domain
    a, b = max(center - half, lo), min(center + half, hi)
    return np.linspace(a, b, n + 2)[1:-1]


def _max_step(x, p, domain, shrink):
    alpha = 1.0
    if x.size > 1:
        dgap = np.diff(p)
        closing = dgap < 0
        if np.any(closing):
            gaps = np.diff(x)[closing]
            alpha = min(alpha, float(np.min(shrink * gaps / -dgap[closing])))
    lo, hi = domain
    with np.errstate(divide="ignore", invalid="ignore"):
        if math.isfinite(hi) and np.any(p > 0):
            alpha = min(alpha, float(np.min((hi - x[p > 0]) / p[p > 0])))
        if math.isfinite(lo) and np.any(p < 0):
            alpha = min(alpha, float(np.min((lo - x[p < 0]) / p[p < 0])))
    return max(alpha, 0.0)


def _newton(potential, x, config):
    """Damped Newton iteration; returns (x, converged, iterations, residual)."""
    pinned = 0
    r = math.inf
    for it in range(1, config.max_iter + 1):
        g = energy_gradient(x, potential)
        r = float(np.max(np.abs(g)))
        if r <= config.tol:
            return x, True, it - 1, r
        h = energy_hessian(x, potential)
        newton = True
        try:
            p = -cho_solve(cho_factor(h), g)
        except LinAlgError:
            # indefinite Hessian: plain steepest descent
            newton = False
            p = -g / max(float(np.max(np.abs(h))), 1e-300)
        slope = float(g @ p)
        alpha = _max_step(x, p, potential.domain, config.max_gap_shrink)
        if alpha < 1e-14:
            pinned += 1
            if pinned >= 5:
                raise ConvergenceError("ions pinned at the potential domain edge; potential not confining")
            continue
        pinned = 0
        accepted = False
        for _ in range(config.max_backtracks):
            # energy change integrated from the directional derivative; free of
            # cancellation against large constant offsets in psi
            du = alpha * sum(w * float(energy_gradient(x + t * alpha * p, potential) @ p)
                             for t, w in zip(_GL_T, _GL_W))
            trial = x + alpha * p
            if du <= config.armijo * alpha * slope:
                accepted = True
                break
            if newton and np.max(np.abs(energy_gradient(trial, potential))) < r:
                accepted = True
                break
            alpha *= config.backtrack
        if not accepted:
            return x, False, it, r
        x = trial
    g = energy_gradient(x, potential)
    r = float(np.max(np.abs(g)))
    return x, r <= config.tol, config.max_iter, r


def solve_equilibrium(potential: Potential1D, n: int, config: Optional[SolverConfig] = None,
                      initial=None, units: UnitSystem = DEFAULT_UNITS) -> EquilibriumResult:
    """Equilibrium string of ``n`` ions in ``potential``.

    Falls back to seeding every detected well of psi when the first attempt
    does not converge to a stable configuration; the lowest-energy stable
    candidate wins.
    """
    config = config or SolverConfig()
    if n < 1:
        raise ValueError("need at least one ion")
    if not potential.confining:
        raise ValueError(f"potential {potential!r} is not confining")
    if initial is not None or config.initial_guess == "given":
        if initial is None:
            raise ValueError("initial guess strategy 'given' needs initial positions")
        x0 = np.sort(np.asarray(initial, dtype=float))
        if x0.size != n:
            raise ValueError("initial guess has the wrong number of ions")
    else:
        x0 = even_guess(potential, n)

    def attempt(start):
        x, ok, it, r = _newton(potential, start, config)
        stable = ok and is_positive_definite(energy_hessian(x, potential))
        return EquilibriumResult(IonString(x, units), r, it, ok, stable, potential)

    first = None
    try:
        first = attempt(x0)
    except ConvergenceError as exc:
        log.debug("first attempt failed: %s", exc)
    if first is not None and first.converged and first.stable:
        return first
    if not config.seed_wells:
        if first is None or not first.converged:
            raise ConvergenceError(f"no convergence after {config.max_iter} iterations")
        return first

    candidates = [first] if first is not None and first.converged else []
    a, b = potential.search_interval(n)
    for w in local_minima(potential, a, b):
        try:
            res = attempt(_well_seed(potential, w, n))
        except ConvergenceError:
            continue
        if res.converged:
            candidates.append(res)
    stable = [c for c in candidates if c.stable]
    pool = stable or candidates
    if not pool:
        raise ConvergenceError(f"no convergence after {config.max_iter} iterations, including well seeds")
    best = min(pool, key=lambda c: c.energy)
    log.debug("well seeding chose energy %g among %d candidates", best.energy, len(pool))
    return best
