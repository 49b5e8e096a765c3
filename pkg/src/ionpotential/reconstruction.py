"""Potential reconstruction from an equilibrium ion string.

At equilibrium the external force on each ion cancels the Coulomb push of
the others, so every ion position is a sample of F_ext.  The samples are
joined by a shape-preserving cubic Hermite interpolant whose exact
antiderivative gives psi(x) up to an additive constant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .physics import (DEFAULT_UNITS, DomainError, ForceSample, IonString, UnitSystem,
                      check_positions, convert, coulomb_forces)

OFFSET_CONVENTIONS = ("min-zero", "mean-zero", "anchor")

# 5-point Gauss-Legendre on [0, 1], used for callables without an antiderivative
_GL_T, _GL_W = np.polynomial.legendre.leggauss(5)
_GL_T, _GL_W = 0.5 * (_GL_T + 1.0), 0.5 * _GL_W


def parse_offset(spec: Union[str, tuple]) -> tuple[str, Optional[float]]:
    """``"min-zero"``, ``"mean-zero"`` or ``"anchor=<x>"`` / ``("anchor", x)``."""
    if isinstance(spec, tuple):
        kind, x0 = spec
        return kind, float(x0)
    if spec.startswith("anchor"):
        _, _, x0 = spec.partition("=")
        if not x0:
            raise ValueError("anchor offset needs a position, e.g. 'anchor=0.0'")
        return "anchor", float(x0)
    if spec not in OFFSET_CONVENTIONS:
        raise ValueError(f"unknown offset convention {spec!r}")
    return spec, None


def offset_label(spec) -> str:
    kind, x0 = parse_offset(spec)
    return kind if x0 is None else f"anchor={x0!r}"


def _trapz_mean(x, y):
    if x.size < 2:
        return float(y[0])
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)) / (x[-1] - x[0]))


@dataclass(frozen=True)
class PotentialCurve:
    """Sampled potential curve with an explicit domain and offset gauge.

    Units are internal unless ``physical`` is set, in which case ``x`` is in
    um and ``psi`` (and ``sigma``) in eV.
    """

    x: np.ndarray
    psi: np.ndarray
    offset: str = "min-zero"
    sigma: Optional[np.ndarray] = None
    physical: bool = False
    units: UnitSystem = DEFAULT_UNITS
    # spacing of the interior lattice the samples sit on, if any
    step: Optional[float] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        if x.ndim != 1 or x.shape != psi.shape or x.size < 1:
            raise ValueError("curve needs matching non-empty 1D arrays")
        if np.any(np.diff(x) <= 0):
            raise ValueError("curve grid must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "psi", psi)
        if self.sigma is not None:
            s = np.asarray(self.sigma, dtype=float)
            if s.shape != x.shape or np.any(s < 0):
                raise ValueError("sigma must match the grid and be non-negative")
            object.__setattr__(self, "sigma", s)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    def __call__(self, xq):
        xq = np.asarray(xq, dtype=float)
        lo, hi = self.domain
        if np.any(xq < lo) or np.any(xq > hi):
            raise DomainError(f"curve defined only on [{lo:g}, {hi:g}]")
        if self.x.size == 1:
            return np.full_like(xq, self.psi[0])
        # returns sample values exactly at the knots
        return PchipInterpolator(self.x, self.psi, extrapolate=False)(xq)

    def with_offset(self, spec) -> "PotentialCurve":
        kind, x0 = parse_offset(spec)
        if kind == "min-zero":
            c = self.psi.min()
        elif kind == "mean-zero":
            c = _trapz_mean(self.x, self.psi)
        else:
            c = float(self(np.array([x0]))[0])
        return replace(self, psi=self.psi - c, offset=offset_label(spec))

    def to_physical(self) -> "PotentialCurve":
        if self.physical:
            return self
        sig = None if self.sigma is None else convert(self.sigma, "energy", "eV", self.units)
        step = None if self.step is None else convert(self.step, "length", "um", self.units)
        return replace(self, x=convert(self.x, "length", "um", self.units),
                       psi=convert(self.psi, "energy", "eV", self.units), sigma=sig,
                       physical=True, step=step)

    def to_internal(self) -> "PotentialCurve":
        if not self.physical:
            return self
        sig = None if self.sigma is None else convert(self.sigma, "eV", "energy", self.units)
        step = None if self.step is None else convert(self.step, "um", "length", self.units)
        return replace(self, x=convert(self.x, "um", "length", self.units),
                       psi=convert(self.psi, "eV", "energy", self.units), sigma=sig,
                       physical=False, step=step)


def external_force_samples(string: IonString) -> list[ForceSample]:
    """F_ext at each ion: the negative of the Coulomb force from the rest."""
    x = string.positions if isinstance(string, IonString) else check_positions(string)
    f = -coulomb_forces(x) if x.size > 1 else np.zeros(1)
    return [ForceSample(float(xi), float(fi), i) for i, (xi, fi) in enumerate(zip(x, f))]


def _lagrange_slopes(x, y, m):
    """Derivative at every node of the polynomial through an m-node window.

    Windows are centred where possible and shifted inward at the ends.
    """
    n = x.size
    start = np.clip(np.arange(n) - m // 2, 0, n - m)
    idx = start[:, None] + np.arange(m)[None, :]
    X, Y = x[idx], y[idx]
    p = np.arange(n) - start  # column of the node itself
    cols = np.arange(m)[None, :]
    own = cols == p[:, None]
    diff = np.where(own, 1.0, x[:, None] - X)
    d = y * np.sum(np.where(own, 0.0, 1.0 / diff), axis=1)
    for j in range(m):
        is_j = cols == j
        num = np.prod(np.where(own | is_j, 1.0, diff), axis=1)
        den = np.prod(np.where(is_j, 1.0, X[:, j:j + 1] - X), axis=1)
        d += np.where(p == j, 0.0, Y[:, j] * num / den)
    return d


def hermite_slopes(x: np.ndarray, y: np.ndarray, stencil: int = 5) -> np.ndarray:
    """Knot derivatives for a shape-preserving cubic Hermite interpolant.

    Lagrange estimates on a ``stencil``-point window (centred where
    possible), limited so the interpolant stays monotone wherever the data
    are monotone.  At a local extremum of the data the unlimited estimate
    is kept.
    """
    n = x.size
    h = np.diff(x)
    delta = np.diff(y) / h
    if n == 2:
        return np.array([delta[0], delta[0]])
    m = min(stencil, n)
    d = _lagrange_slopes(x, y, m)

    for i in range(1, n - 1):
        a, b = delta[i - 1], delta[i]
        if a * b <= 0:
            continue
        if d[i] * a <= 0:
            d[i] = 0.0
            continue
        bound = 3 * min(abs(a), abs(b))
        # next to an extremum the interval slopes understate |f'|; relax the
        # bound when the one-sided parabolas agree on the direction
        if 2 <= i <= n - 3:
            left = ((2 * h[i - 1] + h[i - 2]) * a - h[i - 1] * delta[i - 2]) / (h[i - 2] + h[i - 1])
            right = ((2 * h[i] + h[i + 1]) * b - h[i] * delta[i + 1]) / (h[i] + h[i + 1])
            if left * a > 0 and right * a > 0:
                bound = max(bound, 1.5 * min(abs(left), abs(right)))
        d[i] = math.copysign(min(abs(d[i]), bound), a)
    for i, s in ((0, delta[0]), (n - 1, delta[-1])):
        if d[i] * s <= 0:
            d[i] = 0.0
        elif abs(d[i]) > 3 * abs(s):
            d[i] = 3 * s
    return d


def interpolate_force(samples: Sequence[ForceSample]) -> CubicHermiteSpline:
    """C1 piecewise-cubic force F_ext(x) through every sample on [x_1, x_N].

    The returned spline evaluates to NaN outside that interval.
    """
    if len(samples) < 2:
        raise ValueError("need at least two force samples")
    x = np.array([s.x for s in samples], dtype=float)
    f = np.array([s.force for s in samples], dtype=float)
    if np.any(np.diff(x) <= 0):
        raise ValueError("force samples must have strictly increasing, distinct positions")
    return CubicHermiteSpline(x, f, hermite_slopes(x, f), extrapolate=False)


def output_grid(lo: float, hi: float, step: float) -> np.ndarray:
    """Endpoints plus every multiple of ``step`` strictly inside (lo, hi).

    Anchoring the lattice at zero makes curves from different strings share
    sample points, so they can be differenced without resampling.
    """
    if not hi > lo:
        raise ValueError("empty domain")
    if not step > 0:
        raise ValueError("grid step must be positive")
    k = np.arange(math.ceil(lo / step), math.floor(hi / step) + 1)
    inner = k * step
    eps = 1e-9 * step
    inner = inner[(inner > lo + eps) & (inner < hi - eps)]
    return np.concatenate(([lo], inner, [hi]))


def _antiderivative(force, lo, hi):
    if hasattr(force, "antiderivative"):
        anti = force.antiderivative()
        return lambda x: anti(x) - anti(lo)

    def quad(xs):
        # composite Gauss-Legendre between consecutive requested points
        xs = np.asarray(xs, dtype=float)
        edges = np.concatenate(([lo], xs))
        a, b = edges[:-1], edges[1:]
        t = a[:, None] + (b - a)[:, None] * _GL_T[None, :]
        cell = (b - a) * (np.asarray(force(t.ravel())).reshape(t.shape) @ _GL_W)
        return np.cumsum(cell)
    return quad


def integrate_potential(force: Callable, domain: tuple[float, float], grid_step: Optional[float] = None,
                        offset="min-zero", units: UnitSystem = DEFAULT_UNITS) -> PotentialCurve:
    """psi(x) = -integral of F_ext from the left end of ``domain``.

    Piecewise polynomials are integrated exactly; other callables by
    Gauss-Legendre quadrature.
    """
    lo, hi = float(domain[0]), float(domain[1])
    if not hi > lo:
        raise ValueError("empty domain")
    step = grid_step if grid_step is not None else (hi - lo) / 200
    x = output_grid(lo, hi, step)
    psi = -np.asarray(_antiderivative(force, lo, hi)(x), dtype=float)
    curve = PotentialCurve(x, psi, offset="raw", units=units, step=step)
    return curve.with_offset(offset)


def _replica_curve(x, grid):
    f = -coulomb_forces(x)
    anti = CubicHermiteSpline(x, f, hermite_slopes(x, f), extrapolate=True).antiderivative()
    return -anti(grid)


def position_band(string: IonString, grid: np.ndarray, nominal: np.ndarray, sigma, n_replicas: int = 200,
                  seed: Optional[int] = None) -> np.ndarray:
    """Pointwise std of psi under Gaussian resampling of the ion positions.

    Each replica gets its own random stream and is aligned to ``nominal`` by
    its mean offset, so the band measures shape uncertainty only.
    """
    x0 = string.positions
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), x0.shape)
    streams = np.random.SeedSequence(seed).spawn(n_replicas)
    reps = []
    for ss in streams:
        rng = np.random.default_rng(ss)
        for _ in range(100):
            xr = np.sort(x0 + rng.normal(0.0, 1.0, x0.size) * sig)
            if np.all(np.diff(xr) > 1e-9):
                break
        else:
            raise RuntimeError("position noise too large to keep ions ordered")
        r = _replica_curve(xr, grid)
        reps.append(r - np.mean(r - nominal))
    return np.std(np.array(reps), axis=0)


def reconstruct(string: IonString, grid_step: float = 1.0, offset="min-zero", position_sigma=None,
                n_replicas: int = 0, seed: Optional[int] = None) -> PotentialCurve:
    """Axial potential seen by the string, on the string's own extent.

    ``grid_step`` is in internal length units.  With ``n_replicas > 0`` a
    Monte Carlo uncertainty band is attached as ``sigma``; the position
    uncertainty defaults to the string's own ``sigma``.
    """
    if len(string) < 2:
        raise ValueError("reconstruction needs at least two ions")
    force = interpolate_force(external_force_samples(string))
    curve = integrate_potential(force, string.extent, grid_step, offset, string.units)
    if n_replicas > 0:
        sig = position_sigma if position_sigma is not None else string.sigma
        if sig is None:
            raise ValueError("uncertainty band needs position_sigma or a string with sigma")
        band = position_band(string, curve.x, curve.psi, sig, n_replicas, seed)
        curve = replace(curve, sigma=band)
    return replace(curve, meta={"n_ions": len(string)})
