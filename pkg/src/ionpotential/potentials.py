"""External axial potentials psi(x), analytic or sampled.

Every potential exposes ``value``, ``gradient`` and ``curvature`` on its
``domain``; evaluation outside the domain raises :class:`DomainError`.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from .physics import DomainError

INF = math.inf


class Potential1D:
    domain: tuple[float, float] = (-INF, INF)
    # True when psi grows without bound (or is walled) toward both ends
    confining: bool = False

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain
        if np.any(x < lo) or np.any(x > hi):
            raise DomainError(f"x outside potential domain [{lo:g}, {hi:g}]")
        return x

    def value(self, x):
        return self._value(self._check(x))

    def gradient(self, x):
        return self._gradient(self._check(x))

    def curvature(self, x):
        return self._curvature(self._check(x))

    __call__ = value

    def force(self, x):
        """External force -dpsi/dx."""
        return -self.gradient(x)

    def search_interval(self, n_ions: int) -> tuple[float, float]:
        """Finite interval expected to hold an n-ion equilibrium string."""
        lo, hi = self.domain
        if math.isfinite(lo) and math.isfinite(hi):
            return lo, hi
        c = self.center_hint()
        half = 1.0
        for _ in range(200):
            a, b = max(c - half, lo), min(c + half, hi)
            spacing = (b - a) / max(n_ions - 1, 1)
            # end ion of an evenly spaced string feels about (pi^2/6)/spacing^2
            push = 1.645 / spacing**2 if n_ions > 1 else 0.0
            if self._gradient(np.array(b)) >= push and -self._gradient(np.array(a)) >= push:
                return a, b
            half *= 1.5
        raise ValueError("could not bracket the ion string; is the potential confining?")

    def center_hint(self) -> float:
        return 0.0

    def __add__(self, other: "Potential1D") -> "Potential1D":
        return SumPotential([self, other])


class Harmonic(Potential1D):
    def __init__(self, k: float = 1.0, center: float = 0.0):
        self.k, self.center = float(k), float(center)
        self.confining = self.k > 0

    def _value(self, x):
        return 0.5 * self.k * (x - self.center) ** 2

    def _gradient(self, x):
        return self.k * (x - self.center)

    def _curvature(self, x):
        return np.full_like(x, self.k)

    def center_hint(self):
        return self.center

    def __repr__(self):
        return f"Harmonic(k={self.k!r}, center={self.center!r})"


class Quartic(Potential1D):
    """Double well a*(x-c)^4 - b*(x-c)^2."""

    def __init__(self, a: float = 1.0, b: float = 1.0, center: float = 0.0):
        self.a, self.b, self.center = float(a), float(b), float(center)
        self.confining = self.a > 0

    def _value(self, x):
        u = x - self.center
        return self.a * u**4 - self.b * u**2

    def _gradient(self, x):
        u = x - self.center
        return 4 * self.a * u**3 - 2 * self.b * u

    def _curvature(self, x):
        u = x - self.center
        return 12 * self.a * u**2 - 2 * self.b

    def minima(self) -> np.ndarray:
        if self.b <= 0:
            return np.array([self.center])
        r = math.sqrt(self.b / (2 * self.a))
        return np.array([self.center - r, self.center + r])

    def center_hint(self):
        return self.center

    def __repr__(self):
        return f"Quartic(a={self.a!r}, b={self.b!r}, center={self.center!r})"


class LinearTilt(Potential1D):
    def __init__(self, slope: float):
        self.slope = float(slope)

    def _value(self, x):
        return self.slope * x

    def _gradient(self, x):
        return np.full_like(x, self.slope)

    def _curvature(self, x):
        return np.zeros_like(x)

    def __repr__(self):
        return f"LinearTilt(slope={self.slope!r})"


class Polynomial(Potential1D):
    """psi(x) = sum_k coef[k] x^k."""

    def __init__(self, coef):
        self.poly = np.polynomial.Polynomial(np.asarray(coef, dtype=float))
        self._d1 = self.poly.deriv(1)
        self._d2 = self.poly.deriv(2)
        c = self.poly.coef
        deg = len(c) - 1
        self.confining = deg >= 2 and deg % 2 == 0 and c[-1] > 0

    def _value(self, x):
        return self.poly(x)

    def _gradient(self, x):
        return self._d1(x)

    def _curvature(self, x):
        return self._d2(x)

    def __repr__(self):
        return f"Polynomial({self.poly.coef.tolist()!r})"


class SumPotential(Potential1D):
    def __init__(self, terms):
        flat = []
        for t in terms:
            flat.extend(t.terms if isinstance(t, SumPotential) else [t])
        self.terms = flat
        self.domain = (max(t.domain[0] for t in flat), min(t.domain[1] for t in flat))
        if not self.domain[0] < self.domain[1]:
            raise ValueError("summed potentials have disjoint domains")
        finite = all(math.isfinite(v) for v in self.domain)
        self.confining = finite or any(t.confining for t in flat)

    def _value(self, x):
        return sum(t._value(x) for t in self.terms)

    def _gradient(self, x):
        return sum(t._gradient(x) for t in self.terms)

    def _curvature(self, x):
        return sum(t._curvature(x) for t in self.terms)

    def center_hint(self):
        for t in self.terms:
            if t.confining:
                return t.center_hint()
        return self.terms[0].center_hint()

    def __repr__(self):
        return " + ".join(repr(t) for t in self.terms)


class SampledPotential(Potential1D):
    """Potential given by samples on strictly increasing knots.

    ``rule`` is ``"cubic"`` (not-a-knot cubic spline, C2) or ``"pchip"``.
    Never extrapolates.
    """

    def __init__(self, x, psi, rule: str = "cubic"):
        x = np.asarray(x, dtype=float)
        psi = np.asarray(psi, dtype=float)
        if x.ndim != 1 or x.shape != psi.shape or x.size < 2:
            raise ValueError("need matching 1D knot and value arrays with at least two knots")
        if np.any(np.diff(x) <= 0):
            raise ValueError("knots must be strictly increasing")
        if rule == "cubic":
            self._f = CubicSpline(x, psi, extrapolate=False)
        elif rule == "pchip":
            self._f = PchipInterpolator(x, psi, extrapolate=False)
        else:
            raise ValueError(f"unknown interpolation rule {rule!r}")
        self.x, self.psi, self.rule = x, psi, rule
        self.domain = (float(x[0]), float(x[-1]))
        self.confining = True

    def _value(self, x):
        return self._f(x)

    def _gradient(self, x):
        return self._f(x, 1)

    def _curvature(self, x):
        return self._f(x, 2)

    def center_hint(self):
        return float(self.x[np.argmin(self.psi)])


def local_minima(potential: Potential1D, lo: float, hi: float, n: int = 4001) -> np.ndarray:
    """Minima of psi on [lo, hi] located from sign changes of psi' on a grid.

    Uses only the gradient so results do not depend on the energy offset.
    """
    x = np.linspace(lo, hi, n)
    g = potential.gradient(x)
    idx = np.nonzero((g[:-1] < 0) & (g[1:] >= 0))[0]
    out = []
    for i in idx:
        # linear root of the gradient between grid points
        x0, x1, g0, g1 = x[i], x[i + 1], g[i], g[i + 1]
        out.append(x0 - g0 * (x1 - x0) / (g1 - g0) if g1 != g0 else x0)
    return np.array(out)
