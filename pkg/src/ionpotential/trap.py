"""Analytic axial potentials of a segmented surface trap plus test potentials.

Electrodes are modelled as infinitely long strips in a gapless grounded
plane; an ion at height ``h`` above the plane sees the closed-form unit
potential of each strip.  Superposition is exact in this model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .physics import DEFAULT_UNITS, UnitSystem, convert
from .potentials import Harmonic, LinearTilt, Polynomial, Potential1D, Quartic

VOLTAGE_RANGE = (-20.0, 60.0)

# RF drive and radial confinement of the experiment; documentation only
RF_AMPLITUDE_V = 300.0
RF_FREQUENCY_HZ = 10.125e6
RADIAL_FREQUENCIES_HZ = (250e3, 800e3)


@dataclass(frozen=True)
class TrapGeometry:
    """Ordered electrode strips ``(x_start, x_end)`` in um and ion height in um."""

    strips: tuple = ((-250.0, -150.0), (-150.0, -50.0), (-50.0, 50.0), (50.0, 150.0), (150.0, 250.0))
    height: float = 100.0

    def __post_init__(self):
        strips = tuple((float(a), float(b)) for a, b in self.strips)
        object.__setattr__(self, "strips", strips)
        if not self.height > 0:
            raise ValueError("ion height must be positive")
        for a, b in strips:
            if not a < b:
                raise ValueError(f"strip ({a}, {b}) is empty")
        for (_, b0), (a1, _) in zip(strips, strips[1:]):
            if a1 < b0:
                raise ValueError("strips must be ordered and non-overlapping")

    @property
    def n_electrodes(self) -> int:
        return len(self.strips)

    def center(self, m: int) -> float:
        a, b = self.strips[m]
        return 0.5 * (a + b)

    @classmethod
    def uniform(cls, n: int = 5, width: float = 100.0, height: float = 100.0) -> "TrapGeometry":
        x0 = -0.5 * n * width
        return cls(tuple((x0 + i * width, x0 + (i + 1) * width) for i in range(n)), height)

    def to_dict(self) -> dict:
        return {"strips": [list(s) for s in self.strips], "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "TrapGeometry":
        return cls(tuple(tuple(s) for s in d["strips"]), d["height"])


def check_voltages(voltages, geometry: TrapGeometry, vrange=VOLTAGE_RANGE) -> np.ndarray:
    v = np.asarray(voltages, dtype=float)
    if v.shape != (geometry.n_electrodes,):
        raise ValueError(f"expected {geometry.n_electrodes} voltages, got {v.shape}")
    if vrange is not None and (np.any(v < vrange[0]) or np.any(v > vrange[1])):
        raise ValueError(f"voltages outside the allowed range {vrange}")
    return v


def strip_unit_potential(x, strip, h: float):
    """Potential per volt of one strip at axial position ``x`` (um)."""
    x1, x2 = strip
    x = np.asarray(x, dtype=float)
    return (np.arctan((x2 - x) / h) - np.arctan((x1 - x) / h)) / math.pi


def strip_unit_gradient(x, strip, h: float):
    x1, x2 = strip
    x = np.asarray(x, dtype=float)
    return (h / (h**2 + (x1 - x) ** 2) - h / (h**2 + (x2 - x) ** 2)) / math.pi


def strip_unit_curvature(x, strip, h: float):
    x1, x2 = strip
    x = np.asarray(x, dtype=float)
    return (2 * h * (x1 - x) / (h**2 + (x1 - x) ** 2) ** 2
            - 2 * h * (x2 - x) / (h**2 + (x2 - x) ** 2) ** 2) / math.pi


def axial_potential(x, geometry: TrapGeometry, voltages, vrange=VOLTAGE_RANGE):
    """Potential energy (eV) of a singly charged ion at ``x`` (um)."""
    v = check_voltages(voltages, geometry, vrange)
    return sum(vm * strip_unit_potential(x, s, geometry.height) for vm, s in zip(v, geometry.strips))


class TrapPotential(Potential1D):
    """Trap axial potential in internal units, optionally plus a background.

    ``background`` is a potential in internal units standing in for all
    contributions held fixed during a measurement (other electrodes, the
    axial part of the RF pseudopotential, an external bias well).
    """

    def __init__(self, geometry: TrapGeometry, voltages, units: UnitSystem = DEFAULT_UNITS,
                 domain=(-math.inf, math.inf), background: Optional[Potential1D] = None,
                 vrange=VOLTAGE_RANGE):
        self.geometry = geometry
        self.voltages = check_voltages(voltages, geometry, vrange)
        self.units = units
        self.background = background
        self.domain = (float(domain[0]), float(domain[1]))
        self.confining = (all(math.isfinite(d) for d in self.domain)
                          or (background is not None and background.confining))
        self._um = convert(1.0, "length", "um", units)
        self._ev = units.energy_unit

    def _sum(self, fn, x, order):
        xu = x * self._um
        total = sum(vm * fn(xu, s, self.geometry.height) for vm, s in zip(self.voltages, self.geometry.strips))
        total = total * self._um**order / self._ev
        if self.background is not None:
            total = total + [self.background._value, self.background._gradient,
                             self.background._curvature][order](x)
        return total

    def _value(self, x):
        return self._sum(strip_unit_potential, x, 0)

    def _gradient(self, x):
        return self._sum(strip_unit_gradient, x, 1)

    def _curvature(self, x):
        return self._sum(strip_unit_curvature, x, 2)

    def center_hint(self):
        if self.background is not None:
            return self.background.center_hint()
        lo, hi = self.domain
        return 0.5 * (lo + hi) if all(math.isfinite(d) for d in self.domain) else 0.0

    def __repr__(self):
        return f"TrapPotential(voltages={self.voltages.tolist()!r}, background={self.background!r})"


def test_potential(family: str, require_confining: bool = True, **params) -> Potential1D:
    """Standard analytic test potentials.

    ``harmonic`` (k, center), ``quartic`` (a, b, center), ``linear`` (slope),
    ``polynomial`` (coef).  Non-confining parameters are rejected unless
    ``require_confining`` is False.
    """
    builders = {"harmonic": Harmonic, "quartic": Quartic, "linear": LinearTilt, "polynomial": Polynomial}
    try:
        pot = builders[family](**params)
    except KeyError:
        raise ValueError(f"unknown potential family {family!r}") from None
    if require_confining and not pot.confining:
        raise ValueError(f"{family} potential with {params} is not confining")
    return pot


test_potential.__test__ = False  # not a pytest test despite the name
