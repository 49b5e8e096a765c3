"""Units, ion-string types and the Coulomb energy of a 1D ion string.

Internally every quantity is dimensionless with the Coulomb constant
e^2/(4 pi eps0) equal to one.  A :class:`UnitSystem` fixes the length unit;
the energy unit follows from it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import constants

# e^2 / (4 pi eps0) expressed in eV * m
COULOMB_EV_M = constants.e / (4 * np.pi * constants.epsilon_0)

# ions closer than this (internal length units) are treated as coincident
MIN_SEPARATION = 1e-9


class DomainError(ValueError):
    """Evaluation requested outside the region where a quantity is defined."""


@dataclass(frozen=True)
class UnitSystem:
    """Mapping between internal (kappa = 1) and physical units.

    ``length_unit`` is metres per internal length unit; the energy unit is
    then fixed by requiring the Coulomb constant to be exactly one.
    """

    length_unit: float = 1e-6
    pixel_pitch_um: float = 2.0
    coulomb_constant: float = field(default=1.0, init=False)

    def __post_init__(self):
        if not self.length_unit > 0:
            raise ValueError("length_unit must be positive")
        if not self.pixel_pitch_um > 0:
            raise ValueError("pixel_pitch_um must be positive")

    @property
    def energy_unit(self) -> float:
        """eV per internal energy unit."""
        return COULOMB_EV_M / self.length_unit

    @property
    def coulomb_constant_ev_m(self) -> float:
        return COULOMB_EV_M

    def to_dict(self) -> dict:
        return {"length_unit": self.length_unit, "pixel_pitch_um": self.pixel_pitch_um}


DEFAULT_UNITS = UnitSystem()

_LENGTH = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "nm": 1e-9}
_ENERGY = {"eV": 1.0, "meV": 1e-3, "ueV": 1e-6, "J": 1.0 / constants.e}


def _scale(unit: str, units: UnitSystem) -> tuple[str, float]:
    # scale to SI-like base: metres for length, eV for energy, eV/m for force
    if unit == "length":
        return "length", units.length_unit
    if unit == "px":
        return "length", units.pixel_pitch_um * 1e-6
    if unit in _LENGTH:
        return "length", _LENGTH[unit]
    if unit == "energy":
        return "energy", units.energy_unit
    if unit in _ENERGY:
        return "energy", _ENERGY[unit]
    if unit == "force":
        return "force", units.energy_unit / units.length_unit
    if "/" in unit:
        num, den = unit.split("/", 1)
        if num in _ENERGY and den in _LENGTH:
            return "force", _ENERGY[num] / _LENGTH[den]
    raise ValueError(f"unknown unit {unit!r}")


def convert(value, from_unit: str, to_unit: str, units: UnitSystem = DEFAULT_UNITS):
    """Linear unit conversion.

    Internal units are spelled ``"length"``, ``"energy"`` and ``"force"``;
    physical ones as ``"um"``, ``"px"``, ``"meV"``, ``"eV/um"`` etc.
    """
    dim_from, s_from = _scale(from_unit, units)
    dim_to, s_to = _scale(to_unit, units)
    if dim_from != dim_to:
        raise ValueError(f"cannot convert {dim_from} ({from_unit}) to {dim_to} ({to_unit})")
    if isinstance(value, (list, tuple)):
        value = np.asarray(value, dtype=float)
    return value * (s_from / s_to)


def check_positions(positions) -> np.ndarray:
    x = np.asarray(positions, dtype=float)
    if x.ndim != 1:
        raise ValueError("positions must be one-dimensional")
    if x.size == 0:
        raise ValueError("an ion string needs at least one ion")
    if not np.all(np.isfinite(x)):
        raise ValueError("positions must be finite")
    if x.size > 1:
        gaps = np.diff(x)
        if np.any(gaps <= 0):
            raise ValueError("positions must be strictly increasing")
        if gaps.min() < MIN_SEPARATION:
            raise ValueError(f"ions closer than {MIN_SEPARATION:g} are treated as coincident")
    return x


@dataclass(frozen=True)
class IonString:
    """Ordered axial positions of singly charged ions (internal length units)."""

    positions: np.ndarray
    units: UnitSystem = DEFAULT_UNITS
    # optional 1-sigma position uncertainties, internal length units
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        x = check_positions(self.positions)
        x.setflags(write=False)
        object.__setattr__(self, "positions", x)
        if self.sigma is not None:
            s = np.broadcast_to(np.asarray(self.sigma, dtype=float), x.shape).copy()
            if np.any(s < 0):
                raise ValueError("uncertainties must be non-negative")
            s.setflags(write=False)
            object.__setattr__(self, "sigma", s)

    def __len__(self):
        return self.positions.size

    @property
    def extent(self) -> tuple[float, float]:
        return float(self.positions[0]), float(self.positions[-1])

    def in_unit(self, unit: str = "um") -> np.ndarray:
        return convert(self.positions, "length", unit, self.units)

    @classmethod
    def from_physical(cls, positions, unit: str = "um", units: UnitSystem = DEFAULT_UNITS,
                      sigma=None, sort: bool = False) -> "IonString":
        x = convert(np.asarray(positions, dtype=float), unit, "length", units)
        s = None if sigma is None else convert(np.asarray(sigma, dtype=float), unit, "length", units)
        if sort:
            order = np.argsort(x, kind="stable")
            x = x[order]
            if s is not None and np.ndim(s):
                s = s[order]
        return cls(x, units, s)


class ForceSample(NamedTuple):
    x: float
    force: float
    index: int


def coulomb_forces(positions) -> np.ndarray:
    """Coulomb force on every ion from all others (positive = toward +x)."""
    x = check_positions(positions)
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, np.inf)
    return np.sum(np.sign(d) / d**2, axis=1)


def coulomb_force(string: IonString | Sequence[float], i: int) -> float:
    x = string.positions if isinstance(string, IonString) else check_positions(string)
    n = x.size
    if not -n <= i < n:
        raise IndexError(f"ion index {i} out of range for {n} ions")
    d = x[i] - np.delete(x, i)
    return float(np.sum(np.sign(d) / d**2))


def _check_domain(x: np.ndarray, potential) -> None:
    lo, hi = potential.domain
    if x[0] < lo or x[-1] > hi:
        raise DomainError(f"positions [{x[0]:g}, {x[-1]:g}] leave the potential domain [{lo:g}, {hi:g}]")


def total_energy(positions, potential) -> float:
    """External plus mutual Coulomb energy of the string."""
    x = check_positions(positions)
    _check_domain(x, potential)
    iu = np.triu_indices(x.size, k=1)
    pair = np.sum(1.0 / (x[iu[1]] - x[iu[0]])) if x.size > 1 else 0.0
    return float(np.sum(potential.value(x)) + pair)


def energy_gradient(positions, potential) -> np.ndarray:
    x = check_positions(positions)
    _check_domain(x, potential)
    g = np.asarray(potential.gradient(x), dtype=float)
    if x.size > 1:
        g = g - coulomb_forces(x)
    return g


def energy_hessian(positions, potential) -> np.ndarray:
    x = check_positions(positions)
    _check_domain(x, potential)
    n = x.size
    h = np.zeros((n, n))
    if n > 1:
        d = np.abs(x[:, None] - x[None, :])
        np.fill_diagonal(d, np.inf)
        h = -2.0 / d**3
        np.fill_diagonal(h, -h.sum(axis=1))
    h[np.diag_indices(n)] += potential.curvature(x)
    return h
