"""Versioned scenario configuration shared by the command-line tools."""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .equilibrium import SolverConfig
from .io import SCHEMA_VERSION, config_hash
from .physics import UnitSystem, convert
from .potentials import Potential1D
from .trap import TrapGeometry, TrapPotential, test_potential

CONFIG_DIR_ENV = "IONPOTENTIAL_CONFIG_DIR"


class ConfigError(ValueError):
    pass


@dataclass
class ImagingConfig:
    psf_sigma_um: float = 2.0
    peak_counts: float = 1e4
    background: float = 5.0  # counts per pixel at column 0
    background_slope: float = 0.0  # fractional increase across the frame
    shape: tuple = (15, 256)
    pitch_um: float = 2.0
    origin_um: Optional[float] = None  # position of pixel column 0; None centres the string
    exposure_s: float = 0.1
    background_window: int = 25
    threshold_sigma: float = 5.0

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        if len(self.shape) != 2 or min(self.shape) < 1:
            raise ConfigError("imaging shape must be (rows, columns)")
        if not (self.psf_sigma_um > 0 and self.pitch_um > 0):
            raise ConfigError("psf sigma and pixel pitch must be positive")
        if self.peak_counts < 0 or self.background < 0:
            raise ConfigError("counts must be non-negative")

    def background_columns(self) -> np.ndarray:
        cols = np.arange(self.shape[1], dtype=float)
        return self.background * (1 + self.background_slope * cols / max(self.shape[1] - 1, 1))


def build_potential(spec: dict, units: UnitSystem) -> Potential1D:
    """Analytic potential from ``{"family": ..., params}``; ``center_um`` is accepted in um."""
    spec = dict(spec)
    try:
        family = spec.pop("family")
    except KeyError:
        raise ConfigError("potential spec needs a 'family'") from None
    if "center_um" in spec:
        spec["center"] = float(convert(spec.pop("center_um"), "um", "length", units))
    try:
        return test_potential(family, **spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid potential {family!r}: {exc}") from None


@dataclass
class ScenarioConfig:
    """Everything a pipeline run depends on.

    Either ``potential`` (an analytic test potential in internal units) or a
    trap voltage schedule (``baseline`` + ``deltas`` along ``direction``, or
    explicit ``voltages``) defines the records.  ``stations_um`` repeats the
    schedule with the ``background`` well centred at each station.
    """

    schema_version: int = SCHEMA_VERSION
    name: str = "scenario"
    units: UnitSystem = field(default_factory=UnitSystem)
    n_ions: int = 20
    potential: Optional[dict] = None
    geometry: TrapGeometry = field(default_factory=TrapGeometry)
    baseline: Optional[tuple] = None
    electrode: int = 2
    direction: Optional[tuple] = None
    deltas: tuple = (0.0,)
    voltages: Optional[list] = None
    background: Optional[dict] = None
    stations_um: Optional[tuple] = None
    domain_um: Optional[tuple] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    imaging: ImagingConfig = field(default_factory=ImagingConfig)
    grid_um: float = 1.0
    offset: str = "min-zero"
    delta_min_mv: float = 10.0
    pairs: str = "all"
    weighting: str = "uniform"
    n_replicas: int = 0
    position_sigma_um: Optional[float] = None
    contour_spacing_mev: float = 0.4
    seed: Optional[int] = 0
    output_dir: str = "out"
    workers: int = 1

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}; expected {SCHEMA_VERSION}")
        if not isinstance(self.n_ions, int) or self.n_ions < 1:
            raise ConfigError(f"n_ions must be a positive integer, got {self.n_ions!r}")
        trap = self.baseline is not None or self.voltages is not None
        if (self.potential is None) == (not trap):
            raise ConfigError("give exactly one of 'potential' or a trap voltage schedule")
        m = self.geometry.n_electrodes
        if not 0 <= self.electrode < m:
            raise ConfigError(f"electrode {self.electrode} outside 0..{m - 1}")
        for name in ("baseline", "direction"):
            v = getattr(self, name)
            if v is not None:
                if len(v) != m:
                    raise ConfigError(f"{name} needs {m} entries")
                setattr(self, name, tuple(float(a) for a in v))
        if self.voltages is not None:
            self.voltages = [tuple(float(a) for a in v) for v in self.voltages]
            if any(len(v) != m for v in self.voltages):
                raise ConfigError(f"every voltage vector needs {m} entries")
        self.deltas = tuple(float(d) for d in self.deltas)
        if not self.deltas:
            raise ConfigError("deltas must not be empty")
        if self.stations_um is not None:
            self.stations_um = tuple(float(s) for s in self.stations_um)
            if self.background is None:
                raise ConfigError("stations_um needs a background well to reposition")
        if not self.grid_um > 0:
            raise ConfigError("grid_um must be positive")
        if self.delta_min_mv < 0:
            raise ConfigError("delta_min_mv must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.pairs not in ("all", "adjacent"):
            raise ConfigError(f"unknown pair mode {self.pairs!r}")
        if self.weighting not in ("uniform", "variance"):
            raise ConfigError(f"unknown weighting {self.weighting!r}")
        # fail early on bad potential specs
        if self.potential is not None:
            build_potential(self.potential, self.units)
        if self.background is not None:
            build_potential(self.background, self.units)

    # -- (de)serialisation -------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "schema_version" not in d:
            raise ConfigError("config lacks a schema_version")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            if "units" in d:
                d["units"] = UnitSystem(**d["units"])
            if "geometry" in d:
                d["geometry"] = TrapGeometry.from_dict(d["geometry"])
            if "solver" in d:
                d["solver"] = SolverConfig(**d["solver"])
            if "imaging" in d:
                d["imaging"] = ImagingConfig(**d["imaging"])
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, UnitSystem):
                v = {"length_unit": v.length_unit, "pixel_pitch_um": v.pixel_pitch_um}
            elif isinstance(v, TrapGeometry):
                v = v.to_dict()
            elif dataclasses.is_dataclass(v):
                v = dataclasses.asdict(v)
            out[f.name] = v
        return out

    def sha256(self) -> str:
        return config_hash(self.to_dict())

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        p = resolve_config_path(path)
        try:
            d = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{p}: config must be a JSON object")
        return cls.from_dict(d)

    # -- scenario expansion ------------------------------------------------

    @property
    def is_trap(self) -> bool:
        return self.potential is None

    def direction_vector(self) -> np.ndarray:
        if self.direction is not None:
            return np.asarray(self.direction, dtype=float)
        e = np.zeros(self.geometry.n_electrodes)
        e[self.electrode] = 1.0
        return e

    def records(self) -> list[dict]:
        """Expanded (voltages, delta, station) list for a trap scenario."""
        if not self.is_trap:
            return [{"index": 0, "delta": 0.0, "voltages": None, "station_um": None, "background": ""}]
        if self.voltages is not None:
            ref = self.baseline[self.electrode] if self.baseline is not None else self.voltages[0][self.electrode]
            base = [(tuple(v), v[self.electrode] - ref) for v in self.voltages]
        else:
            b, dvec = np.asarray(self.baseline), self.direction_vector()
            base = [(tuple(float(a) for a in b + d * dvec), d) for d in self.deltas]
        stations = self.stations_um if self.stations_um is not None else (None,)
        out = []
        for s in stations:
            for v, d in base:
                out.append({"index": len(out), "delta": float(d), "voltages": list(v), "station_um": s,
                            "background": "" if s is None else f"station{s:g}"})
        return out

    def background_at(self, station_um: Optional[float]) -> Optional[Potential1D]:
        if self.background is None:
            return None
        spec = dict(self.background)
        if station_um is not None:
            spec.pop("center", None)
            spec["center_um"] = station_um
        return build_potential(spec, self.units)

    def potential_for(self, record: dict) -> Potential1D:
        if not self.is_trap:
            return build_potential(self.potential, self.units)
        dom = (-np.inf, np.inf)
        if self.domain_um is not None:
            dom = tuple(float(v) for v in convert(np.asarray(self.domain_um, float), "um", "length", self.units))
        return TrapPotential(self.geometry, record["voltages"], self.units, dom,
                             self.background_at(record["station_um"]))


def resolve_config_path(path) -> Path:
    """Use ``path`` as given, else look it up in $IONPOTENTIAL_CONFIG_DIR."""
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    base = os.environ.get(CONFIG_DIR_ENV)
    if base and (Path(base) / p).exists():
        return Path(base) / p
    return p
