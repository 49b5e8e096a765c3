"""Axial trap potentials measured from the equilibrium positions of ion strings."""
__version__ = "0.1.0"

from .equilibrium import ConvergenceError, EquilibriumResult, SolverConfig, is_stable, solve_equilibrium
from .imaging import FitConfig, FitResult, Frame, NoPeaksError, Profile1D, extract_string, render_frame
from .isolation import (DisconnectedError, ElectrodeUnitPotential, MeasurementRecord, ShuttleScanMap,
                        ShuttleScenario, align_offsets, equipotential_contours, isolate_electrode,
                        pairwise_difference, shuttle_scan, stitch_average)
from .physics import (DEFAULT_UNITS, DomainError, ForceSample, IonString, UnitSystem, convert, coulomb_force,
                      energy_gradient, energy_hessian, total_energy)
from .potentials import Harmonic, LinearTilt, Polynomial, Potential1D, Quartic, SampledPotential
from .reconstruction import PotentialCurve, external_force_samples, integrate_potential, interpolate_force, reconstruct
from .trap import TrapGeometry, TrapPotential, axial_potential, strip_unit_potential, test_potential
