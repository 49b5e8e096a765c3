import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionpotential.equilibrium import solve_equilibrium
from ionpotential.physics import DomainError, ForceSample, IonString, coulomb_force
from ionpotential.potentials import Harmonic, LinearTilt, Polynomial, Quartic
from ionpotential.reconstruction import (PotentialCurve, external_force_samples, hermite_slopes, integrate_potential,
                                         interpolate_force, output_grid, parse_offset, position_band, reconstruct)


def aligned_error(curve, truth):
    """Max error after removing the mean offset."""
    d = curve.psi - truth(curve.x)
    return float(np.max(np.abs(d - d.mean())))


def samples(x, f):
    return [ForceSample(a, b, i) for i, (a, b) in enumerate(zip(x, f))]


def test_force_samples_examples():
    b = 1.25 ** (1 / 3)
    fs = external_force_samples(IonString([-b, 0.0, b]))
    assert len(fs) == 3 and [s.index for s in fs] == [0, 1, 2]
    assert fs[-1].force == pytest.approx(-1.0772173, abs=1e-7)
    fs = external_force_samples(IonString([-0.4, 0.4]))
    assert fs[0].force == -fs[1].force
    fs = external_force_samples(IonString([0.0, 1.0]))
    assert [s.force for s in fs] == [1.0, -1.0]


def test_force_samples_negate_coulomb(harmonic20):
    s = harmonic20.string
    for f in external_force_samples(s):
        assert f.force == pytest.approx(-coulomb_force(s, f.index), rel=1e-14)
        assert f.x == s.positions[f.index]


def test_interpolant_reproduces_lines():
    x = np.array([-1.0, -0.3, 0.2, 1.5, 2.0])
    f = 0.7 * x - 0.2
    spl = interpolate_force(samples(x, f))
    xx = np.linspace(-1, 2, 301)
    assert np.max(np.abs(spl(xx) - (0.7 * xx - 0.2))) < 1e-14
    two = interpolate_force(samples([0.0, 2.0], [1.0, -3.0]))
    assert two(np.array([0.5, 1.0])) == pytest.approx([0.0, -1.0], abs=1e-15)


def test_linear_precision_at_harmonic_equilibrium():
    x = solve_equilibrium(Harmonic(1.0), 10).positions
    spl = interpolate_force(samples(x, -x))
    xx = np.linspace(x[0], x[-1], 2001)
    assert np.max(np.abs(spl(xx) + xx)) < 1e-10


def test_interpolant_passes_through_samples_and_is_c1():
    x = np.sort(np.random.default_rng(3).uniform(-2, 2, 12))
    f = np.sin(2 * x) + 0.3 * x**2
    spl = interpolate_force(samples(x, f))
    assert np.allclose(spl(x), f, rtol=0, atol=1e-15)
    d = spl.derivative()
    eps = 1e-9
    inner = x[1:-1]
    assert np.allclose(d(inner - eps), d(inner + eps), atol=1e-6)


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=15, unique=True), st.integers(0, 2**31))
def test_monotone_data_gives_monotone_interpolant(xs, seed):
    x = np.sort(np.array(xs))
    if np.min(np.diff(x)) < 1e-3:
        return
    steps = np.random.default_rng(seed).exponential(1.0, x.size)
    f = -np.cumsum(steps)  # strictly decreasing, like F_ext in a confining well
    spl = interpolate_force(samples(x, f))
    xx = np.linspace(x[0], x[-1], 500)
    assert np.all(np.diff(spl(xx)) <= 1e-12 * np.ptp(f))
    assert spl(xx).min() >= f.min() - 1e-12 and spl(xx).max() <= f.max() + 1e-12


def test_duplicate_positions_rejected():
    with pytest.raises(ValueError):
        interpolate_force(samples([0.0, 0.0, 1.0], [1.0, 2.0, 3.0]))
    with pytest.raises(ValueError):
        interpolate_force(samples([0.0], [1.0]))


def test_integrate_examples():
    c = integrate_potential(lambda x: -np.ones_like(x), (0.0, 1.0), 0.1)
    assert c.psi == pytest.approx(c.x, abs=1e-15) and c.psi.min() == 0.0
    c = integrate_potential(lambda x: -x, (-1.0, 1.0), 0.05)
    assert np.max(np.abs(c.psi - c.x**2 / 2)) < 1e-14
    c = integrate_potential(lambda x: np.zeros_like(x), (-1.0, 1.0), 0.5)
    assert np.all(c.psi == 0)
    spl = interpolate_force(samples([-1.0, 0.0, 1.0], [1.0, 0.0, -1.0]))
    c = integrate_potential(spl, (-1.0, 1.0), 0.25)
    assert np.max(np.abs(c.psi - c.x**2 / 2)) < 1e-15
    with pytest.raises(ValueError):
        integrate_potential(lambda x: x, (1.0, 1.0))


def test_output_grid_shared_lattice():
    g = output_grid(-1.234, 2.5, 0.5)
    assert g[0] == -1.234 and g[-1] == 2.5
    assert g[1:-1] == pytest.approx([-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0])
    assert np.all(np.diff(g) > 0)
    with pytest.raises(ValueError):
        output_grid(0.0, 1.0, 0.0)


def test_reconstruct_harmonic_n20(harmonic20):
    c = reconstruct(harmonic20.string, grid_step=0.01)
    assert c.domain == harmonic20.string.extent
    assert aligned_error(c, lambda x: x**2 / 2) < 1e-3
    assert c.psi.min() == 0.0
    assert c.meta["n_ions"] == 20


def test_reconstruct_two_ions():
    r = solve_equilibrium(Harmonic(1.0), 2)
    c = reconstruct(r.string, grid_step=0.05)
    assert aligned_error(c, lambda x: x**2 / 2) < 1e-9
    with pytest.raises(ValueError):
        reconstruct(IonString([0.0]))


def test_quartic_minima_recovered(quartic20):
    step = 0.005
    c = reconstruct(quartic20.string, grid_step=step)
    i = [k for k in range(1, c.x.size - 1) if c.psi[k] < c.psi[k - 1] and c.psi[k] <= c.psi[k + 1]]
    assert len(i) == 2
    assert c.x[i] == pytest.approx([-1 / math.sqrt(2), 1 / math.sqrt(2)], abs=step)


def test_round_trip_suite_at_n20():
    for pot, truth in [(Harmonic(1.0), lambda x: x**2 / 2), (Quartic(1.0, 1.0), lambda x: x**4 - x**2)]:
        r = solve_equilibrium(pot, 20)
        assert aligned_error(reconstruct(r.string, grid_step=0.01), truth) < 1e-3


def test_round_trip_error_decreases_with_n():
    pot = Polynomial([0, 0, 0, 0, 0, 0, 1.0])
    errs = []
    for n in (5, 10, 20, 40):
        r = solve_equilibrium(pot, n)
        errs.append(aligned_error(reconstruct(r.string, grid_step=0.005), lambda x: x**6))
    assert all(a > b for a, b in zip(errs, errs[1:])), errs


def test_offset_conventions(quartic20):
    c = reconstruct(quartic20.string, grid_step=0.01)
    assert c.psi.min() == 0.0 and c.offset == "min-zero"
    m = c.with_offset("mean-zero")
    assert abs(np.trapezoid(m.psi, m.x)) < 1e-12
    a = c.with_offset("anchor=0.0")
    assert a(np.array([0.0]))[0] == pytest.approx(0.0, abs=1e-15)
    assert a.offset == "anchor=0.0"
    assert parse_offset(("anchor", 1)) == ("anchor", 1.0)
    with pytest.raises(ValueError):
        parse_offset("max-zero")
    with pytest.raises(ValueError):
        parse_offset("anchor")


@pytest.mark.parametrize("spec", ["min-zero", "mean-zero", "anchor=0.3"])
def test_offset_idempotent(quartic20, spec):
    c = reconstruct(quartic20.string, grid_step=0.01).with_offset(spec)
    assert np.array_equal(c.with_offset(spec).psi, c.psi) or \
        np.max(np.abs(c.with_offset(spec).psi - c.psi)) < 1e-15


@pytest.mark.parametrize("const", [1e-3, 7.5, -250.0, 1e5])
def test_constant_offset_is_invisible(const):
    for base in (Harmonic(1.0), Quartic(1.0, 1.0)):
        r0 = solve_equilibrium(base, 20)
        r1 = solve_equilibrium(base + Polynomial([const]), 20)
        assert np.array_equal(r0.positions, r1.positions)
        f0 = [s.force for s in external_force_samples(r0.string)]
        f1 = [s.force for s in external_force_samples(r1.string)]
        assert f0 == f1
        assert np.array_equal(reconstruct(r0.string).psi, reconstruct(r1.string).psi)


@pytest.mark.parametrize("a", [0.05, -0.2, 0.5])
def test_linear_term_slope_recovered(a):
    r = solve_equilibrium(Harmonic(1.0) + LinearTilt(a), 20)
    c = reconstruct(r.string, grid_step=0.01)
    # psi = x^2/2 + a x; slope at the string centre xc is xc + a
    xc = 0.5 * (c.domain[0] + c.domain[1])
    h = 0.01
    slope = (c(np.array([xc + h]))[0] - c(np.array([xc - h]))[0]) / (2 * h)
    assert slope == pytest.approx(xc + a, rel=1e-3)
    assert xc == pytest.approx(-a, abs=1e-9)


def test_curve_domain_is_string_hull(quartic20):
    c = reconstruct(quartic20.string, grid_step=0.3)
    lo, hi = quartic20.string.extent
    assert c.x[0] == lo and c.x[-1] == hi
    with pytest.raises(DomainError):
        c(np.array([hi + 1e-9]))
    assert np.array_equal(c(c.x), c.psi)


def test_curve_validation_and_units():
    with pytest.raises(ValueError):
        PotentialCurve([0.0, 0.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        PotentialCurve([0.0, 1.0], [1.0, 2.0], sigma=[-1.0, 0.0])
    c = PotentialCurve([0.0, 1.0, 2.0], [0.0, 1.0, 4.0], step=1.0)
    p = c.to_physical()
    assert p.physical and p.psi[1] == pytest.approx(c.units.energy_unit)
    back = p.to_internal()
    assert np.allclose(back.psi, c.psi, rtol=1e-15) and back.step == 1.0


def test_uncertainty_band(harmonic20):
    s = harmonic20.string
    c1 = reconstruct(s, grid_step=0.05, position_sigma=1e-3, n_replicas=64, seed=5)
    c2 = reconstruct(s, grid_step=0.05, position_sigma=1e-3, n_replicas=64, seed=5)
    c3 = reconstruct(s, grid_step=0.05, position_sigma=2e-3, n_replicas=64, seed=5)
    assert np.array_equal(c1.sigma, c2.sigma)
    assert np.array_equal(c1.psi, reconstruct(s, grid_step=0.05).psi)
    assert np.all(c1.sigma >= 0) and c1.sigma.max() > 0
    # small perturbations propagate linearly
    assert np.median(c3.sigma[1:-1] / c1.sigma[1:-1]) == pytest.approx(2.0, rel=0.05)
    with pytest.raises(ValueError):
        reconstruct(s, n_replicas=4)
