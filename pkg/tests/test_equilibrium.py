import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionpotential.equilibrium import (ConvergenceError, EquilibriumResult, SolverConfig, is_stable,
                                      solve_equilibrium)
from ionpotential.physics import IonString, coulomb_force, energy_gradient
from ionpotential.potentials import Harmonic, LinearTilt, Polynomial, Quartic, SampledPotential


def relax(grad, x0, step=0.05, tol=1e-13, max_iter=200000):
    """Plain damped gradient relaxation with step halving; the reference minimiser."""
    x = np.array(x0, dtype=float)
    g = grad(x)
    for _ in range(max_iter):
        if np.max(np.abs(g)) < tol:
            return x
        trial = x - step * g
        if np.all(np.diff(trial) > 0):
            gt = grad(trial)
            if np.max(np.abs(gt)) < np.max(np.abs(g)) * 1.5:
                x, g = trial, gt
                step = min(step * 1.1, 0.2)
                continue
        step *= 0.5
    raise RuntimeError("reference relaxation did not converge")


def ref_grad(dpsi):
    def grad(x):
        d = x[:, None] - x[None, :]
        np.fill_diagonal(d, np.inf)
        return dpsi(x) - np.sum(np.sign(d) / d**2, axis=1)
    return grad


def test_harmonic_analytic():
    r = solve_equilibrium(Harmonic(1.0), 2)
    assert np.allclose(r.positions, [-(0.25 ** (1 / 3)), 0.25 ** (1 / 3)], atol=1e-9, rtol=0)
    assert r.positions == pytest.approx([-0.6299605, 0.6299605], abs=1e-7)
    r = solve_equilibrium(Harmonic(1.0), 3)
    b = 1.25 ** (1 / 3)
    assert np.allclose(r.positions, [-b, 0.0, b], atol=1e-9, rtol=0)
    assert r.positions == pytest.approx([-1.0772173, 0.0, 1.0772173], abs=1e-7)
    r = solve_equilibrium(Harmonic(1.0), 1)
    assert r.positions == pytest.approx([0.0], abs=1e-12)
    assert r.converged and r.stable


def test_residual_matches_independent_force_balance(harmonic20):
    r = harmonic20
    assert r.converged and r.residual <= SolverConfig().tol
    s = IonString(r.positions)
    for i, xi in enumerate(r.positions):
        assert abs(xi - coulomb_force(s, i)) <= SolverConfig().tol  # psi' = x


def test_errors():
    with pytest.raises(ValueError):
        solve_equilibrium(Harmonic(1.0), 0)
    with pytest.raises(ValueError):
        solve_equilibrium(LinearTilt(1.0), 3)
    with pytest.raises(ValueError):
        SolverConfig(tol=0)
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)
    with pytest.raises(ConvergenceError):
        solve_equilibrium(Quartic(1.0, 1.0), 20, SolverConfig(max_iter=1, seed_wells=False))


def test_initial_guess_given():
    r = solve_equilibrium(Harmonic(1.0), 3, initial=[-5.0, 0.1, 3.0])
    assert r.positions == pytest.approx([-1.25 ** (1 / 3), 0, 1.25 ** (1 / 3)], abs=1e-9)
    with pytest.raises(ValueError):
        solve_equilibrium(Harmonic(1.0), 3, initial=[0.0, 1.0])
    with pytest.raises(ValueError):
        solve_equilibrium(Harmonic(1.0), 3, SolverConfig(initial_guess="given"))


@pytest.mark.parametrize("pot", [Harmonic(1.0), Quartic(1.0, 1.0), Polynomial([0, 0, 0.5, 0, 0.05])])
@pytest.mark.parametrize("n", [2, 5, 8, 21])
def test_symmetry_for_even_potentials(pot, n):
    x = solve_equilibrium(pot, n).positions
    assert np.max(np.abs(x + x[::-1])) < 1e-8


@pytest.mark.parametrize("n", [3, 5, 7])
def test_odd_string_in_deep_double_well_breaks_symmetry(n):
    # the symmetric arrangement is a saddle; the two lopsided minima are mirror images
    pot = Quartic(0.3, 2.0)
    r = solve_equilibrium(pot, n)
    assert r.stable
    mirror = EquilibriumResult(IonString(-r.positions[::-1]), 0.0, 0, True, True, pot)
    assert np.max(np.abs(energy_gradient(mirror.positions, pot))) < 1e-9
    assert is_stable(mirror)
    assert mirror.energy == pytest.approx(r.energy, rel=1e-12)


@given(st.floats(0.01, 100.0), st.integers(2, 15))
@settings(max_examples=30)
def test_scaling_law(s, n):
    x1 = solve_equilibrium(Harmonic(1.0), n).positions
    xs = solve_equilibrium(Harmonic(s), n).positions
    assert np.allclose(xs, x1 * s ** (-1 / 3), rtol=1e-8, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("case", ["harmonic", "quartic", "tilted", "asym"])
def test_agrees_with_relaxation_oracle(n, case):
    pots = {
        "harmonic": (Harmonic(2.0, 0.3), lambda x: 2.0 * (x - 0.3)),
        "quartic": (Quartic(1.0, 1.0), lambda x: 4 * x**3 - 2 * x),
        "tilted": (Quartic(1.0, 1.0) + LinearTilt(0.4), lambda x: 4 * x**3 - 2 * x + 0.4),
        "asym": (Polynomial([0, 0.2, 1.0, 0.3, 0.5]), lambda x: 0.2 + 2 * x + 0.9 * x**2 + 2 * x**3),
    }
    pot, dpsi = pots[case]
    r = solve_equilibrium(pot, n)
    ref = relax(ref_grad(dpsi), r.positions + 0.05 * np.linspace(-1, 1, n))
    assert np.max(np.abs(r.positions - ref)) < 1e-8


def test_is_stable_double_well():
    pot = Quartic(1.0, 1.0)
    top = EquilibriumResult(IonString([0.0]), 0.0, 0, True, True, pot)
    assert not is_stable(top)
    for x in (-1 / math.sqrt(2), 1 / math.sqrt(2)):
        assert is_stable(EquilibriumResult(IonString([x]), 0.0, 0, True, True, pot))
    assert is_stable(solve_equilibrium(Harmonic(1.0), 2))


def test_single_ion_in_double_well_avoids_the_top():
    r = solve_equilibrium(Quartic(1.0, 1.0), 1)
    assert r.stable
    assert abs(abs(r.positions[0]) - 1 / math.sqrt(2)) < 1e-9


def test_well_seeding_finds_stable_split_string():
    # deep, well separated wells; the even start sits across the barrier
    pot = Quartic(0.01, 2.0)
    r = solve_equilibrium(pot, 6)
    assert r.converged and r.stable
    assert np.all(np.diff(r.positions) > 0)


def test_sampled_potential_with_walls():
    x = np.linspace(-3, 3, 301)
    pot = SampledPotential(x, 0.5 * x**2)
    r = solve_equilibrium(pot, 3)
    b = 1.25 ** (1 / 3)
    assert r.positions == pytest.approx([-b, 0, b], abs=1e-6)


def test_energy_property(harmonic20):
    assert np.isfinite(harmonic20.energy)
    assert len(harmonic20.string) == 20
