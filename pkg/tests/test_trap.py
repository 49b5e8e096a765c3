import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ionpotential.physics import convert
from ionpotential.potentials import Harmonic
from ionpotential.trap import (TrapGeometry, TrapPotential, axial_potential, strip_unit_curvature,
                               strip_unit_gradient, strip_unit_potential, test_potential as make_potential)

FIG2 = (40.5, 4.64, 30.8, 4.50, 40.5)


def test_strip_midpoint_half():
    assert strip_unit_potential(0.0, (-100.0, 100.0), 100.0) == pytest.approx(0.5, abs=1e-15)


def test_strip_decays_and_is_symmetric():
    s = (-50.0, 50.0)
    assert abs(strip_unit_potential(1e9, s, 100.0)) < 1e-7
    assert abs(strip_unit_potential(-1e9, s, 100.0)) < 1e-7
    a = np.linspace(0, 400, 17)
    assert np.allclose(strip_unit_potential(a + 7.0, (-43.0, 57.0), 80.0),
                       strip_unit_potential(7.0 - a, (-43.0, 57.0), 80.0), atol=1e-15)


def test_strip_tends_to_one_for_small_height():
    assert strip_unit_potential(0.0, (-50.0, 50.0), 1e-3) == pytest.approx(1.0, abs=1e-4)


@given(st.floats(-1000, 1000), st.floats(1, 300))
def test_unit_potentials_sum_below_one(x, h):
    g = TrapGeometry.uniform(5, 100.0, h)
    total = sum(strip_unit_potential(x, s, h) for s in g.strips)
    assert 0 < total <= 1 + 1e-12
    assert all(0 < strip_unit_potential(x, s, h) < 1 for s in g.strips)


def test_strip_derivatives_match_finite_differences():
    x = np.linspace(-400, 400, 81)
    s, h, d = (-30.0, 70.0), 90.0, 1e-3
    fd1 = (strip_unit_potential(x + d, s, h) - strip_unit_potential(x - d, s, h)) / (2 * d)
    fd2 = (strip_unit_gradient(x + d, s, h) - strip_unit_gradient(x - d, s, h)) / (2 * d)
    assert np.allclose(strip_unit_gradient(x, s, h), fd1, rtol=1e-8, atol=1e-14)
    assert np.allclose(strip_unit_curvature(x, s, h), fd2, rtol=1e-8, atol=1e-14)


def test_axial_potential_zero_and_linear():
    g = TrapGeometry()
    x = np.linspace(-500, 500, 101)
    assert np.all(axial_potential(x, g, np.zeros(5)) == 0)
    v = np.array([1.0, 2.0, -3.0, 4.0, 5.0])
    assert np.allclose(axial_potential(x, g, 2 * v), 2 * axial_potential(x, g, v), rtol=1e-15, atol=0)
    with pytest.raises(ValueError):
        axial_potential(x, g, [1.0, 2.0])
    with pytest.raises(ValueError):
        axial_potential(x, g, [0, 0, 61, 0, 0])


@pytest.mark.parametrize("m", range(5))
@pytest.mark.parametrize("delta", [0.1, 0.2, 0.5, 1.0])
def test_differencing_closure(m, delta):
    g = TrapGeometry()
    x = np.linspace(-600, 600, 241)
    v = np.array(FIG2)
    e = np.zeros(5)
    e[m] = delta
    diff = (axial_potential(x, g, v + e) - axial_potential(x, g, v)) / delta
    assert np.max(np.abs(diff - strip_unit_potential(x, g.strips[m], g.height))) < 1e-12


def test_shuttle_baseline_shape():
    # the gapless model puts two shallow pockets over the low-voltage segments
    # 2 and 4, walled in by segments 1, 3 and 5
    g = TrapGeometry()
    x = np.linspace(-300, 300, 6001)
    y = axial_potential(x, g, FIG2)
    i = np.nonzero((y[1:-1] < y[:-2]) & (y[1:-1] <= y[2:]))[0] + 1
    assert len(i) >= 1
    assert np.all((x[i] > g.center(1) - 50) & (x[i] < g.center(3) + 50))
    walls = axial_potential(np.array([g.center(0), g.center(4)]), g, FIG2)
    assert y[i].max() < walls.min()


def test_trap_potential_units_and_background():
    g = TrapGeometry()
    v = np.array(FIG2)
    pot = TrapPotential(g, v)
    x_int = np.linspace(-200, 200, 9)
    e_ev = convert(pot.value(x_int), "energy", "eV")
    assert np.allclose(e_ev, axial_potential(x_int, g, v), rtol=1e-13)
    assert not pot.confining
    bg = TrapPotential(g, np.zeros(5), background=Harmonic(1e-3))
    assert bg.confining
    assert bg.value(np.array([2.0])) == pytest.approx([2e-3])
    h = 1e-4
    assert pot.gradient(np.array([13.0]))[0] == pytest.approx(
        (pot.value(np.array([13.0 + h])) - pot.value(np.array([13.0 - h])))[0] / (2 * h), rel=1e-7)


def test_geometry_validation():
    with pytest.raises(ValueError):
        TrapGeometry(height=0)
    with pytest.raises(ValueError):
        TrapGeometry(strips=((0, 10), (5, 20)))
    with pytest.raises(ValueError):
        TrapGeometry(strips=((10, 0),))
    g = TrapGeometry()
    assert TrapGeometry.from_dict(g.to_dict()) == g
    assert g.n_electrodes == 5 and g.center(2) == 0.0


def test_test_potential_examples():
    assert make_potential("harmonic", k=1.0).value(np.array([2.0])) == pytest.approx([2.0])
    q = make_potential("quartic", a=1.0, b=1.0)
    m = q.minima()
    assert m == pytest.approx([-1 / math.sqrt(2), 1 / math.sqrt(2)])
    assert q.value(m) == pytest.approx([-0.25, -0.25])
    with pytest.raises(ValueError):
        make_potential("linear", slope=1.0)
    assert make_potential("linear", require_confining=False, slope=1.0) is not None
    with pytest.raises(ValueError):
        make_potential("cosine")
