"""Cahn-Hilliard mixed scheme: potentials, energy, conservation."""

import numpy as np
import pytest

from mbfem import fem
from mbfem.errors import DomainError
from mbfem.cahn_hilliard import (ChFlags, ChParams, ch_cylinder_scenario,
                                 ch_energy, ch_step,
                                 potential_value_and_derivative, random_phase)
from mbfem.geometry import icosphere


def test_polynomial_potential_values():
    # F2(u) = (1 - u^2)^2 / 4: double well with minima at +-1
    u = np.array([-1.0, 0.0, 1.0, 0.5])
    F, dF = potential_value_and_derivative("F2", u)
    assert np.allclose(F, [0.0, 0.25, 0.0, (1 - 0.25) ** 2 / 4])
    # F2'(u) = -u (1 - u^2)
    assert np.allclose(dF, [0.0, 0.0, 0.0, -0.5 * 0.75])


def test_logarithmic_potential_values():
    # logarithmic (mixing-entropy) well: slope ln((1+u)/(1-u)) - 4u, four
    # times the derivative of the stored value (interaction strength four)
    u = np.array([-0.6, 0.0, 0.3, 0.9])
    F, dF = potential_value_and_derivative("F1", u)
    assert np.allclose(dF, np.log((1 + u) / (1 - u)) - 4.0 * u)
    eps = 1e-7
    Fp, _ = potential_value_and_derivative("F1", u + eps)
    Fm, _ = potential_value_and_derivative("F1", u - eps)
    assert np.allclose(dF, 4.0 * (Fp - Fm) / (2 * eps), atol=1e-5)
    # value is symmetric and largest at u = 0
    assert F[1] == pytest.approx(0.5)
    with pytest.raises(DomainError):
        potential_value_and_derivative("F1", np.array([1.0]))


def test_params_validation():
    with pytest.raises(ValueError):
        ChParams(mobility=-1.0)
    with pytest.raises(ValueError):
        ChParams(potential="F3")
    b = ChParams(potential="F1").bounds()
    assert b.margin > 0.0
    assert ChParams(potential="F2").bounds().margin == 0.0


def test_energy_of_pure_phase_is_zero():
    mesh = icosphere(1.0, 2)
    params = ChParams(potential="F2")
    assert ch_energy(mesh, np.ones(mesh.n_vertices), params) == \
        pytest.approx(0.0, abs=1e-13)


def test_step_conserves_mass_and_decreases_energy():
    mesh = icosphere(1.0, 2)
    params = ChParams(mobility=0.01, epsilon=0.2, sigma=1.0, potential="F2")
    flags = ChFlags.solver(4)
    u = random_phase(mesh.n_vertices, seed=1, amplitude=0.3)
    w = fem.lumped_weights(mesh)
    mass0 = float(w @ u)
    e_prev = ch_energy(mesh, u, params)
    mass_prev = mass0
    for _ in range(5):
        state = ch_step(mesh, u, params, flags, tau=1e-3,
                        mass_target=mass_prev)
        u, mass_prev = state.u, state.mass
        assert np.abs(u).max() <= 1.0
    assert abs(mass_prev - mass0) < 1e-9 * (1 + abs(mass0))
    assert state.energy < e_prev


def test_random_phase_deterministic():
    a = random_phase(100, seed=3)
    b = random_phase(100, seed=3)
    assert np.array_equal(a, b)
    assert np.abs(a).max() <= 1.0


def test_cylinder_scenario_f2_short():
    series = ch_cylinder_scenario("F2", 4, h=0.2, T=0.02, tau=2e-3, seed=0)
    assert series["break_step"] is None
    assert len(series["t"]) == 11
    assert max(series["max_u"]) <= 1.0
    rel_mass = np.abs(np.array(series["mass"]) - series["mass"][0])
    assert rel_mass.max() <= 1e-9 * (1 + abs(series["mass"][0]))
