"""P1 assembly: mass, stiffness, advection, CIP, Nitsche."""

import numpy as np
import pytest

from mbfem import fem
from mbfem.geometry import icosphere, rectangle
from mbfem.linalg import solve_direct
from mbfem.mesh import build_connectivity


@pytest.fixture(scope="module")
def sphere():
    return icosphere(1.0, 2)


@pytest.fixture(scope="module")
def flat():
    return rectangle(1.0, 1.0, 8, 8)


def test_mass_matrix_total_is_area(sphere):
    M = fem.assemble_mass(fem.P1Space(sphere)).scipy()
    ones = np.ones(sphere.n_vertices)
    assert ones @ (M @ ones) == pytest.approx(sphere.total_measure(), rel=1e-12)


def test_lumped_weights_are_mass_row_sums(sphere):
    M = fem.assemble_mass(fem.P1Space(sphere)).scipy()
    w = fem.lumped_weights(sphere)
    assert np.allclose(np.asarray(M.sum(axis=1)).ravel(), w, atol=1e-13)


def test_lumped_and_consistent_mass_agree_on_constants(sphere):
    space = fem.P1Space(sphere)
    M = fem.assemble_mass(space).scipy()
    Ml = fem.assemble_mass(space, lumped=True).scipy()
    c = np.full(sphere.n_vertices, 2.5)
    v = np.ones(sphere.n_vertices)
    assert v @ (M @ c) == pytest.approx(v @ (Ml @ c), rel=1e-13)


def test_stiffness_annihilates_constants(sphere):
    K = fem.assemble_stiffness(fem.P1Space(sphere)).scipy()
    c = np.full(sphere.n_vertices, 3.0)
    assert np.abs(K @ c).max() < 1e-12


def test_stiffness_energy_of_linear_field_flat(flat):
    # flat unit square, u = 2x + 3y: integral of |grad u|^2 is 13 exactly
    u = 2.0 * flat.vertices[:, 0] + 3.0 * flat.vertices[:, 1]
    K = fem.assemble_stiffness(fem.P1Space(flat)).scipy()
    assert u @ (K @ u) == pytest.approx(13.0, rel=1e-12)


def test_mass_nodal_matches_constant_coefficient(sphere):
    space = fem.P1Space(sphere)
    A = fem.assemble_mass_nodal(space, np.full(sphere.n_vertices, 2.0))
    M = fem.assemble_mass(space, lumped=True).scipy()
    assert np.abs((A.scipy() - 2.0 * M)).max() < 1e-12


def test_advection_weak_divergence_form(flat):
    # the form is -int (b u) . grad v; rows sum to the gradient of the
    # constant 1, so 1^T B u = 0 for any u, and pairing with u = x + y and
    # constant b = (1, 2) gives -int b . grad u = -3 over the unit square
    u = flat.vertices[:, 0] + flat.vertices[:, 1]
    b = np.tile(np.array([1.0, 2.0]), (flat.n_vertices, 1))
    B = fem.assemble_advection(fem.P1Space(flat), b).scipy()
    ones = np.ones(flat.n_vertices)
    assert abs(ones @ (B @ u)) < 1e-13
    assert u @ (B @ ones) == pytest.approx(-3.0, abs=1e-12)


def test_interpolate_nodal_values(sphere):
    f = fem.interpolate(fem.P1Space(sphere), lambda p: p[0] ** 2)
    assert np.allclose(f.values, sphere.vertices[:, 0] ** 2)


def test_cip_vanishes_on_linear_flat_field(flat):
    space = fem.P1Space(flat)
    b = np.tile(np.array([1.0, -1.0]), (flat.n_vertices, 1))
    beta = fem.cip_beta(space, b)
    S = fem.assemble_cip(space, beta).scipy()
    u = 1.0 + 2.0 * flat.vertices[:, 0] - 0.5 * flat.vertices[:, 1]
    # gradient jumps of a globally linear field vanish identically
    assert np.abs(S @ u).max() < 1e-12
    assert u @ (S @ u) == pytest.approx(0.0, abs=1e-14)


def test_cip_beta_zero_for_zero_velocity(sphere):
    space = fem.P1Space(sphere)
    beta = fem.cip_beta(space, np.zeros((sphere.n_vertices, 3)))
    assert not np.any(beta)


def test_cip_matches_facetwise_oracle():
    # independent re-assembly of the gradient-jump penalty, facet by facet
    mesh = rectangle(1.0, 1.0, 3, 3)
    space = fem.P1Space(mesh)
    rng = np.random.default_rng(7)
    b = rng.standard_normal((mesh.n_vertices, 2))
    beta = fem.cip_beta(space, b)
    S = fem.assemble_cip(space, beta, gamma_b=0.01).toarray()

    G = mesh.basis_gradients()
    hF = mesh.facet_sizes()
    areaF = mesh.facet_measures()
    dense = np.zeros((mesh.n_vertices, mesh.n_vertices))
    for f in mesh.interior_facets:
        cp, cm = mesh.facet_cells[f]
        dofs = np.concatenate([mesh.cells[cp], mesh.cells[cm]])
        J = np.concatenate([G[cp], -G[cm]], axis=0)
        local = 0.01 * beta[f] * hF[f] ** 2 * areaF[f] * (J @ J.T)
        # shared-edge vertices appear in both cells: accumulate duplicates
        np.add.at(dense, (np.repeat(dofs, len(dofs)),
                          np.tile(dofs, len(dofs))), local.ravel())
    assert np.abs(S - dense).max() < 1e-14


def test_nitsche_linear_patch(flat):
    # -div(grad u) = 0 with u = 1 + 2x - y imposed weakly: P1 reproduces
    # the linear solution to machine precision
    space = fem.P1Space(flat)
    exact = 1.0 + 2.0 * flat.vertices[:, 0] - flat.vertices[:, 1]
    K = fem.assemble_stiffness(space).scipy()
    N, rN = fem.assemble_nitsche(space, 1.0, exact)
    u = solve_direct((K + N.scipy(), rN))
    assert np.abs(u - exact).max() < 1e-10


def test_vertex_normal_of_sphere_is_radial(sphere):
    n = fem.vertex_normal(sphere)
    r = sphere.vertices / np.linalg.norm(sphere.vertices, axis=1)[:, None]
    align = np.abs(np.sum(n * r, axis=1))
    assert align.min() > 0.99
