"""Mesh redistribution: tangential harmonic-map node motion and bulk extension.

The tangential step minimizes the harmonic (Dirichlet) energy of the map from
a reference mesh to the repositioned surface, subject to a pointwise
zero-normal-motion constraint, so node positions equalize without altering
the shape. A companion routine extends surface displacements harmonically
into a bulk mesh, and geometric fields (mean-curvature vector and its flux
variable) are refreshed after nodes move.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .linalg import solve_direct
from .mesh import MeshQualityReport, SimplicialMesh, move_vertices, quality


@dataclass
class RedistributionResult:
    displacement: np.ndarray        # (N, d) tangential node motion, 0 on boundary
    multiplier: np.ndarray          # (N,) constraint multiplier, 0 on boundary
    quality_before: MeshQualityReport
    quality_after: MeshQualityReport


def _tangent_bases(normals: np.ndarray):
    """Orthonormal tangent pair (t1, t2) at each vertex normal."""
    n = len(normals)
    seed = np.zeros((n, 3))
    seed[np.arange(n), np.argmin(np.abs(normals), axis=1)] = 1.0
    t1 = np.cross(normals, seed)
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    return t1, np.cross(normals, t1)


def tangential_redistribute(current: SimplicialMesh,
                            reference: SimplicialMesh,
                            initial_guess=None) -> RedistributionResult:
    """Solve the constrained harmonic-map system for a tangential displacement.

    The stiffness is assembled on ``reference`` (the map's source mesh), the
    pointwise zero-normal-motion constraint on ``current``. Boundary vertices
    are clamped. The saddle system is solved through its exact tangent-plane
    reduction: parametrizing the displacement in per-vertex tangent bases
    turns it into a positive-definite system of half the size, and the
    constraint multiplier is recovered from the normal residual. Returns the
    displacement to be applied with ``move_vertices``.
    """
    if current.cells.shape != reference.cells.shape or \
            not np.array_equal(current.cells, reference.cells):
        raise ValueError("current and reference meshes must share connectivity")
    n = current.n_vertices
    d = current.dim_ambient
    K = fem.assemble_stiffness(fem.P1Space(reference)).scipy()

    w_lump = fem.lumped_weights(current)
    normals = fem.vertex_normal(current)
    t1, t2 = _tangent_bases(normals)
    free = ~current.boundary_vertex_flags
    nf = int(free.sum())

    # T maps 2 tangent coordinates per free vertex to stacked displacements
    rows = np.concatenate([c * nf + np.arange(nf) for c in range(d)] * 2)
    cols = np.concatenate([2 * np.arange(nf)] * d
                          + [2 * np.arange(nf) + 1] * d)
    vals = np.concatenate([t1[free, c] for c in range(d)]
                          + [t2[free, c] for c in range(d)])
    T = sp.csr_matrix((vals, (rows, cols)), shape=(d * nf, 2 * nf))
    Kff = sp.block_diag([K[free][:, free]] * d, format="csr")
    A = (T.T @ Kff @ T).tocsr()

    Kx = K @ current.vertices                       # (n, d)
    rhs = -(T.T @ Kx[free].T.ravel())

    x0 = None
    if initial_guess is not None:
        guess = np.asarray(initial_guess, dtype=float).reshape(n, d)
        x0 = np.empty(2 * nf)
        x0[0::2] = np.sum(guess[free] * t1[free], axis=1)
        x0[1::2] = np.sum(guess[free] * t2[free], axis=1)
    M = sp.diags(1.0 / A.diagonal())
    scale = max(float(np.linalg.norm(rhs)), 1e-300)
    alpha, info = spla.cg(A, rhs, x0=x0, rtol=1e-10, maxiter=5000, M=M)
    if info != 0 or np.linalg.norm(A @ alpha - rhs) > 1e-8 * scale:
        alpha = solve_direct((A.tocsc(), rhs))

    displacement = np.zeros((n, d))
    displacement[free] = alpha[0::2, None] * t1[free] \
        + alpha[1::2, None] * t2[free]
    residual = Kx + K @ displacement                # stationarity defect
    multiplier = np.zeros(n)
    multiplier[free] = np.sum(residual[free] * normals[free], axis=1) \
        / w_lump[free]

    q_before = quality(current)
    q_after = quality(move_vertices(current, displacement))
    return RedistributionResult(displacement, multiplier, q_before, q_after)


def bulk_harmonic_extension(bulk: SimplicialMesh, boundary_displacement
                            ) -> np.ndarray:
    """Componentwise harmonic extension of boundary data into the bulk.

    ``boundary_displacement`` is an (N, d) array whose rows at boundary
    vertices hold the prescribed displacement; interior rows are ignored.
    """
    data = np.asarray(getattr(boundary_displacement, "values",
                              boundary_displacement), dtype=float)
    space = fem.P1Space(bulk)
    K = fem.assemble_stiffness(space)
    bdofs = np.flatnonzero(bulk.boundary_vertex_flags)
    out = np.zeros_like(data)
    for c in range(data.shape[1]):
        A, rhs = fem.apply_dirichlet(K, np.zeros(bulk.n_vertices),
                                     bdofs, data[bdofs, c])
        out[:, c] = solve_direct((A, rhs))
    return out


def refresh_geometric_fields(mesh: SimplicialMesh, gamma_w: float,
                             kappa0: float, boundary_mu=None):
    """Recompute the mean-curvature vector and its flux variable after a move.

    Returns (kappa, y) with kappa from the lumped curvature identity and
    y = gamma_w * (kappa - kappa0 * omega), omega the vertex normal.
    """
    from .helfrich import init_curvature

    kappa = init_curvature(mesh, boundary_mu=boundary_mu)
    omega = fem.vertex_normal(mesh)
    y = gamma_w * (kappa - kappa0 * omega)
    return kappa, y
