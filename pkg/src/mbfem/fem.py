"""P1 finite element spaces and assembly of all bilinear/linear forms.

Scalar piecewise-linear continuous elements on simplicial surface or bulk
meshes. Assembly is vectorized over cells into triplet lists finalized as
CSR matrices. All element integrals use quadrature exact for the polynomial
degree present; nonlinear vertex terms use the mass-lumped (vertex) rule.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import polynomial as npoly
import scipy.sparse as sp

from .errors import DimensionMismatch, ZeroNormal
from .linalg import SparseMatrix
from .mesh import SimplicialMesh

GAMMA_A_DEFAULT = 10.0
GAMMA_B_DEFAULT = 0.01


class P1Space:
    """Vertex-based P1 space; optionally with all boundary dofs constrained."""

    def __init__(self, mesh: SimplicialMesh, components: int = 1,
                 constrained: str = "none"):
        self.mesh = mesh
        self.components = int(components)
        if constrained == "none":
            self.constrained_vertices = np.zeros(mesh.n_vertices, dtype=bool)
        elif constrained == "boundary":
            self.constrained_vertices = mesh.boundary_vertex_flags.copy()
        else:
            flags = np.zeros(mesh.n_vertices, dtype=bool)
            flags[np.asarray(constrained, dtype=np.int64)] = True
            self.constrained_vertices = flags

    @property
    def n_dofs(self):
        return self.mesh.n_vertices * self.components

    @property
    def free_vertices(self):
        return ~self.constrained_vertices


class NodalField:
    """Coefficients of a P1 function: one value (or vector) per vertex."""

    def __init__(self, space: P1Space, values):
        self.space = space
        self.values = np.asarray(values, dtype=np.float64)
        expect = (space.mesh.n_vertices,) if space.components == 1 \
            else (space.mesh.n_vertices, space.components)
        if self.values.shape != expect:
            raise DimensionMismatch(
                f"field shape {self.values.shape} != expected {expect}")


def interpolate(space: P1Space, fn) -> NodalField:
    """Nodal interpolation of a callable of the vertex coordinates."""
    vals = np.apply_along_axis(fn, 1, space.mesh.vertices)
    return NodalField(space, vals)


def _values(u):
    return u.values if isinstance(u, NodalField) else np.asarray(u, dtype=np.float64)


def _triplets_to_matrix(n, rows, cols, vals) -> SparseMatrix:
    return SparseMatrix(n, n, np.concatenate(rows), np.concatenate(cols),
                        np.concatenate(vals))


# ---------------------------------------------------------------------------
# mass, stiffness, advection
# ---------------------------------------------------------------------------

def lumped_weights(mesh: SimplicialMesh) -> np.ndarray:
    """Vertex weights of the mass-lumped inner product (|T|/(m+1) shares)."""
    meas = mesh.cell_measures()
    m1 = mesh.dim_manifold + 1
    w = np.zeros(mesh.n_vertices)
    np.add.at(w, mesh.cells.ravel(), np.repeat(meas / m1, m1))
    return w


def assemble_mass(space: P1Space, coeff=None, lumped: bool = False) -> SparseMatrix:
    """Mass matrix; ``coeff`` is a scalar or per-cell array; lumped = diagonal."""
    mesh = space.mesh
    meas = mesh.cell_measures()
    if coeff is not None:
        meas = meas * np.broadcast_to(np.asarray(coeff, dtype=float), meas.shape)
    m1 = mesh.dim_manifold + 1
    cells = mesh.cells
    if lumped:
        w = np.zeros(mesh.n_vertices)
        np.add.at(w, cells.ravel(), np.repeat(meas / m1, m1))
        return SparseMatrix.from_scipy(sp.diags(w))
    local = (np.ones((m1, m1)) + np.eye(m1)) / ((m1) * (m1 + 1))
    vals = meas[:, None, None] * local[None]
    rows = np.repeat(cells, m1, axis=1)
    cols = np.tile(cells, (1, m1))
    return _triplets_to_matrix(mesh.n_vertices, [rows.ravel()], [cols.ravel()],
                               [vals.reshape(len(cells), -1).ravel()])


def assemble_mass_nodal(space: P1Space, coeff_vertex) -> SparseMatrix:
    """Diagonal matrix of lumped weights times a vertex-valued coefficient."""
    w = lumped_weights(space.mesh) * _values(coeff_vertex)
    return SparseMatrix.from_scipy(sp.diags(w))


def assemble_stiffness(space: P1Space, diffusion=None) -> SparseMatrix:
    """Stiffness K_ij = sum_T |T| (A grad phi_j) . grad phi_i.

    ``diffusion``: None (identity), scalar, per-cell scalars (M,), or per-cell
    tensors (M, d, d).
    """
    mesh = space.mesh
    G = mesh.basis_gradients()          # (M, m+1, d)
    meas = mesh.cell_measures()
    if diffusion is None:
        AG = G
    else:
        A = np.asarray(diffusion, dtype=float)
        if A.ndim <= 1:
            AG = G * np.broadcast_to(A, meas.shape)[:, None, None]
            local = np.einsum("cad,cbd->cab", G, AG)
            return _finalize_cellwise(mesh, meas[:, None, None] * local)
        AG = np.einsum("cde,cbe->cbd", A, G)
    local = np.einsum("cad,cbd->cab", G, AG)
    return _finalize_cellwise(mesh, meas[:, None, None] * local)


def _finalize_cellwise(mesh, vals) -> SparseMatrix:
    m1 = mesh.dim_manifold + 1
    rows = np.repeat(mesh.cells, m1, axis=1)
    cols = np.tile(mesh.cells, (1, m1))
    return _triplets_to_matrix(mesh.n_vertices, [rows.ravel()], [cols.ravel()],
                               [vals.reshape(mesh.n_cells, -1).ravel()])


def assemble_advection(space: P1Space, velocity) -> SparseMatrix:
    """C_ij = - sum_T int_T (b phi_j) . grad phi_i, with b linear per vertex."""
    mesh = space.mesh
    b = _values(velocity)
    G = mesh.basis_gradients()
    meas = mesh.cell_measures()
    m1 = mesh.dim_manifold + 1
    bc = b[mesh.cells]                              # (M, m+1, d)
    # int_T b phi_j = |T|/((m+1)(m+2)) (sum_a b_a + b_j)
    bsum = bc.sum(axis=1, keepdims=True)
    bint = (bsum + bc) * (meas / (m1 * (m1 + 1)))[:, None, None]
    local = -np.einsum("cid,cjd->cij", G, bint)
    return _finalize_cellwise(mesh, local)


# ---------------------------------------------------------------------------
# CIP stabilization
# ---------------------------------------------------------------------------

def cip_beta(space: P1Space, velocity) -> np.ndarray:
    """Per-facet velocity scale: max over the two adjacent cells of the
    cellwise sup of |b| (attained at vertices for linear b)."""
    mesh = space.mesh
    b = _values(velocity)
    bnorm = np.linalg.norm(b, axis=1)
    beta_T = bnorm[mesh.cells].max(axis=1)
    fc = mesh.facet_cells
    beta = beta_T[fc[:, 0]]
    has_minus = fc[:, 1] >= 0
    beta[has_minus] = np.maximum(beta[has_minus], beta_T[fc[has_minus, 1]])
    return beta


def cip_phi(space: P1Space, velocity, reaction=None) -> np.ndarray:
    """Per-facet parameter max(phi_T+, phi_T-), phi_T = min(h_T/beta_T, 1/mu_T)."""
    mesh = space.mesh
    b = _values(velocity)
    bnorm = np.linalg.norm(b, axis=1)
    beta_T = np.maximum(bnorm[mesh.cells].max(axis=1), 1e-300)
    h_T = mesh.cell_diameters()
    phi_T = h_T / beta_T
    if reaction is not None:
        c = np.abs(_values(reaction))
        mu_T = np.maximum(c[mesh.cells].max(axis=1), 1e-300)
        phi_T = np.minimum(phi_T, 1.0 / mu_T)
    fc = mesh.facet_cells
    phi = phi_T[fc[:, 0]]
    has_minus = fc[:, 1] >= 0
    phi[has_minus] = np.maximum(phi[has_minus], phi_T[fc[has_minus, 1]])
    return phi


def assemble_cip(space: P1Space, beta_per_facet, gamma_b: float = GAMMA_B_DEFAULT
                 ) -> SparseMatrix:
    """Full-gradient-jump interior penalty:

    gamma_b * sum_F beta_F h_F^2 int_F [[grad u]] . [[grad v]].
    """
    mesh = space.mesh
    beta = np.asarray(beta_per_facet, dtype=float)
    G = mesh.basis_gradients()
    hF = mesh.facet_sizes()
    area = mesh.facet_measures()
    m1 = mesh.dim_manifold + 1
    fi = np.asarray(mesh.interior_facets, dtype=np.int64)
    if fi.size == 0:
        return SparseMatrix(mesh.n_vertices, mesh.n_vertices, [], [], [])
    cp, cm = mesh.facet_cells[fi, 0], mesh.facet_cells[fi, 1]
    dofs = np.concatenate([mesh.cells[cp], mesh.cells[cm]], axis=1)
    J = np.concatenate([G[cp], -G[cm]], axis=1)           # (F, 2(m+1), d)
    coef = gamma_b * beta[fi] * hF[fi] ** 2 * area[fi]
    local = coef[:, None, None] * np.einsum("fad,fbd->fab", J, J)
    rows = np.repeat(dofs, 2 * m1, axis=1).ravel()
    cols = np.tile(dofs, (1, 2 * m1)).ravel()
    return _triplets_to_matrix(mesh.n_vertices, [rows], [cols],
                               [local.ravel()])


def assemble_cip_streamline(space: P1Space, velocity, phi_per_facet,
                            gamma_b: float = GAMMA_B_DEFAULT) -> SparseMatrix:
    """Streamline-jump interior penalty:

    gamma_b * sum_F phi_F h_F int_F [[b . grad u]] [[b . grad v]].

    For surface meshes (facets are edges) the linear-in-x jump is integrated
    exactly; bulk facets use the P1 facet mass rule.
    """
    mesh = space.mesh
    phi = np.asarray(phi_per_facet, dtype=float)
    b = _values(velocity)
    G = mesh.basis_gradients()
    hF = mesh.facet_sizes()
    area = mesh.facet_measures()
    m1 = mesh.dim_manifold + 1
    nfv = mesh.facets.shape[1]
    edge_mass = (np.ones((nfv, nfv)) + np.eye(nfv)) / (nfv * (nfv + 1))
    rows, cols, vals = [], [], []
    for f in mesh.interior_facets:
        cp, cm = mesh.facet_cells[f]
        dofs = np.concatenate([mesh.cells[cp], mesh.cells[cm]])
        J = np.concatenate([G[cp], -G[cm]], axis=0)       # (2(m+1), d)
        # jump of b.grad at each facet vertex: rows = facet vertices, cols = dofs
        jv = b[mesh.facets[f]] @ J.T                      # (nfv, 2(m+1))
        local = np.zeros((2 * m1, 2 * m1))
        for a in range(nfv):
            for bb in range(nfv):
                local += edge_mass[a, bb] * np.outer(jv[a], jv[bb])
        local *= gamma_b * phi[f] * hF[f] * area[f]
        rows.append(np.repeat(dofs, 2 * m1))
        cols.append(np.tile(dofs, 2 * m1))
        vals.append(local.ravel())
    if not rows:
        return SparseMatrix(mesh.n_vertices, mesh.n_vertices, [], [], [])
    return _triplets_to_matrix(mesh.n_vertices, rows, cols, vals)


# ---------------------------------------------------------------------------
# boundary terms
# ---------------------------------------------------------------------------

def assemble_nitsche(space: P1Space, diffusion, dirichlet_data,
                     gamma_A: float = GAMMA_A_DEFAULT, dirichlet_facets=None):
    """Weak Dirichlet terms: consistency, symmetry and penalty.

    Adds -<(A grad u).n, v> - <u, (A grad v).n> + <gamma_A_loc h_F^-1 u, v>
    over the Dirichlet boundary, with the matching data terms on the rhs.
    The penalty is scaled by the local diffusion magnitude. Returns
    (SparseMatrix, rhs).
    """
    mesh = space.mesh
    if dirichlet_facets is None:
        dirichlet_facets = mesh.boundary_facets
    dirichlet_facets = np.asarray(dirichlet_facets, dtype=np.int64)
    g = _values(dirichlet_data) if not callable(dirichlet_data) else None
    G = mesh.basis_gradients()
    hF = mesh.facet_sizes()
    area = mesh.facet_measures()
    conorm = mesh.facet_conormals()
    m1 = mesh.dim_manifold + 1
    nfv = mesh.facets.shape[1]
    fmass = (np.ones((nfv, nfv)) + np.eye(nfv)) / (nfv * (nfv + 1))
    rows, cols, vals = [], [], []
    rhs = np.zeros(mesh.n_vertices)
    for f in dirichlet_facets:
        T = mesh.facet_cells[f, 0]
        cdofs = mesh.cells[T]
        fverts = mesh.facets[f]
        n_co = conorm[f, 0]
        A_T, a_mag = _cell_diffusion(diffusion, mesh, T)
        flux = (G[T] @ A_T.T) @ n_co if A_T is not None else G[T] @ n_co * a_mag
        # int_F phi_i over facet vertices
        phi_int = area[f] / nfv
        if g is not None:
            gvals = g[fverts]
        else:
            gvals = np.array([dirichlet_data(mesh.vertices[v]) for v in fverts])
        pen = gamma_A * a_mag / hF[f]
        # consistency: -int_F (A grad u).n v ; symmetry: transpose
        for ia, vi in enumerate(fverts):
            rows.append(np.full(m1, vi))
            cols.append(cdofs)
            vals.append(-phi_int * flux)
            rows.append(cdofs)
            cols.append(np.full(m1, vi))
            vals.append(-phi_int * flux)
        # penalty facet mass
        lm = pen * area[f] * fmass
        rows.append(np.repeat(fverts, nfv))
        cols.append(np.tile(fverts, nfv))
        vals.append(lm.ravel())
        # rhs: -<g, (A grad v).n> + pen <g, v>
        g_int = area[f] / nfv * gvals.sum()  # int_F g (P1 data)
        rhs[cdofs] += -g_int * flux
        rhs[fverts] += lm @ gvals
    if rows:
        mat = _triplets_to_matrix(mesh.n_vertices, rows, cols, vals)
    else:
        mat = SparseMatrix(mesh.n_vertices, mesh.n_vertices, [], [], [])
    return mat, rhs


def _cell_diffusion(diffusion, mesh, T):
    """Return (tensor or None, scalar magnitude) for cell T."""
    if diffusion is None:
        return None, 1.0
    A = np.asarray(diffusion, dtype=float)
    if A.ndim == 0:
        return None, float(A)
    if A.ndim == 1:
        return None, float(A[T])
    if A.ndim == 2:
        return A, float(np.linalg.norm(A, 2))
    return A[T], float(np.linalg.norm(A[T], 2))


def _edge_signed_part_blocks(s0, s1, positive: bool):
    """Exact 2x2 blocks of int_0^1 s^{+/-}(x) phi_i(x) phi_j(x) dx and the
    companion vector int s^{+/-} phi_i phi_j for linear s with endpoint values
    (s0, s1). Returns the (2, 2) matrix of reference-interval integrals."""
    s_poly = np.array([s0, s1 - s0])
    phis = [np.array([1.0, -1.0]), np.array([0.0, 1.0])]
    pieces = _sign_intervals(s0, s1, positive)
    out = np.zeros((2, 2))
    for (a, b) in pieces:
        for i in range(2):
            for j in range(2):
                p = npoly.polymul(npoly.polymul(s_poly, phis[i]), phis[j])
                P = npoly.polyint(p)
                out[i, j] += npoly.polyval(b, P) - npoly.polyval(a, P)
    return out


def _edge_signed_part_rhs(s0, s1, u0, u1, positive: bool):
    """int_0^1 s^{+/-}(x) u(x) phi_i(x) dx for linear s and u; returns (2,)."""
    s_poly = np.array([s0, s1 - s0])
    u_poly = np.array([u0, u1 - u0])
    phis = [np.array([1.0, -1.0]), np.array([0.0, 1.0])]
    pieces = _sign_intervals(s0, s1, positive)
    out = np.zeros(2)
    for (a, b) in pieces:
        for i in range(2):
            p = npoly.polymul(npoly.polymul(s_poly, u_poly), phis[i])
            P = npoly.polyint(p)
            out[i] += npoly.polyval(b, P) - npoly.polyval(a, P)
    return out


def _sign_intervals(s0, s1, positive: bool):
    """Subintervals of [0,1] where the linear function keeps the wanted sign."""
    want = (lambda v: v > 0) if positive else (lambda v: v < 0)
    if s0 == s1:
        return [(0.0, 1.0)] if want(s0) else []
    root = -s0 / (s1 - s0)
    if root <= 0 or root >= 1:
        mid = 0.5 * (s0 + s1)
        return [(0.0, 1.0)] if want(mid) else []
    left, right = [], []
    if want(s0):
        left = [(0.0, root)]
    if want(s1):
        right = [(root, 1.0)]
    return left + right


def assemble_boundary_upwind(space: P1Space, velocity, inflow_data=None,
                             facets=None):
    """Boundary upwind terms for the advective flux.

    Matrix: <(b.n)^+ u, v> over the boundary (outflow); rhs: -<(b.n)^- g, v>
    with the inflow data g. Exact piecewise-polynomial integration on surface
    boundary edges. Returns (SparseMatrix, rhs).
    """
    mesh = space.mesh
    if facets is None:
        facets = mesh.boundary_facets
    b = _values(velocity)
    g = None
    if inflow_data is not None:
        g = _values(inflow_data) if not callable(inflow_data) else None
    conorm = mesh.facet_conormals()
    area = mesh.facet_measures()
    rows, cols, vals = [], [], []
    rhs = np.zeros(mesh.n_vertices)
    for f in np.asarray(facets, dtype=np.int64):
        fverts = mesh.facets[f]
        if len(fverts) != 2:
            raise DimensionMismatch("boundary upwinding supports surface meshes")
        n_co = conorm[f, 0]
        s0, s1 = b[fverts[0]] @ n_co, b[fverts[1]] @ n_co
        block = area[f] * _edge_signed_part_blocks(s0, s1, positive=True)
        rows.append(np.repeat(fverts, 2))
        cols.append(np.tile(fverts, 2))
        vals.append(block.ravel())
        if inflow_data is not None:
            if g is not None:
                g0, g1 = g[fverts[0]], g[fverts[1]]
            else:
                g0 = inflow_data(mesh.vertices[fverts[0]])
                g1 = inflow_data(mesh.vertices[fverts[1]])
            r = area[f] * _edge_signed_part_rhs(s0, s1, g0, g1, positive=False)
            rhs[fverts] -= r
    if rows:
        mat = _triplets_to_matrix(mesh.n_vertices, rows, cols, vals)
    else:
        mat = SparseMatrix(mesh.n_vertices, mesh.n_vertices, [], [], [])
    return mat, rhs


# ---------------------------------------------------------------------------
# lumped products, vertex normals, boundary conditions
# ---------------------------------------------------------------------------

def lumped_inner(space: P1Space, u, v) -> float:
    """Mass-lumped inner product sum_p w_p u(p) . v(p)."""
    uv, vv = _values(u), _values(v)
    if uv.shape != vv.shape:
        raise DimensionMismatch("lumped_inner operands differ in shape")
    w = lumped_weights(space.mesh)
    prod = uv * vv
    if prod.ndim == 2:
        prod = prod.sum(axis=1)
    return float(w @ prod)


def vertex_normal(mesh: SimplicialMesh) -> np.ndarray:
    """Area-weighted average of incident element normals, unit length."""
    n_T = mesh.element_normals()
    meas = mesh.cell_measures()
    acc = np.zeros((mesh.n_vertices, mesh.dim_ambient))
    m1 = mesh.dim_manifold + 1
    contrib = np.repeat(n_T * meas[:, None], m1, axis=0)
    np.add.at(acc, mesh.cells.ravel(), contrib)
    norms = np.linalg.norm(acc, axis=1)
    if np.any(norms < 1e-12 * max(meas.max(), 1e-300)):
        raise ZeroNormal("incident element normals cancel at a vertex")
    return acc / norms[:, None]


def apply_dirichlet(matrix, rhs, dofs, values):
    """Row/column elimination with symmetric rhs correction.

    Returns (csr_matrix, rhs) with unit diagonal rows at constrained dofs.
    """
    csr = matrix.scipy() if isinstance(matrix, SparseMatrix) else sp.csr_matrix(matrix)
    rhs = np.array(rhs, dtype=float, copy=True)
    dofs = np.asarray(dofs, dtype=np.int64)
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    rhs -= csr[:, dofs] @ values
    mask = np.zeros(csr.shape[0], dtype=bool)
    mask[dofs] = True
    keep = sp.diags((~mask).astype(float))
    cleaned = keep @ csr @ keep + sp.diags(mask.astype(float))
    rhs[dofs] = values
    return cleaned.tocsr(), rhs
