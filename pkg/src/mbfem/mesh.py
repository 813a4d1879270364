"""Simplicial meshes of dimension m embedded in R^d, their connectivity and geometry.

Surfaces are triangle meshes with m = d - 1 (typically in R^3); bulk meshes
have m = d (triangles in R^2 or tetrahedra in R^3). A mesh carries both its
current vertex positions and the reference positions it was generated with,
sharing a single connectivity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CellInversion,
    DegenerateCell,
    DegenerateFacet,
    DimensionMismatch,
    InconsistentOrientation,
    NonManifold,
)

DEGENERATE_REL_MEASURE = 1e-14


@dataclass
class MeshQualityReport:
    h_max: float
    min_angle: float  # degrees
    max_aspect_ratio: float
    min_cell_measure: float


class SimplicialMesh:
    """A simplicial mesh with facet adjacency and boundary classification.

    Use :func:`build_connectivity` to construct one; the constructor assumes
    connectivity arrays are already consistent.
    """

    def __init__(self, vertices, cells, facets, facet_cells, facet_local,
                 boundary_vertex_flags, reference_vertices=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        self.facets = np.ascontiguousarray(facets, dtype=np.int64)
        # facet_cells[f] = (T+, T-) with T- == -1 on the boundary
        self.facet_cells = np.ascontiguousarray(facet_cells, dtype=np.int64)
        # facet_local[f] = (local facet index in T+, local facet index in T- or -1)
        self.facet_local = np.ascontiguousarray(facet_local, dtype=np.int64)
        self.boundary_vertex_flags = np.asarray(boundary_vertex_flags, dtype=bool)
        if reference_vertices is None:
            reference_vertices = self.vertices.copy()
        self.reference_vertices = np.ascontiguousarray(reference_vertices, dtype=np.float64)
        if self.reference_vertices.shape != self.vertices.shape:
            raise DimensionMismatch("reference and current vertex arrays differ in shape")
        self._geom_cache = {}

    # --- basic shape info -------------------------------------------------

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_cells(self):
        return self.cells.shape[0]

    @property
    def dim_ambient(self):
        return self.vertices.shape[1]

    @property
    def dim_manifold(self):
        return self.cells.shape[1] - 1

    @property
    def is_surface(self):
        return self.dim_manifold == self.dim_ambient - 1

    @property
    def boundary_facet_flags(self):
        return self.facet_cells[:, 1] < 0

    @property
    def interior_facets(self):
        return np.nonzero(~self.boundary_facet_flags)[0]

    @property
    def boundary_facets(self):
        return np.nonzero(self.boundary_facet_flags)[0]

    def copy(self):
        m = SimplicialMesh(
            self.vertices.copy(), self.cells, self.facets, self.facet_cells,
            self.facet_local, self.boundary_vertex_flags,
            reference_vertices=self.reference_vertices.copy(),
        )
        return m

    def invalidate_geometry(self):
        self._geom_cache = {}

    def _cached(self, key, fn):
        if key not in self._geom_cache:
            self._geom_cache[key] = fn()
        return self._geom_cache[key]

    # --- per-cell geometry --------------------------------------------------

    def cell_edges(self):
        """Edge matrices E_T = [p1-p0, ..., pm-p0], shape (n_cells, d, m)."""
        def compute():
            p = self.vertices[self.cells]  # (M, m+1, d)
            return np.transpose(p[:, 1:, :] - p[:, :1, :], (0, 2, 1))
        return self._cached("edges", compute)

    def cell_measures(self):
        def compute():
            E = self.cell_edges()
            m = self.dim_manifold
            if m == self.dim_ambient:
                det = np.linalg.det(E)
                fact = 2.0 if m == 2 else 6.0
                return det / fact  # signed; positive for consistent orientation
            # surface triangle in R^3
            c = np.cross(E[:, :, 0], E[:, :, 1])
            return 0.5 * np.linalg.norm(c, axis=1)
        return self._cached("measures", compute)

    def cell_diameters(self):
        def compute():
            p = self.vertices[self.cells]
            m1 = self.cells.shape[1]
            d = np.zeros(self.n_cells)
            for i in range(m1):
                for j in range(i + 1, m1):
                    d = np.maximum(d, np.linalg.norm(p[:, i] - p[:, j], axis=1))
            return d
        return self._cached("diameters", compute)

    def element_normals(self):
        """Unit normals per cell for surfaces; zero vectors for bulk meshes."""
        def compute():
            if not self.is_surface:
                return np.zeros((self.n_cells, self.dim_ambient))
            E = self.cell_edges()
            c = np.cross(E[:, :, 0], E[:, :, 1])
            nrm = np.linalg.norm(c, axis=1)
            if np.any(nrm <= 0):
                raise DegenerateCell("zero-area surface cell")
            return c / nrm[:, None]
        return self._cached("normals", compute)

    def basis_gradients(self):
        """Tangential gradients of the m+1 local P1 basis functions.

        Shape (n_cells, m+1, d). Gradients sum to zero and, for surfaces, are
        orthogonal to the element normal.
        """
        def compute():
            E = self.cell_edges()  # (M, d, m)
            m = self.dim_manifold
            if m == self.dim_ambient:
                G = np.linalg.inv(E)  # grad lambda_k = row k of E^{-1}
            else:
                # G = E (E^T E)^{-1}: columns are grads of lambda_1..lambda_m
                Gram = np.einsum("cdi,cdj->cij", E, E)
                det = np.linalg.det(Gram)
                if np.any(det <= 0):
                    raise DegenerateCell("degenerate surface cell in gradient computation")
                G = np.einsum("cdi,cij->cdj", E, np.linalg.inv(Gram))
                G = np.transpose(G, (0, 2, 1))  # (M, m, d)
            g0 = -G.sum(axis=1, keepdims=True)
            return np.concatenate([g0, G], axis=1)
        return self._cached("basis_gradients", compute)

    def cell_projections(self):
        """Tangential projection matrices P_T = I - n_T (x) n_T, shape (M, d, d)."""
        def compute():
            d = self.dim_ambient
            if not self.is_surface:
                return np.broadcast_to(np.eye(d), (self.n_cells, d, d)).copy()
            n = self.element_normals()
            return np.eye(d)[None, :, :] - n[:, :, None] * n[:, None, :]
        return self._cached("projections", compute)

    # --- facet geometry -----------------------------------------------------

    def facet_sizes(self):
        def compute():
            p = self.vertices[self.facets]  # (F, m, d)
            if self.facets.shape[1] == 2:
                return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
            # triangle facets of a tet mesh: diameter
            d01 = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
            d02 = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
            d12 = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
            return np.maximum(d01, np.maximum(d02, d12))
        return self._cached("facet_sizes", compute)

    def facet_measures(self):
        def compute():
            p = self.vertices[self.facets]
            if self.facets.shape[1] == 2:
                return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
            c = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
            return 0.5 * np.linalg.norm(np.atleast_2d(c), axis=-1)
        return self._cached("facet_measures", compute)

    def facet_conormals(self):
        """Unit co-normals (n_F^+, n_F^-) per facet; the minus side is NaN on boundary.

        Each co-normal lies in its owning cell's tangent plane, is orthogonal
        to the facet, and points out of the owning cell.
        """
        def compute():
            F = self.facets.shape[0]
            d = self.dim_ambient
            out = np.full((F, 2, d), np.nan)
            fc = self.facet_cells
            facet_pts = self.vertices[self.facets]  # (F, m, d)
            facet_centroid = facet_pts.mean(axis=1)
            cell_centroid = self.vertices[self.cells].mean(axis=1)
            normals = self.element_normals() if self.is_surface else None
            for side in (0, 1):
                mask = fc[:, side] >= 0
                idx = np.nonzero(mask)[0]
                cells = fc[idx, side]
                v = facet_centroid[idx] - cell_centroid[cells]
                # orthogonalize against the facet's spanning directions
                for k in range(1, self.facets.shape[1]):
                    t = facet_pts[idx, k] - facet_pts[idx, 0]
                    t = t / np.linalg.norm(t, axis=1)[:, None]
                    v = v - (np.sum(v * t, axis=1))[:, None] * t
                if normals is not None:
                    n = normals[cells]
                    v = v - (np.sum(v * n, axis=1))[:, None] * n
                nrm = np.linalg.norm(v, axis=1)
                if np.any(nrm <= 1e-300):
                    raise DegenerateFacet("cannot orient facet co-normal")
                out[idx, side] = v / nrm[:, None]
            return out
        return self._cached("facet_conormals", compute)

    # --- integral quantities --------------------------------------------------

    def total_measure(self):
        """Total surface area (surfaces) or volume/area (bulk)."""
        return float(np.abs(self.cell_measures()).sum())

    def enclosed_volume(self):
        """Volume enclosed by a closed oriented surface (divergence theorem)."""
        if not self.is_surface or self.dim_ambient != 3:
            raise DimensionMismatch("enclosed_volume needs a surface mesh in R^3")
        p = self.vertices[self.cells]
        return float(np.abs(np.einsum("ci,ci->c", p[:, 0],
                                      np.cross(p[:, 1], p[:, 2])).sum()) / 6.0)


def build_connectivity(vertices, cells, fix_orientation=True) -> SimplicialMesh:
    """Build a mesh with facet adjacency and boundary flags from raw arrays.

    Surface meshes are checked for a coherent global orientation; if the input
    is orientable but inconsistently oriented, cells are flipped by breadth-first
    propagation (``fix_orientation=True``).
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    cells = np.asarray(cells, dtype=np.int64)
    if cells.min(initial=0) < 0 or cells.max(initial=-1) >= len(vertices):
        raise DimensionMismatch("cell index out of range")
    m1 = cells.shape[1]

    # enumerate facets: all m-subsets of each cell (opposite each local vertex)
    local_facets = [tuple(j for j in range(m1) if j != i) for i in range(m1)]
    fa = np.concatenate([cells[:, lf] for lf in local_facets], axis=0)  # (M*m1, m)
    owner_cell = np.tile(np.arange(len(cells)), m1)
    owner_local = np.repeat(np.arange(m1), len(cells))
    key = np.sort(fa, axis=1)
    uniq, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    if counts.max(initial=0) > 2:
        raise NonManifold("a facet has more than two owning cells")

    F = len(uniq)
    facet_cells = np.full((F, 2), -1, dtype=np.int64)
    facet_local = np.full((F, 2), -1, dtype=np.int64)
    order = np.argsort(inv, kind="stable")
    sorted_inv = inv[order]
    first = np.searchsorted(sorted_inv, np.arange(F), side="left")
    for f in range(F):
        k = first[f]
        facet_cells[f, 0] = owner_cell[order[k]]
        facet_local[f, 0] = owner_local[order[k]]
        if counts[f] == 2:
            facet_cells[f, 1] = owner_cell[order[k + 1]]
            facet_local[f, 1] = owner_local[order[k + 1]]

    boundary_vertex_flags = np.zeros(len(vertices), dtype=bool)
    bmask = facet_cells[:, 1] < 0
    boundary_vertex_flags[uniq[bmask].ravel()] = True

    mesh = SimplicialMesh(vertices, cells, uniq, facet_cells, facet_local,
                          boundary_vertex_flags)

    if mesh.is_surface and mesh.dim_ambient == 3:
        cells = _orient_surface(mesh, fix_orientation)
        if cells is not None:
            return build_connectivity(vertices, cells, fix_orientation=False)
    elif not mesh.is_surface:
        # flip bulk cells with negative signed measure
        meas = mesh.cell_measures()
        if np.any(meas == 0):
            raise DegenerateCell("zero-measure bulk cell")
        if np.any(meas < 0):
            cells = mesh.cells.copy()
            flip = meas < 0
            cells[flip, 0], cells[flip, 1] = cells[flip, 1], cells[flip, 0].copy()
            return build_connectivity(vertices, cells, fix_orientation=False)

    if np.any(np.abs(mesh.cell_measures()) <= 0):
        raise DegenerateCell("zero-measure cell")
    return mesh


def _orient_surface(mesh, fix):
    """Check coherent orientation of a triangle surface; return flipped cells or None.

    Two neighbors are coherently oriented when they traverse their shared edge
    in opposite directions. Orientation is propagated breadth-first; a conflict
    on a closed walk means the surface is not orientable.
    """
    import collections

    cells = mesh.cells
    edge_owners = collections.defaultdict(list)
    for c in range(len(cells)):
        a, b, cc = cells[c]
        for (u, v) in ((a, b), (b, cc), (cc, a)):
            edge_owners[(min(u, v), max(u, v))].append(c)

    def directed_edges(c):
        a, b, cc = cells[c]
        verts = (a, cc, b) if needs_flip[c] else (a, b, cc)
        return ((verts[0], verts[1]), (verts[1], verts[2]), (verts[2], verts[0]))

    needs_flip = np.zeros(len(cells), dtype=bool)
    visited = np.zeros(len(cells), dtype=bool)
    for seed in range(len(cells)):
        if visited[seed]:
            continue
        visited[seed] = True
        queue = collections.deque([seed])
        while queue:
            c = queue.popleft()
            for (u, v) in directed_edges(c):
                for other in edge_owners[(min(u, v), max(u, v))]:
                    if other == c:
                        continue
                    if not visited[other]:
                        visited[other] = True
                        # coherent means `other` traverses the edge as (v, u)
                        if (v, u) not in directed_edges(other):
                            needs_flip[other] = not needs_flip[other]
                        queue.append(other)
                    elif (v, u) not in directed_edges(other):
                        raise InconsistentOrientation(
                            "surface is not coherently orientable")
    if not needs_flip.any():
        return None
    if not fix:
        raise InconsistentOrientation("surface cells are inconsistently oriented")
    out = cells.copy()
    out[needs_flip, 1], out[needs_flip, 2] = out[needs_flip, 2], out[needs_flip, 1].copy()
    return out


def element_normal(mesh: SimplicialMesh, cell: int) -> np.ndarray:
    """Unit normal of a surface cell; the zero vector for bulk meshes."""
    if not mesh.is_surface:
        return np.zeros(mesh.dim_ambient)
    return mesh.element_normals()[cell]


def facet_conormal(mesh: SimplicialMesh, facet: int, side: int = 0) -> np.ndarray:
    """Unit co-normal of a facet as seen from owning cell T+ (side 0) or T- (side 1)."""
    if side not in (0, 1):
        raise DimensionMismatch("side must be 0 (T+) or 1 (T-)")
    if mesh.facet_cells[facet, side] < 0:
        raise DegenerateFacet("facet has no owning cell on the requested side")
    return mesh.facet_conormals()[facet, side]


def move_vertices(mesh: SimplicialMesh, displacement, in_place=False) -> SimplicialMesh:
    """Displace vertices, keeping connectivity; abort on cell inversion.

    `displacement` is flat (n_vertices * d) or shaped (n_vertices, d).
    """
    disp = np.asarray(displacement, dtype=np.float64).reshape(mesh.vertices.shape)
    old_measure = np.abs(mesh.cell_measures())
    target = mesh if in_place else mesh.copy()
    target.vertices = target.vertices + disp
    target.invalidate_geometry()
    new_measure = np.abs(target.cell_measures())
    if np.any(new_measure < DEGENERATE_REL_MEASURE * old_measure):
        raise CellInversion("a cell measure collapsed during vertex motion")
    return target


def quality(mesh: SimplicialMesh) -> MeshQualityReport:
    """Mesh-size, minimum angle, aspect ratio and smallest cell measure."""
    meas = np.abs(mesh.cell_measures())
    h_max = float(mesh.cell_diameters().max())
    if mesh.dim_manifold == 2:
        p = mesh.vertices[mesh.cells]
        angles = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            cosang = np.sum(u * v, axis=1) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
        min_angle = float(np.min(angles))
        # aspect ratio: longest edge / (2 * inradius), inradius = 2A / perimeter
        e = [np.linalg.norm(p[:, (i + 1) % 3] - p[:, i], axis=1) for i in range(3)]
        e = np.stack(e)
        longest = e.max(axis=0)
        perim = e.sum(axis=0)
        inradius = 2.0 * meas / perim
        aspect = float((longest / (2.0 * np.sqrt(3.0) * inradius)).max())
    else:
        # tetrahedra: dihedral-free proxy via edge/inradius
        diam = mesh.cell_diameters()
        # inradius = 3V / total face area
        p = mesh.vertices[mesh.cells]
        face_area = np.zeros(mesh.n_cells)
        for lf in ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)):
            q = p[:, lf, :]
            face_area += 0.5 * np.linalg.norm(
                np.cross(q[:, 1] - q[:, 0], q[:, 2] - q[:, 0]), axis=1)
        inradius = 3.0 * meas / face_area
        aspect = float((diam / (2.0 * np.sqrt(6.0) * inradius)).max())
        min_angle = float("nan")
    return MeshQualityReport(
        h_max=h_max,
        min_angle=min_angle,
        max_aspect_ratio=aspect,
        min_cell_measure=float(meas.min()),
    )
