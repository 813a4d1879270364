"""Mesh generators for the shipped test geometries, plus analytic flow maps."""

from __future__ import annotations

import numpy as np

from .errors import UnsupportedGeometry
from .mesh import SimplicialMesh, build_connectivity


# ---------------------------------------------------------------------------
# flow maps
# ---------------------------------------------------------------------------

class FlowMap:
    """Prescribed motion of material points.

    ``position(t, ref_points)`` maps reference positions to time t;
    ``velocity(t, points)`` evaluates the material velocity at current
    positions. At t = 0 the map is the identity.
    """

    def __init__(self, kind, position, velocity):
        self.kind = kind
        self.position = position
        self.velocity = velocity

    @classmethod
    def none(cls):
        return cls("none", lambda t, p: np.array(p, copy=True),
                   lambda t, x: np.zeros_like(np.atleast_2d(x), dtype=float).reshape(np.shape(x)))

    @classmethod
    def linear(cls, A, B, Adot, Bdot):
        """Affine motion x(t) = A(t) p + B(t) with analytic derivatives."""
        def position(t, p):
            return np.asarray(p) @ np.asarray(A(t)).T + np.asarray(B(t))

        def velocity(t, x):
            At = np.asarray(A(t))
            ref = (np.asarray(x) - np.asarray(B(t))) @ np.linalg.inv(At).T
            return ref @ np.asarray(Adot(t)).T + np.asarray(Bdot(t))

        return cls("analytic_linear", position, velocity)

    @classmethod
    def general(cls, position, velocity):
        return cls("analytic_general", position, velocity)


def rotation_z_map():
    """Rigid rotation about the z-axis at unit angular speed."""
    def A(t):
        c, s = np.cos(t), np.sin(t)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def Adot(t):
        c, s = np.cos(t), np.sin(t)
        return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])

    zero = lambda t: np.zeros(3)
    return FlowMap.linear(A, zero, Adot, zero)


def cylinder_isometry_map():
    """Area-preserving cylinder stretch lambda(t) = 1 + 0.5 sin(pi t) with drift."""
    lam = lambda t: 1.0 + 0.5 * np.sin(np.pi * t)
    lamdot = lambda t: 0.5 * np.pi * np.cos(np.pi * t)

    def A(t):
        return np.diag([lam(t), lam(t), 1.0 / lam(t)])

    def Adot(t):
        return np.diag([lamdot(t), lamdot(t), -lamdot(t) / lam(t) ** 2])

    B = lambda t: np.array([0.2 * t, 0.1 * t, 0.0])
    Bdot = lambda t: np.array([0.2, 0.1, 0.0])
    return FlowMap.linear(A, B, Adot, Bdot)


# ---------------------------------------------------------------------------
# surface generators
# ---------------------------------------------------------------------------

def icosphere(radius=1.0, subdivisions=3) -> SimplicialMesh:
    """Subdivided icosahedron projected to the sphere of the given radius."""
    if radius <= 0 or subdivisions < 0:
        raise UnsupportedGeometry("icosphere needs radius > 0 and subdivisions >= 0")
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    for _ in range(subdivisions):
        verts, faces = _subdivide(verts, faces)
    verts = verts * (radius / np.linalg.norm(verts, axis=1))[:, None]
    faces = _orient_outward(verts, faces, center=np.zeros(3))
    return build_connectivity(verts, faces, fix_orientation=False)


def _subdivide(verts, faces):
    verts = list(map(tuple, verts))
    cache = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in cache:
            cache[key] = len(verts)
            verts.append(tuple((np.array(verts[i]) + np.array(verts[j])) / 2.0))
        return cache[key]

    out = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
    return np.array(verts, dtype=float), np.array(out, dtype=np.int64)


def _orient_outward(verts, faces, center):
    p = verts[faces]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    centroid = p.mean(axis=1) - center
    flip = np.einsum("ci,ci->c", n, centroid) < 0
    faces = faces.copy()
    faces[flip, 1], faces[flip, 2] = faces[flip, 2], faces[flip, 1].copy()
    return faces


def _ring_points(radius, z, n, offset=0.0):
    ang = offset + 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([radius * np.cos(ang), radius * np.sin(ang),
                            np.full(n, float(z))])


def _merge_strip(faces, idx_a, ang_a, idx_b, ang_b):
    """Triangulate the band between two closed rings ordered by angle.

    Advances two pointers around both rings, always connecting to the ring
    whose next vertex comes first in angle; produces len(a) + len(b) triangles
    with orientation (a, b) -> counterclockwise seen from outside when ring a
    is "below" ring b.
    """
    na, nb = len(idx_a), len(idx_b)
    ia = ib = 0
    start_b = int(np.argmin(np.mod(ang_b - ang_a[0], 2 * np.pi)))
    for step in range(na + nb):
        next_a = ang_a[(ia + 1) % na] + 2 * np.pi * ((ia + 1) // na)
        next_b = ang_b[(start_b + ib + 1) % nb] + 2 * np.pi * ((start_b + ib + 1) // nb) \
            - ang_b[start_b % nb] + ang_a[0]
        a0 = idx_a[ia % na]
        b0 = idx_b[(start_b + ib) % nb]
        if (ia < na and next_a <= next_b) or ib >= nb:
            a1 = idx_a[(ia + 1) % na]
            faces.append([a0, a1, b0])
            ia += 1
        else:
            b1 = idx_b[(start_b + ib + 1) % nb]
            faces.append([a0, b1, b0])
            ib += 1


def _fan(faces, apex, idx_ring, reverse=False):
    n = len(idx_ring)
    for i in range(n):
        a, b = idx_ring[i], idx_ring[(i + 1) % n]
        faces.append([apex, b, a] if reverse else [apex, a, b])


def hemisphere(radius=1.0, h=0.1) -> SimplicialMesh:
    """Upper half-sphere cut along the x1-x2 plane, boundary circle at z = 0."""
    if radius <= 0 or h <= 0:
        raise UnsupportedGeometry("hemisphere needs radius > 0 and h > 0")
    n_rings = max(2, int(round((np.pi / 2) * radius / h)))
    thetas = np.linspace(0.0, np.pi / 2, n_rings + 1)
    verts = [np.array([[0.0, 0.0, radius]])]
    rings = [(np.array([0]), np.array([0.0]))]
    count = 1
    for j, th in enumerate(thetas[1:], start=1):
        n = max(6, int(round(2 * np.pi * radius * np.sin(th) / h)))
        offset = (j % 2) * np.pi / n
        pts = _ring_points(radius * np.sin(th), radius * np.cos(th), n, offset)
        verts.append(pts)
        ang = np.arctan2(pts[:, 1], pts[:, 0]) % (2 * np.pi)
        order = np.argsort(ang)
        rings.append((count + order, ang[order]))
        count += n
    verts = np.vstack(verts)
    faces = []
    _fan(faces, 0, rings[1][0], reverse=True)
    for j in range(1, n_rings):
        _merge_strip(faces, rings[j + 1][0], rings[j + 1][1],
                     rings[j][0], rings[j][1])
    faces = _orient_outward(verts, np.array(faces, dtype=np.int64), np.zeros(3))
    return build_connectivity(verts, faces, fix_orientation=False)


def cylinder(radius=1.0, length=2.0, h=0.1) -> SimplicialMesh:
    """Open cylinder barrel about the z-axis, z in [-length/2, length/2]."""
    if radius <= 0 or length <= 0 or h <= 0:
        raise UnsupportedGeometry("cylinder needs positive radius, length and h")
    n_c = max(6, int(round(2 * np.pi * radius / h)))
    dz = h * np.sqrt(3.0) / 2.0
    n_z = max(1, int(round(length / dz)))
    zs = np.linspace(-length / 2, length / 2, n_z + 1)
    verts, rings, count = [], [], 0
    for j, z in enumerate(zs):
        offset = (j % 2) * np.pi / n_c
        pts = _ring_points(radius, z, n_c, offset)
        verts.append(pts)
        ang = np.arctan2(pts[:, 1], pts[:, 0]) % (2 * np.pi)
        order = np.argsort(ang)
        rings.append((count + order, ang[order]))
        count += n_c
    verts = np.vstack(verts)
    faces = []
    for j in range(n_z):
        _merge_strip(faces, rings[j][0], rings[j][1], rings[j + 1][0], rings[j + 1][1])
    faces = np.array(faces, dtype=np.int64)
    # orient outward (radial): flip where normal . radial < 0
    p = verts[faces]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    cen = p.mean(axis=1)
    radial = cen.copy()
    radial[:, 2] = 0.0
    flip = np.einsum("ci,ci->c", n, radial) < 0
    faces[flip, 1], faces[flip, 2] = faces[flip, 2], faces[flip, 1].copy()
    return build_connectivity(verts, faces, fix_orientation=False)


def torus(r_major=2.0, r_minor=1.0, h=0.2) -> SimplicialMesh:
    """Torus about the z-axis; structured parametric grid split into triangles."""
    if r_major <= r_minor or r_minor <= 0 or h <= 0:
        raise UnsupportedGeometry("torus needs r_major > r_minor > 0 and h > 0")
    n_u = max(8, int(round(2 * np.pi * np.sqrt(r_major * (r_major + r_minor)) / h)))
    n_v = max(6, int(round(2 * np.pi * r_minor / h)))
    iu, iv = np.meshgrid(np.arange(n_u), np.arange(n_v), indexing="ij")
    phi = 2 * np.pi * iu / n_u + (iv % 2) * np.pi / n_u  # stagger for quality
    psi = 2 * np.pi * iv / n_v
    x = (r_major + r_minor * np.cos(psi)) * np.cos(phi)
    y = (r_major + r_minor * np.cos(psi)) * np.sin(phi)
    z = r_minor * np.sin(psi)
    verts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])

    def vid(i, j):
        return (i % n_u) * n_v + (j % n_v)

    faces = []
    for i in range(n_u):
        for j in range(n_v):
            stag = j % 2
            if stag == 0:
                faces.append([vid(i, j), vid(i + 1, j), vid(i, j + 1)])
                faces.append([vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
            else:
                faces.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)])
                faces.append([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)])
    faces = np.array(faces, dtype=np.int64)
    # orient outward with respect to the tube center circle
    p = verts[faces]
    cen = p.mean(axis=1)
    ring = cen.copy()
    rho = np.linalg.norm(cen[:, :2], axis=1)
    ring[:, 0] *= r_major / rho
    ring[:, 1] *= r_major / rho
    ring[:, 2] = 0.0
    nvec = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = np.einsum("ci,ci->c", nvec, cen - ring) < 0
    faces[flip, 1], faces[flip, 2] = faces[flip, 2], faces[flip, 1].copy()
    return build_connectivity(verts, faces, fix_orientation=False)


def cigar(radius=1.0, half_length=3.0, h=0.25) -> SimplicialMesh:
    """Closed capsule: cylinder barrel along z capped by hemispheres.

    ``half_length`` is the total axial half-extent, caps included; it must
    exceed the radius.
    """
    if radius <= 0 or half_length <= radius or h <= 0:
        raise UnsupportedGeometry("cigar needs half_length > radius > 0 and h > 0")
    zb = half_length - radius  # barrel half-length
    verts, rings, count = [], [], 0

    def add_ring(r, z, n, offset):
        nonlocal count
        pts = _ring_points(r, z, n, offset)
        verts.append(pts)
        ang = np.arctan2(pts[:, 1], pts[:, 0]) % (2 * np.pi)
        order = np.argsort(ang)
        rings.append((count + order, ang[order]))
        count += n

    # bottom pole
    verts.append(np.array([[0.0, 0.0, -half_length]]))
    rings.append((np.array([0]), np.array([0.0])))
    count = 1
    ring_id = 0
    n_cap = max(2, int(round((np.pi / 2) * radius / h)))
    k = 0
    for th in np.linspace(0, np.pi / 2, n_cap + 1)[1:]:
        n = max(6, int(round(2 * np.pi * radius * np.sin(th) / h)))
        k += 1
        add_ring(radius * np.sin(th), -zb - radius * np.cos(th), n, (k % 2) * np.pi / n)
    dz = h * np.sqrt(3.0) / 2.0
    n_z = max(1, int(round(2 * zb / dz)))
    n_c = max(6, int(round(2 * np.pi * radius / h)))
    for z in np.linspace(-zb, zb, n_z + 1)[1:]:
        k += 1
        add_ring(radius, z, n_c, (k % 2) * np.pi / n_c)
    for th in np.linspace(np.pi / 2, 0, n_cap + 1)[1:-1]:
        n = max(6, int(round(2 * np.pi * radius * np.sin(th) / h)))
        k += 1
        add_ring(radius * np.sin(th), zb + radius * np.cos(th), n, (k % 2) * np.pi / n)
    verts.append(np.array([[0.0, 0.0, half_length]]))
    top_pole = count
    verts = np.vstack(verts)

    faces = []
    _fan(faces, 0, rings[1][0], reverse=False)
    for j in range(1, len(rings) - 1):
        _merge_strip(faces, rings[j][0], rings[j][1], rings[j + 1][0], rings[j + 1][1])
    _fan(faces, top_pole, rings[-1][0], reverse=True)
    faces = np.array(faces, dtype=np.int64)
    # outward orientation with respect to the nearest axis point
    p = verts[faces]
    cen = p.mean(axis=1)
    axis_pt = np.zeros_like(cen)
    axis_pt[:, 2] = np.clip(cen[:, 2], -zb, zb)
    nvec = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = np.einsum("ci,ci->c", nvec, cen - axis_pt) < 0
    faces[flip, 1], faces[flip, 2] = faces[flip, 2], faces[flip, 1].copy()
    return build_connectivity(verts, faces, fix_orientation=False)


# ---------------------------------------------------------------------------
# bulk generators
# ---------------------------------------------------------------------------

def rectangle(lx=1.0, ly=1.0, nx=10, ny=10) -> SimplicialMesh:
    """Structured triangle mesh of [0, lx] x [0, ly] in R^2."""
    if lx <= 0 or ly <= 0 or nx < 1 or ny < 1:
        raise UnsupportedGeometry("rectangle needs positive sizes and counts")
    xs = np.linspace(0, lx, nx + 1)
    ys = np.linspace(0, ly, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    faces = []
    for i in range(nx):
        for j in range(ny):
            if (i + j) % 2 == 0:
                faces.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)])
                faces.append([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)])
            else:
                faces.append([vid(i, j), vid(i + 1, j), vid(i, j + 1)])
                faces.append([vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    return build_connectivity(verts, np.array(faces, dtype=np.int64))


def box(lx=1.0, ly=1.0, lz=1.0, nx=4, ny=4, nz=4) -> SimplicialMesh:
    """Structured tetrahedral mesh of a box (six tets per hex cell)."""
    xs = np.linspace(0, lx, nx + 1)
    ys = np.linspace(0, ly, ny + 1)
    zs = np.linspace(0, lz, nz + 1)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    kuhn = [(0, 1, 3, 7), (0, 1, 5, 7), (0, 2, 3, 7),
            (0, 2, 6, 7), (0, 4, 5, 7), (0, 4, 6, 7)]
    cells = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                corners = [vid(i + a, j + b, k + c)
                           for a in (0, 1) for b in (0, 1) for c in (0, 1)]
                # corners index bit order: (a, b, c) -> a*4 + b*2 + c
                for tet in kuhn:
                    cells.append([corners[v] for v in tet])
    return build_connectivity(verts, np.array(cells, dtype=np.int64))


GENERATORS = {
    "icosphere": icosphere,
    "hemisphere": hemisphere,
    "cylinder": cylinder,
    "torus": torus,
    "cigar": cigar,
    "rectangle": rectangle,
    "box": box,
}


def generate(kind, **params) -> SimplicialMesh:
    """Dispatch to a named geometry generator."""
    try:
        gen = GENERATORS[kind]
    except KeyError:
        raise UnsupportedGeometry(f"unknown geometry '{kind}'") from None
    return gen(**params)
