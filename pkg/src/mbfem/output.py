"""Deterministic run artifacts: VTK, CSV, manifests, mesh readers, EOC.

All floating-point output uses 17 significant digits so files round-trip
to bit-identical doubles; identical runs produce byte-identical files.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import InsufficientLevels, IoError
from .mesh import SimplicialMesh, build_connectivity

_VTK_CELL_TYPES = {1: 3, 2: 5, 3: 10}   # manifold dim -> VTK cell type


def fmt(x) -> str:
    """Format one float with 17 significant digits (round-trip exact)."""
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# CSV and manifest
# ---------------------------------------------------------------------------

def write_csv(path, columns: dict) -> None:
    """Write named equal-length columns as deterministic CSV."""
    names = list(columns)
    rows = [list(columns[n]) for n in names]
    lengths = {len(r) for r in rows}
    if len(lengths) > 1:
        raise IoError(f"column lengths differ: { {n: len(columns[n]) for n in names} }")
    lines = [",".join(names)]
    for i in range(lengths.pop() if lengths else 0):
        cells = []
        for r in rows:
            v = r[i]
            if isinstance(v, float) or isinstance(v, np.floating):
                cells.append(fmt(v))
            elif v is None:
                cells.append("")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


@dataclass
class RunManifest:
    """Summary of one scenario run, written atomically at run end."""

    config: dict
    code_version: str
    artifacts: list = field(default_factory=list)
    termination: str = "completed"


def write_manifest(path, manifest: RunManifest) -> None:
    _atomic_write(path, json.dumps(asdict(manifest), indent=2,
                                   sort_keys=True) + "\n")


def _atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


# ---------------------------------------------------------------------------
# legacy VTK
# ---------------------------------------------------------------------------

def write_vtk(mesh: SimplicialMesh, fields: dict, path,
              title: str = "mbfem output") -> None:
    """Write mesh plus nodal fields as a legacy ASCII VTK file.

    ``fields`` maps names to (N,) scalar or (N, 3) vector arrays; values
    round-trip bit-identically through ``read_vtk``.
    """
    verts = np.asarray(mesh.vertices, dtype=float)
    if verts.shape[1] < 3:
        verts = np.column_stack([verts,
                                 np.zeros((len(verts), 3 - verts.shape[1]))])
    cells = np.asarray(mesh.cells)
    try:
        cell_type = _VTK_CELL_TYPES[cells.shape[1] - 1]
    except KeyError:
        raise IoError(f"unsupported cell arity {cells.shape[1]}") from None
    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(verts)} double"]
    lines += [" ".join(fmt(c) for c in p) for p in verts]
    m = cells.shape[1]
    lines.append(f"CELLS {len(cells)} {len(cells) * (m + 1)}")
    lines += [f"{m} " + " ".join(str(int(v)) for v in c) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(cell_type)] * len(cells)
    if fields:
        lines.append(f"POINT_DATA {len(verts)}")
        for name, values in fields.items():
            data = np.asarray(getattr(values, "values", values), dtype=float)
            if data.shape[0] != len(verts):
                raise IoError(f"field '{name}' has {data.shape[0]} values "
                              f"for {len(verts)} points")
            if data.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines += [fmt(v) for v in data]
            elif data.ndim == 2 and data.shape[1] == 3:
                lines.append(f"VECTORS {name} double")
                lines += [" ".join(fmt(c) for c in row) for row in data]
            else:
                raise IoError(f"field '{name}' must be (N,) or (N, 3), got "
                              f"shape {data.shape}")
    _atomic_write(path, "\n".join(lines) + "\n")


def read_vtk(path):
    """Read a legacy ASCII VTK file written by ``write_vtk``.

    Returns (vertices, cells, fields) as plain arrays.
    """
    try:
        with open(path) as handle:
            tokens_by_line = [line.split() for line in handle]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None
    flat = [t for line in tokens_by_line for t in line]
    pos = 0

    def expect(word):
        nonlocal pos
        while pos < len(flat) and flat[pos].upper() != word:
            pos += 1
        if pos >= len(flat):
            raise IoError(f"{path}: missing {word} section")
        pos += 1

    expect("POINTS")
    n = int(flat[pos]); pos += 2                      # skip count + dtype
    verts = np.array(flat[pos:pos + 3 * n], dtype=float).reshape(n, 3)
    pos += 3 * n
    expect("CELLS")
    m = int(flat[pos]); total = int(flat[pos + 1]); pos += 2
    raw = np.array(flat[pos:pos + total], dtype=np.int64)
    pos += total
    arity = int(raw[0])
    cells = raw.reshape(m, arity + 1)[:, 1:]
    fields: dict = {}
    while pos < len(flat):
        word = flat[pos].upper()
        if word == "SCALARS":
            name = flat[pos + 1]
            pos += 4                                   # SCALARS name type 1
            if flat[pos].upper() == "LOOKUP_TABLE":
                pos += 2
            fields[name] = np.array(flat[pos:pos + n], dtype=float)
            pos += n
        elif word == "VECTORS":
            name = flat[pos + 1]
            pos += 3
            fields[name] = np.array(flat[pos:pos + 3 * n],
                                    dtype=float).reshape(n, 3)
            pos += 3 * n
        else:
            pos += 1
    return verts, cells, fields


# ---------------------------------------------------------------------------
# mesh readers
# ---------------------------------------------------------------------------

def read_off(path) -> SimplicialMesh:
    """Read an OFF surface file into a connectivity-checked mesh."""
    try:
        with open(path) as handle:
            tokens = [t for line in handle
                      if not line.lstrip().startswith("#")
                      for t in line.split()]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None
    if not tokens or tokens[0].upper() != "OFF":
        raise IoError(f"{path}: not an OFF file")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4                                            # OFF nv nf ne
    verts = np.array(tokens[pos:pos + 3 * nv], dtype=float).reshape(nv, 3)
    pos += 3 * nv
    faces = []
    for _ in range(nf):
        arity = int(tokens[pos])
        if arity != 3:
            raise IoError(f"{path}: only triangular faces supported, "
                          f"got a {arity}-gon")
        faces.append([int(t) for t in tokens[pos + 1:pos + 4]])
        pos += arity + 1
    return build_connectivity(verts, np.array(faces, dtype=np.int64))


def read_msh(path) -> SimplicialMesh:
    """Read a Gmsh MSH 2.2 ASCII file (triangle elements) into a mesh."""
    try:
        with open(path) as handle:
            lines = [line.strip() for line in handle]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None
    try:
        ni = lines.index("$Nodes")
        n_nodes = int(lines[ni + 1])
        node_ids, coords = [], []
        for line in lines[ni + 2:ni + 2 + n_nodes]:
            parts = line.split()
            node_ids.append(int(parts[0]))
            coords.append([float(p) for p in parts[1:4]])
        ei = lines.index("$Elements")
        n_elems = int(lines[ei + 1])
        id_map = {nid: k for k, nid in enumerate(node_ids)}
        tris = []
        for line in lines[ei + 2:ei + 2 + n_elems]:
            parts = [int(p) for p in line.split()]
            etype, n_tags = parts[1], parts[2]
            if etype == 2:                             # 3-node triangle
                tris.append([id_map[p] for p in parts[3 + n_tags:6 + n_tags]])
    except (ValueError, IndexError, KeyError) as exc:
        raise IoError(f"{path}: malformed MSH 2.2 file ({exc})") from None
    if not tris:
        raise IoError(f"{path}: no triangle elements found")
    return build_connectivity(np.array(coords, dtype=float),
                              np.array(tris, dtype=np.int64))


def load_mesh(path) -> SimplicialMesh:
    """Load a mesh by file extension (.off, .msh, .vtk)."""
    ext = os.path.splitext(os.fspath(path))[1].lower()
    if ext == ".off":
        return read_off(path)
    if ext == ".msh":
        return read_msh(path)
    if ext == ".vtk":
        verts, cells, _ = read_vtk(path)
        return build_connectivity(verts, cells)
    raise IoError(f"unrecognized mesh extension '{ext}'")


# ---------------------------------------------------------------------------
# convergence tables
# ---------------------------------------------------------------------------

def eoc_table(levels) -> list:
    """Observed orders from (discretization parameter, error) pairs.

    Returns one dict per level with keys level, parameter, error, order;
    order_k = log(e_{k-1}/e_k) / log(l_{k-1}/l_k), None on the first row.
    """
    levels = [(float(l), float(e)) for l, e in levels]
    if len(levels) < 2:
        raise InsufficientLevels(
            f"need at least 2 levels for an order estimate, got {len(levels)}")
    if any(l <= 0 or e <= 0 for l, e in levels):
        raise InsufficientLevels("parameters and errors must be positive")
    rows = []
    for k, (l, e) in enumerate(levels):
        order = None
        if k:
            l0, e0 = levels[k - 1]
            order = float(np.log(e0 / e) / np.log(l0 / l))
        rows.append({"level": k, "parameter": l, "error": e, "order": order})
    return rows
