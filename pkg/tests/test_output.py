"""Deterministic artifacts: CSV, VTK, mesh readers, EOC tables."""

import json
import os

import numpy as np
import pytest

from mbfem import output
from mbfem.errors import InsufficientLevels, IoError
from mbfem.geometry import icosphere
from mbfem.output import (RunManifest, eoc_table, load_mesh, read_msh,
                          read_off, read_vtk, write_csv, write_manifest,
                          write_vtk)


@pytest.fixture(scope="module")
def sphere():
    return icosphere(1.0, 2)


def test_csv_roundtrip_determinism(tmp_path):
    cols = {"t": [0.0, 0.1], "value": [1.0 / 3.0, 2.0 / 7.0]}
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(p1, cols)
    write_csv(p2, cols)
    assert p1.read_bytes() == p2.read_bytes()
    lines = p1.read_text().strip().split("\n")
    assert lines[0] == "t,value"
    # 17 significant digits: parsing back is exact
    assert float(lines[1].split(",")[1]) == 1.0 / 3.0


def test_csv_rejects_ragged_columns(tmp_path):
    with pytest.raises(IoError):
        write_csv(tmp_path / "bad.csv", {"a": [1.0], "b": [1.0, 2.0]})


def test_manifest_json(tmp_path):
    path = tmp_path / "manifest.json"
    write_manifest(path, RunManifest({"scenario": "x"}, "0.1.0",
                                     ["series.csv"], "completed"))
    data = json.loads(path.read_text())
    assert data["termination"] == "completed"
    assert data["config"] == {"scenario": "x"}


def test_vtk_roundtrip_bit_exact(tmp_path, sphere):
    rng = np.random.default_rng(0)
    scal = rng.standard_normal(sphere.n_vertices)
    vec = rng.standard_normal((sphere.n_vertices, 3))
    path = tmp_path / "m.vtk"
    write_vtk(sphere, {"s": scal, "v": vec}, path)
    verts, cells, fields = read_vtk(path)
    assert np.array_equal(verts, sphere.vertices)
    assert np.array_equal(cells, sphere.cells)
    assert np.array_equal(fields["s"], scal)
    assert np.array_equal(fields["v"], vec)


def test_vtk_writer_is_deterministic(tmp_path, sphere):
    a, b = tmp_path / "a.vtk", tmp_path / "b.vtk"
    f = {"r": np.linalg.norm(sphere.vertices, axis=1)}
    write_vtk(sphere, f, a)
    write_vtk(sphere, f, b)
    assert a.read_bytes() == b.read_bytes()


def test_vtk_rejects_bad_field_shape(tmp_path, sphere):
    with pytest.raises(IoError):
        write_vtk(sphere, {"bad": np.zeros(3)}, tmp_path / "x.vtk")


def test_off_reader(tmp_path, sphere):
    path = tmp_path / "m.off"
    lines = [f"OFF", f"{sphere.n_vertices} {sphere.n_cells} 0"]
    lines += [" ".join(output.fmt(c) for c in p) for p in sphere.vertices]
    lines += ["3 " + " ".join(map(str, c)) for c in sphere.cells]
    path.write_text("\n".join(lines) + "\n")
    mesh = read_off(path)
    assert np.array_equal(mesh.vertices, sphere.vertices)
    assert np.array_equal(mesh.cells, sphere.cells)


def test_msh_reader_with_sparse_node_ids(tmp_path, sphere):
    path = tmp_path / "m.msh"
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat",
             "$Nodes", str(sphere.n_vertices)]
    # non-contiguous node numbering must be remapped
    lines += [f"{k + 10} " + " ".join(output.fmt(c) for c in p)
              for k, p in enumerate(sphere.vertices)]
    lines += ["$EndNodes", "$Elements", str(sphere.n_cells + 1)]
    lines.append("1 15 2 0 1 10")          # a point element, skipped
    lines += [f"{k + 2} 2 2 0 1 " + " ".join(str(i + 10) for i in c)
              for k, c in enumerate(sphere.cells)]
    lines += ["$EndElements"]
    path.write_text("\n".join(lines) + "\n")
    mesh = read_msh(path)
    assert np.array_equal(mesh.vertices, sphere.vertices)
    assert np.array_equal(mesh.cells, sphere.cells)


def test_load_mesh_dispatch(tmp_path, sphere):
    path = tmp_path / "m.vtk"
    write_vtk(sphere, {}, path)
    mesh = load_mesh(path)
    assert mesh.n_vertices == sphere.n_vertices
    with pytest.raises(IoError):
        load_mesh(tmp_path / "m.xyz")


def test_eoc_table_exact_orders():
    rows = eoc_table([(0.1, 1e-2), (0.05, 2.5e-3)])
    assert rows[0]["order"] is None
    assert rows[1]["order"] == pytest.approx(2.0, abs=1e-12)
    rows = eoc_table([(0.1, 1e-2), (0.05, 5e-3)])
    assert rows[1]["order"] == pytest.approx(1.0, abs=1e-12)


def test_eoc_table_reports_per_pair_orders():
    rows = eoc_table([(0.2, 0.1), (0.1, 0.03), (0.05, 0.012)])
    assert len(rows) == 3
    assert rows[1]["order"] == pytest.approx(np.log(0.1 / 0.03) / np.log(2))
    assert rows[2]["order"] == pytest.approx(np.log(0.03 / 0.012) / np.log(2))


def test_eoc_table_requires_two_positive_levels():
    with pytest.raises(InsufficientLevels):
        eoc_table([(0.1, 1e-2)])
    with pytest.raises(InsufficientLevels):
        eoc_table([(0.1, 1e-2), (0.05, 0.0)])
