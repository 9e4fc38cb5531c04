import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from cornerheat import geometry as geo
from cornerheat import mesh


@pytest.mark.parametrize("d", [geo.unit_square(), geo.l_shape(), geo.equilateral_triangle()])
def test_polygon_mesh_is_conforming(d):
    m = mesh.triangulate(d, 0.1, grading=3.0)
    audit = mesh.edge_audit(m)
    assert audit["max_edge_multiplicity"] <= 2
    assert audit["boundary_matches"]
    assert audit["positively_oriented"]
    stats = mesh.mesh_statistics(m)
    assert stats["min_angle"] >= 30.0 - 1e-6
    assert stats["area"] == pytest.approx(geo.area(d), rel=1e-12)


def test_grading_refines_corners(square):
    m = mesh.triangulate(square, 0.1, grading=4.0)
    p = m.points[m.triangles]
    e = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    near = np.min(np.hypot(*(m.centroids()[:, None, :] - square.vertices[None]).transpose(2, 0, 1)), axis=1)
    assert e[near < 0.05].mean() < 0.5 * e[near > 0.4].mean()


@given(st.floats(0.1, 0.4))
@settings(max_examples=8, deadline=None)
def test_filleted_mesh_area_converges(eps):
    d = geo.FilletedPolygon(geo.unit_square(), eps)
    arc = d.tangency * math.pi / 2
    m = mesh.triangulate(d, 0.08, grading=0.08 / (arc / 10))
    # inscribed polygonal arcs lose O(h^2) area only
    assert abs(m.area - geo.area(d)) < 1e-3
    assert mesh.edge_audit(m)["boundary_matches"]


def test_coarse_fillet_rejected():
    d = geo.FilletedPolygon(geo.unit_square(), 0.05)
    with pytest.raises(mesh.MeshError):
        mesh.triangulate(d, 0.2, grading=1.0)


def test_truncated_model_tags():
    d = geo.TruncatedModelRegion(geo.model_region(math.pi / 2), 4.0)
    m = mesh.triangulate(d, 0.3, grading=10.0)
    stats = mesh.mesh_statistics(m)
    assert stats["n_artificial_edges"] > 0 and stats["n_physical_edges"] > 0
    r = np.hypot(*m.points[m.boundary_edges[m.edge_tags == mesh.TAG_ARTIFICIAL]].reshape(-1, 2).T)
    assert_allclose(r, 4.0, atol=1e-9)


def test_merge_glues_interfaces():
    size = mesh.feature_size_field(0.3, 1.0, None)
    a = mesh.mesh_loops([mesh.sector_loop(1.0, 1.0, "interface")], size, 0.3)
    b = mesh.mesh_loops([mesh.annulus_sector_loop(1.0, 1.0, 3.0)], size, 0.3)
    m = mesh.merge([a, b])
    assert not np.any(m.edge_tags == mesh.TAG_INTERFACE)
    assert m.area == pytest.approx(a.area + b.area)
    assert mesh.edge_audit(m)["boundary_matches"]


def test_transform_is_similarity(square):
    m = mesh.triangulate(square, 0.2)
    t = mesh.transform(m, 2.0, 0.3, (1.0, -1.0))
    assert t.area == pytest.approx(4 * m.area)
    assert np.all(t.triangle_areas() > 0)


def test_export_import_round_trip(tmp_path):
    m = mesh.triangulate(geo.FilletedPolygon(geo.unit_square(), 0.3), 0.15, grading=20.0)
    path = tmp_path / "m.txt"
    mesh.export_mesh(m, path)
    back = mesh.import_mesh(path)
    assert_allclose(back.points, m.points, rtol=0, atol=0)
    np.testing.assert_array_equal(back.triangles, m.triangles)
    np.testing.assert_array_equal(back.edge_tags, m.edge_tags)
    assert back.h == m.h


def test_import_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("hello\n")
    with pytest.raises(mesh.MeshError):
        mesh.import_mesh(p)


def test_fillet_example_needs_grading():
    d = geo.FilletedPolygon(geo.unit_square(), 0.4)  # fillet radius 0.1
    with pytest.raises(mesh.MeshError):
        mesh.triangulate(d, 0.05, grading=1.0)
    m = mesh.triangulate(d, 0.05, grading=4.0)
    assert mesh.edge_audit(m)["boundary_matches"]
