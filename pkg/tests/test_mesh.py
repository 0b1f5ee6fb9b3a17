import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from mpmath import mp, mpf

from ltsdg.mesh import (DegenerateGeometryError, Mesh1D, MeshError, MeshFormatError,
                        build_graded_mesh_1d, graded_step, incircle_radius, load_mesh_2d,
                        make_mesh_2d, rectangle_mesh, unit_square_mesh, write_mesh_2d)


def test_graded_eto_mesh_step_matches_series():
    m = build_graded_mesh_1d(20.0, 100.0, 1.05, 100)
    mp.dps = 40
    h = mpf(20) * mpf("0.05") / (mpf("1.05") ** 100 - 1)
    assert m.sizes[0] == pytest.approx(float(h), rel=1e-12)
    assert abs(m.sizes[:100].sum() - 20.0) < 1e-12
    assert m.nodes[100] == 20.0
    assert m.nodes[-1] >= 100.0
    assert m.sizes[0] == pytest.approx(7.663e-3, rel=1e-3)


def test_graded_hand_example():
    m = build_graded_mesh_1d(1.0, 3.0, 2.0, 2)
    assert m.n_elements == 5
    np.testing.assert_allclose(m.sizes, [1 / 3, 2 / 3, 2 / 3, 2 / 3, 2 / 3], rtol=1e-12)


def test_graded_uniform_limit():
    m = build_graded_mesh_1d(1.0, 2.0, 1 + 1e-12, 4)
    assert m.n_elements == 8
    np.testing.assert_allclose(m.sizes, 0.25, rtol=1e-9)


@pytest.mark.parametrize("args", [(0.0, 1.0, 1.1, 2), (1.0, 0.5, 1.1, 2), (1.0, 2.0, 1.0, 2),
                                  (1.0, 2.0, 1.1, 0), (float("nan"), 2.0, 1.1, 2),
                                  (1.0, float("inf"), 1.1, 2), (-1.0, 2.0, 1.1, 2)])
def test_graded_rejects_bad_parameters(args):
    with pytest.raises(MeshError):
        build_graded_mesh_1d(*args)


@settings(max_examples=40, deadline=None)
@given(delta=st.floats(0.1, 50), factor=st.floats(1.5, 6), q=st.floats(1.01, 1.6), r=st.integers(1, 60))
def test_graded_mesh_properties(delta, factor, q, r):
    m = build_graded_mesh_1d(delta, delta * factor, q, r)
    h = m.sizes
    assert m.nodes[0] == 0.0
    assert np.all(h > 0)
    assert abs(h[:r].sum() - delta) <= 1e-12 * delta * r
    if r > 2:
        np.testing.assert_allclose(h[1:r - 1] / h[:r - 2], q, rtol=1e-12)
    np.testing.assert_allclose(h[r:], h[r - 1], rtol=1e-12)
    assert m.nodes[-1] >= delta * factor * (1 - 1e-12)
    assert graded_step(delta, q, r) == pytest.approx(h[0], rel=1e-12)


def test_mesh1d_validation():
    with pytest.raises(MeshError):
        Mesh1D(np.array([0.0, 1.0, 1.0]), 1)
    with pytest.raises(MeshError):
        Mesh1D(np.array([0.0, 1.0]), -1)
    with pytest.raises(MeshError):
        Mesh1D(np.array([0.0, 1.0]), 1, left_tag="moon")


def test_incircle_examples():
    assert incircle_radius([[0, 0], [1, 0], [0, 1]]) == pytest.approx(0.5 / ((2 + math.sqrt(2)) / 2), abs=1e-14)
    assert incircle_radius([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]]) == pytest.approx(1 / (2 * math.sqrt(3)),
                                                                                        abs=1e-14)
    with pytest.raises(DegenerateGeometryError):
        incircle_radius([[0, 0], [1, 1], [2, 2]])


@settings(max_examples=60, deadline=None)
@given(pts=st.lists(st.floats(-1, 1), min_size=6, max_size=6), angle=st.floats(0, 2 * math.pi),
       shift=st.tuples(st.floats(-5, 5), st.floats(-5, 5)), scale=st.floats(0.1, 10))
def test_incircle_rigid_motion_and_scaling(pts, angle, shift, scale):
    p = np.array(pts).reshape(3, 2)
    d1, d2 = p[1] - p[0], p[2] - p[0]
    area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    if area < 1e-3:
        return
    r0 = incircle_radius(p)
    c, s = math.cos(angle), math.sin(angle)
    q = p @ np.array([[c, -s], [s, c]]).T + np.array(shift)
    assert incircle_radius(q) == pytest.approx(r0, abs=1e-12)
    assert incircle_radius(scale * p) == pytest.approx(scale * r0, rel=1e-12)


def _write(tmp_path, text):
    p = tmp_path / "m.mesh"
    p.write_text(text)
    return p


TWO_TRI = """MESH2D 4 2 4
0 0
1 0
1 1
0 1
0 1 2
0 2 3
0 1 wall
1 2 outflow
2 3 wall
3 0 inflow
"""


def test_load_two_triangle_square(tmp_path):
    m = load_mesh_2d(_write(tmp_path, TWO_TRI))
    assert m.n_vertices == 4 and m.n_elements == 2
    assert len(m.interior_edges) == 1 and len(m.boundary_edges) == 4
    assert np.all(m.inradius > 0)
    assert m.areas.sum() == pytest.approx(1.0)


def test_load_reports_line_numbers(tmp_path):
    bad = TWO_TRI.replace("0 2 3\n", "0 2 9\n")
    with pytest.raises(MeshFormatError, match=":7:"):
        load_mesh_2d(_write(tmp_path, bad))
    with pytest.raises(MeshFormatError, match=":3:"):
        load_mesh_2d(_write(tmp_path, TWO_TRI.replace("1 0\n", "1 zero\n", 1)))
    with pytest.raises(MeshFormatError, match="unknown boundary tag"):
        load_mesh_2d(_write(tmp_path, TWO_TRI.replace("2 3 wall", "2 3 lid")))
    with pytest.raises(MeshFormatError, match="MESH2D"):
        load_mesh_2d(_write(tmp_path, "MESH 1 2 3\n"))
    with pytest.raises(MeshFormatError):
        load_mesh_2d(_write(tmp_path, TWO_TRI.replace("MESH2D 4 2 4", "MESH2D 4 2 5")))


def test_non_manifold_edge_rejected():
    v = [[0, 0], [1, 0], [0, 1], [0, -1], [1, 1]]
    t = [[0, 1, 2], [0, 1, 3], [0, 1, 4]]
    with pytest.raises(MeshError, match="non-manifold"):
        make_mesh_2d(v, t, {})


def test_untagged_boundary_rejected():
    with pytest.raises(MeshError, match="carry no tag"):
        make_mesh_2d([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], {frozenset((0, 1)): "wall"})


def test_orientation_and_area_invariant():
    xs = np.array([0, 0.3, 0.45, 1.0])
    ys = np.array([0, 0.2, 1.0])
    m = rectangle_mesh(xs, ys, {"left": "inflow", "right": "outflow"})
    p = m.vertices[m.triangles]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    assert np.all(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] > 0)
    assert m.areas.sum() == pytest.approx(m.boundary_polygon_area(), rel=1e-10)
    counts = np.bincount(m.edge_elements[m.interior_edges].ravel(), minlength=m.n_elements)
    assert counts.max() <= 3


def test_write_load_round_trip(tmp_path):
    m = unit_square_mesh(3, tags={"left": "inflow"})
    path = tmp_path / "sq.mesh"
    write_mesh_2d(m, path)
    m2 = load_mesh_2d(path)
    np.testing.assert_array_equal(m.triangles, m2.triangles)
    np.testing.assert_allclose(m.vertices, m2.vertices)
    assert sorted(t for t in m.edge_tags if t) == sorted(t for t in m2.edge_tags if t)
