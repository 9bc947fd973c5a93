import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

from graspsim.mesh import (EmptyMeshError, NotWatertightError, ObjParseError, TriMesh, bounding_box,
                           box_mesh, cylinder_mesh, icosphere, is_watertight, mass_properties,
                           parse_obj, wedge_mesh, write_obj)
from graspsim.transforms import Transform
from oracles import (monte_carlo_volume_convex, obj_counts, random_rotation, voxel_com_boxes,
                     watertight_by_edge_count)

CUBE_OBJ = """# unit cube, 8 vertices, 12 triangles
v -0.5 -0.5 -0.5
v -0.5 -0.5 0.5
v -0.5 0.5 -0.5
v -0.5 0.5 0.5
v 0.5 -0.5 -0.5
v 0.5 -0.5 0.5
v 0.5 0.5 -0.5
v 0.5 0.5 0.5
f 1 2 4
f 1 4 3
f 5 7 8
f 5 8 6
f 1 5 6
f 1 6 2
f 3 4 8
f 3 8 7
f 1 3 7
f 1 7 5
f 2 6 8
f 2 8 4
"""


def l_prism(scale=0.1):
    """Extruded L: the union of boxes [0,2]x[0,1]x[0,1] and [0,1]x[1,3]x[0,1] (times scale)."""
    poly = np.array([[0, 0], [2, 0], [2, 1], [1, 1], [1, 3], [0, 3]], dtype=float)
    caps = [(0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 5)]
    V = np.vstack([np.c_[poly, np.zeros(6)], np.c_[poly, np.ones(6)]]) * scale
    F = [(c, b, a) for a, b, c in caps] + [(a + 6, b + 6, c + 6) for a, b, c in caps]
    for i in range(6):
        j = (i + 1) % 6
        F += [(i, j, j + 6), (i, j + 6, i + 6)]
    boxes = [((0, 0, 0), (2 * scale, scale, scale)), ((0, scale, 0), (scale, 3 * scale, scale))]
    return TriMesh(V, F, name="L"), boxes


def test_parse_cube_counts():
    m = parse_obj(CUBE_OBJ)
    assert len(m.vertices) == 8 and len(m.triangles) == 12


def test_quad_is_fan_split():
    m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    assert m.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_polygon_with_slashes_and_negative_indices():
    text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv -1 0.5 0\nvn 0 0 1\nf -5/1/1 -4//1 -3 -2 -1\n"
    m = parse_obj(text)
    assert len(m.triangles) == 3
    assert m.triangles[0].tolist() == [0, 1, 2]


@pytest.mark.parametrize("builder", [lambda: box_mesh((0.1, 0.2, 0.3)), lambda: cylinder_mesh(0.03, 0.1, 17),
                                     lambda: wedge_mesh(), lambda: icosphere(0.5, 2), lambda: l_prism()[0]])
def test_counts_match_naive_parser(builder):
    text = write_obj(builder())
    nv, nt = obj_counts(text)
    m = parse_obj(text)
    assert (len(m.vertices), len(m.triangles)) == (nv, nt)


def test_malformed_record_reports_line():
    with pytest.raises(ObjParseError) as exc:
        parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 x 0\nf 1 2 3\n")
    assert exc.value.line == 4
    with pytest.raises(ObjParseError, match="line 2"):
        parse_obj("v 0 0 0\nf 1 2 9\n")


def test_no_faces_is_empty_mesh_error():
    with pytest.raises(EmptyMeshError):
        parse_obj("v 0 0 0\nv 1 0 0\n")


def test_degenerate_faces_dropped_with_warning(caplog):
    text = CUBE_OBJ + "f 1 1 2\n"
    with caplog.at_level(logging.WARNING):
        m = parse_obj(text)
    assert len(m.triangles) == 12 and m.dropped_faces == 1
    assert "degenerate" in caplog.text


def test_roundtrip_write_parse():
    for m in [icosphere(0.3, 1), cylinder_mesh(0.02, 0.05, 9), l_prism()[0]]:
        back = parse_obj(write_obj(m))
        assert np.array_equal(back.vertices, m.vertices)
        assert np.array_equal(back.triangles, m.triangles)


def test_watertight_cube_and_open_cube():
    m = parse_obj(CUBE_OBJ)
    assert is_watertight(m)
    opened = TriMesh(m.vertices, m.triangles[:-2])
    assert not is_watertight(opened)


def test_watertight_matches_edge_count_oracle():
    rng = np.random.default_rng(0)
    meshes = [box_mesh(), cylinder_mesh(1, 1, 11), wedge_mesh(), icosphere(1, 2), l_prism()[0]]
    for m in list(meshes):
        for _ in range(5):
            F = m.triangles.copy()
            k = rng.integers(len(F))
            choice = rng.integers(3)
            if choice == 0:
                F = np.delete(F, k, axis=0)
            elif choice == 1:
                F[k] = F[k][::-1]
            else:
                F = np.vstack([F, F[k]])
            meshes.append(TriMesh(m.vertices, F))
    for m in meshes:
        assert is_watertight(m) == watertight_by_edge_count(m.triangles)


def test_unit_cube_mass_properties():
    mp = mass_properties(parse_obj(CUBE_OBJ), 1.0)
    assert mp.volume == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(mp.center_of_mass, 0, atol=1e-15)
    assert np.array_equal(mp.inertia, np.eye(3) / 6)
    assert mp.mass == 1.0


def test_cuboid_inertia_formula():
    a, b, c = 0.1, 0.2, 0.3
    mp = mass_properties(box_mesh((a, b, c), center=(1, 2, 3)), 2.0)
    expected = 2.0 / 12 * np.diag([b * b + c * c, a * a + c * c, a * a + b * b])
    assert np.allclose(mp.inertia, expected, atol=1e-14)
    assert np.allclose(mp.center_of_mass, (1, 2, 3), atol=1e-14)


def test_icosphere_volume_vs_monte_carlo():
    m = icosphere(0.5, 3)
    mp = mass_properties(m)
    mc = monte_carlo_volume_convex(m.vertices, 1_000_000, seed=1)
    assert abs(mp.volume - mc) / mc < 0.01


def test_l_shape_com_vs_voxels():
    m, boxes = l_prism(0.1)
    assert is_watertight(m)
    com = mass_properties(m).center_of_mass
    assert np.linalg.norm(com - voxel_com_boxes(boxes, 128)) < 1e-3


def test_inverted_winding_is_flipped_once():
    m = box_mesh((0.1, 0.2, 0.3)).flipped()
    mp = mass_properties(m)
    assert mp.flipped_winding
    assert mp.volume == pytest.approx(0.006)


def test_non_watertight_rejected():
    m = box_mesh()
    with pytest.raises(NotWatertightError):
        mass_properties(TriMesh(m.vertices, m.triangles[1:]))


def test_bounding_boxes():
    bb = bounding_box(parse_obj(CUBE_OBJ))
    assert bb.min.tolist() == [-0.5] * 3 and bb.max.tolist() == [0.5] * 3
    tri = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    bb = bounding_box(tri)
    assert bb.min.tolist() == [0, 0, 0] and bb.max.tolist() == [1, 1, 0]


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3))
def test_bounding_box_translation_equivariant(t):
    m = cylinder_mesh(0.3, 0.7, 12)
    a, b = bounding_box(m), bounding_box(m.translated(t))
    assert np.allclose(b.min, a.min + t) and np.allclose(b.max, a.max + t)


@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=3, max_size=3))
def test_com_translation_equivariant(t):
    m = l_prism(0.1)[0]
    a, b = mass_properties(m), mass_properties(m.translated(t))
    assert np.allclose(b.center_of_mass, a.center_of_mass + t, atol=1e-9, rtol=0)


@given(st.integers(0, 2**32 - 1))
def test_inertia_rotation_covariant_and_volume_invariant(seed):
    rng = np.random.default_rng(seed)
    R = random_rotation(rng)
    m = l_prism(0.1)[0]
    a = mass_properties(m)
    b = mass_properties(m.transformed(Transform(R, rng.normal(size=3))))
    assert np.allclose(b.inertia, R @ a.inertia @ R.T, atol=1e-9, rtol=0)
    assert b.volume == pytest.approx(a.volume, rel=1e-9)


@pytest.mark.parametrize("m", [icosphere(0.2, 2), wedge_mesh(), l_prism()[0], cylinder_mesh(0.1, 0.4)])
def test_inertia_psd_and_triangle_inequality(m):
    I = mass_properties(m).inertia
    assert np.allclose(I, I.T, atol=1e-15)
    assert np.linalg.eigvalsh(I).min() >= -1e-15
    d = np.diag(I)
    for k in range(3):
        assert d[k] <= d[(k + 1) % 3] + d[(k + 2) % 3] + 1e-15


@pytest.mark.parametrize("m", [box_mesh(), cylinder_mesh(1, 2, 20), wedge_mesh(), icosphere(1, 1)])
def test_primitives_are_closed_and_outward(m):
    assert is_watertight(m)
    mp = mass_properties(m)
    assert mp.volume > 0 and not mp.flipped_winding
