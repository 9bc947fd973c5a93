import numpy as np
import pytest
from hypothesis import given, strategies as st

from graspsim.candidates import ray_box_intersect
from graspsim.mesh import NotWatertightError, TriMesh, box_mesh, icosphere, wedge_mesh
from graspsim.scene import (ObjectPose, PlacementError, SceneConfig, initial_gripper_pose,
                            resting_pose)
from graspsim.mesh import Aabb
from graspsim.transforms import Transform
from oracles import random_rotation


def test_unit_cube_rests_half_height_above_table():
    pose = resting_pose(box_mesh())
    assert pose.world_to_object.translation.tolist() == [0, 0, 1.15]
    assert np.array_equal(pose.world_to_object.rotation, np.eye(3))


def test_sphere_rests_at_radius():
    pose = resting_pose(icosphere(0.1, 2))
    assert np.allclose(pose.world_to_object.translation, [0, 0, 0.75])


@given(st.integers(0, 2**31))
def test_lowest_vertex_touches_table(seed):
    rng = np.random.default_rng(seed)
    m = wedge_mesh((0.1, 0.05, 0.08)).transformed(Transform(random_rotation(rng), rng.normal(size=3)))
    pose = resting_pose(m)
    W = pose.world_to_object.apply(pose.mesh_in_object(m).vertices)
    assert abs(W[:, 2].min() - 0.65) < 1e-6     # exhaustive vertex scan
    assert W[:, 2].min() >= 0.65 - 1e-9
    lo, hi = W.min(axis=0), W.max(axis=0)
    assert np.allclose((lo + hi)[:2] / 2, 0, atol=1e-12)


def test_resting_pose_deterministic():
    m = wedge_mesh()
    a, b = resting_pose(m), resting_pose(m)
    assert a.world_to_object == b.world_to_object


def test_oversized_object_rejected():
    with pytest.raises(PlacementError):
        resting_pose(box_mesh((2.0, 0.1, 0.1)))


def test_open_mesh_rejected():
    m = box_mesh()
    with pytest.raises(NotWatertightError):
        resting_pose(TriMesh(m.vertices, m.triangles[:-1]))


def test_initial_gripper_distance():
    g = initial_gripper_pose(resting_pose(box_mesh()))
    assert g.translation[2] == pytest.approx(np.sqrt(0.75))
    g = initial_gripper_pose(resting_pose(box_mesh((0.2, 0.4, 0.6))))
    assert g.translation[2] == np.sqrt(0.14)
    assert g.translation[2] == pytest.approx(0.3742, abs=1e-4)


def test_initial_gripper_faces_object_and_ray_hits_box():
    for m in [box_mesh((0.1, 0.3, 0.2)), wedge_mesh(), icosphere(0.05, 1)]:
        pose = resting_pose(m)
        g = initial_gripper_pose(pose)
        assert np.allclose(g.rotation[:, 2], [0, 0, -1])
        hit, _ = ray_box_intersect(g.translation, g.rotation[:, 2], pose.object_aabb_in_O)
        assert hit


def test_degenerate_box_rejected():
    pose = ObjectPose(Transform.identity(), Aabb(np.zeros(3), np.array([1.0, 1.0, 0.0])))
    with pytest.raises(PlacementError):
        initial_gripper_pose(pose)


def test_scene_defaults():
    s = SceneConfig()
    assert s.world_to_table.translation.tolist() == [0, 0, 0.65]
    assert s.lift_target == (0.0, 0.0, 0.60)
    with pytest.raises(ValueError):
        SceneConfig(lift_target=(0, 0, -0.1))
