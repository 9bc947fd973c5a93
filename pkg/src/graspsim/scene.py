"""Table frame, quasi-static object resting pose and the initial gripper pose."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import Aabb, TriMesh, bounding_box, is_watertight, NotWatertightError
from .transforms import Transform, rot_x


class PlacementError(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    table_height: float = 0.65
    table_extent: tuple = (0.6, 0.6)
    lift_target: tuple = (0.0, 0.0, 0.60)
    drop_height: float = 0.3  # recorded only; placement is quasi-static

    def __post_init__(self):
        if self.lift_target[2] <= 0:
            raise ValueError("lift target must lie above the table")
        if min(self.table_extent) <= 0:
            raise ValueError("table extent must be positive")

    @property
    def world_to_table(self) -> Transform:
        return Transform.from_translation((0.0, 0.0, self.table_height))


@dataclass(frozen=True, eq=False)
class ObjectPose:
    """Where the object sits in the world.

    ``center_offset`` is the AABB centre of the mesh as loaded; subtracting it
    gives vertex coordinates in the object frame {O}.
    """
    world_to_object: Transform
    object_aabb_in_O: Aabb
    center_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def mesh_in_object(self, mesh: TriMesh) -> TriMesh:
        return mesh.translated(-np.asarray(self.center_offset))


def resting_pose(mesh: TriMesh, scene: SceneConfig = SceneConfig()) -> ObjectPose:
    """Place the object axis-aligned on the table, centred at table (x, y) = (0, 0)."""
    if not is_watertight(mesh):
        raise NotWatertightError(f"mesh {mesh.name!r} is not watertight")
    box = bounding_box(mesh)
    half = box.half_extents
    if half[0] > scene.table_extent[0] or half[1] > scene.table_extent[1]:
        raise PlacementError(
            f"object {mesh.name!r} footprint {2 * half[:2]} exceeds the table extent")
    offset = box.center
    # Lowest vertex in {O} is at -half_z; lift it onto the table plane.
    t = np.array([0.0, 0.0, scene.table_height + half[2]])
    return ObjectPose(Transform(np.eye(3), t), Aabb(-half, half), offset)


# Gripper +Z (palm normal) must point back at the object centre, i.e. along -Z of {O}.
_FACING_DOWN = rot_x(np.pi)


def initial_gripper_pose(pose: ObjectPose) -> Transform:
    """Object-to-gripper transform on the +Z axis of {O} at ``d = |half extents|``."""
    half = pose.object_aabb_in_O.half_extents
    if np.any(half <= 0):
        raise PlacementError("object bounding box is degenerate")
    d = float(np.sqrt((half ** 2).sum()))
    return Transform(_FACING_DOWN, (0.0, 0.0, d))
