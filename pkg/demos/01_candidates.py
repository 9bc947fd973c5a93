"""Walk through candidate generation for a single object.

Builds a cylinder, rests it on the table, and shows how the rotation grid
turns the initial top-down gripper pose into a filtered candidate list.
Run: python demos/01_candidates.py
"""
import numpy as np

from graspsim.candidates import AxisRange, RotationGrid, build_candidate_db, candidate_pose
from graspsim.mesh import cylinder_mesh, mass_properties
from graspsim.scene import SceneConfig, initial_gripper_pose, resting_pose
from graspsim.transforms import euler_xyz

np.set_printoptions(precision=4, suppress=True)

# Euler angles compose as X then Y then Z about the moving axes
R = euler_xyz(*np.radians([90, 0, 90]))
print("R_X(90) R_Y(0) R_Z(90) =\n", R)

mesh = cylinder_mesh(0.03, 0.12, 24, name="can")
mp = mass_properties(mesh, 0.2)
print(f"volume {mp.volume:.3e} m^3, COM {mp.center_of_mass}, Izz {mp.inertia[2, 2]:.3e}")

scene = SceneConfig()
pose = resting_pose(mesh, scene)
base = initial_gripper_pose(pose)
print("object origin in the world:", pose.world_to_object.translation)
print("initial gripper, object frame:", base.translation)

# The full default grid has 8 z-rotations on both sides
grid = RotationGrid()
print("global triples:", len(grid.global_triples()), " local triples:", len(grid.local_triples()),
      " total:", len(grid.global_triples()) * len(grid.local_triples()))

# one candidate by hand: tilt the approach 30 degrees about x, spin 90 about the palm axis
q = candidate_pose(base, (30, 0, 0), (0, 0, 90))
print("candidate gripper position (object frame):", q.translation)

# a coarser grid keeps the demo quick
coarse = RotationGrid(AxisRange(0, 180, 45), AxisRange(0, 360, 90), AxisRange(0, 360, 90),
                      AxisRange(0, 180, 45), AxisRange(0, 360, 90), AxisRange(0, 360, 90))
db = build_candidate_db(pose, base, coarse, scene, cap=200, seed=0, object_name="can")
print("candidate filter:", db.stats)
heights = [pose.world_to_object.apply(c.object_to_gripper.translation)[2] for c in db]
print(f"{len(db)} kept, lowest gripper at z = {min(heights):.3f} m (table at {scene.table_height})")
