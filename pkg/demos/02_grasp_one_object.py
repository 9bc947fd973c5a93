"""Simulate grasps on one object and look at what comes out.

Each candidate is checked for collision, probed with the palm ray, then tried
at its own pose and three standoffs. Successful attempts carry contacts, two
camera placements and an RGB-D render.
Run: python demos/02_grasp_one_object.py
"""
from collections import Counter

import numpy as np

from graspsim.candidates import AxisRange, RotationGrid, build_candidate_db
from graspsim.grasping import closure_margin, evaluate_candidate, prepare_object
from graspsim.mesh import cylinder_mesh
from graspsim.render import Camera, decode_depth, render_object

np.set_printoptions(precision=4, suppress=True)

obj = prepare_object(cylinder_mesh(0.03, 0.12, 24, name="can"), mass=0.2)
grid = RotationGrid(AxisRange(0, 180, 45), AxisRange(0, 360, 90), AxisRange(0, 360, 90),
                    AxisRange(0, 180, 45), AxisRange(0, 360, 90), AxisRange(0, 360, 90))
db = build_candidate_db(obj.pose, obj.base, grid, cap=60, seed=1, object_name="can")

tally = Counter()
first = None
for cand in db:
    for att in evaluate_candidate(cand, obj):
        tally[att.outcome] += 1
        if att.record is not None and first is None:
            first = att
print("outcomes over", len(db), "candidates:", dict(tally))

if first is None:
    raise SystemExit("no success in this small batch; try another seed")

rec = first.record
print("\nfirst success: candidate", rec.candidate_id, "attempt", rec.attempt_index)
print("contacts (object frame):\n", rec.contacts.positions)
print("closure margin:", closure_margin(rec.contacts.positions, rec.contacts.normals,
                                        com=obj.mass.center_of_mass))
for m in ("oto", "otm"):
    g = rec.grasp(m)
    print(f"{m} grasp vector, first contact in camera frame:", g[:3])

img = render_object(obj.mesh_world, Camera(first.cameras["oto"], width=64, height=64))
depth = decode_depth(img.depth)
print(f"\nrender: mask covers {img.mask.mean():.0%} of pixels, "
      f"object depth {depth[img.mask > 0].min():.3f}..{depth[img.mask > 0].max():.3f} m")
