"""Per-candidate grasp evaluation: proximity ray, standoffs, cameras, closing, stability.

Stability is decided analytically: all three fingertips must touch the object
and the contacts must be in force closure under linearised Coulomb friction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from .candidates import GraspCandidate
from .hand import ContactSet, HandModel, close_fingers, hand_collision
from .mesh import MassProperties, TriMesh, mass_properties
from .raycast import ray_mesh
from .scene import ObjectPose, SceneConfig, initial_gripper_pose, resting_pose
from .transforms import Transform, compose, invert

STANDOFFS = (0.06, 0.09, 0.12)
CAMERA_OFFSET = 0.25
FRICTION = 0.71
OUTCOMES = ("collision", "missed_proximity", "missed_contact", "unstable", "success")
MAPPINGS = ("oto", "otm")
_DEGENERATE_ROLL_COS = np.cos(np.radians(1.0))


@dataclass(eq=False)
class PreparedObject:
    """An object ready for simulation: mesh in {O}, its world pose and mass properties."""
    name: str
    mesh: TriMesh
    pose: ObjectPose
    mass: MassProperties
    class_name: str = ""

    def __post_init__(self):
        self.mesh_world = self.mesh.transformed(self.pose.world_to_object)

    @property
    def base(self) -> Transform:
        return initial_gripper_pose(self.pose)


def prepare_object(mesh: TriMesh, scene: SceneConfig = SceneConfig(), mass: float = 1.0,
                   class_name: str = "") -> PreparedObject:
    pose = resting_pose(mesh, scene)
    mesh_O = pose.mesh_in_object(mesh)
    return PreparedObject(mesh.name, mesh_O, pose, mass_properties(mesh_O, mass), class_name)


class ProximityHit(NamedTuple):
    point: np.ndarray
    normal: np.ndarray
    distance: float


def proximity_ray(pose: Transform, mesh: TriMesh, max_range: float = 0.5) -> ProximityHit | None:
    """Nearest mesh hit along the palm normal (+Z of ``pose``) within ``max_range``."""
    direction = pose.rotation[:, 2]
    t, f = ray_mesh(mesh, pose.translation[None], direction[None], 0.0, max_range)
    if not np.isfinite(t[0]):
        return None
    point = pose.translation + t[0] * direction
    return ProximityHit(point, mesh.face_normals()[f[0]], float(t[0]))


def standoff_poses(hit, palm_normal, base_orientation, distances=STANDOFFS) -> list:
    """Gripper poses backed off from ``hit`` along the approach direction."""
    hit = np.asarray(hit, dtype=np.float64)
    a = np.asarray(palm_normal, dtype=np.float64)
    return [Transform(base_orientation, hit - d * a) for d in distances]


class CameraPlacement(NamedTuple):
    pose: Transform
    fallback: bool


def camera_pose(gripper: Transform, mapping: str, offset: float = CAMERA_OFFSET) -> CameraPlacement:
    """Camera behind the palm along the approach axis.

    Camera axes: +Z optical axis, +X image right, +Y image down. ``oto``
    copies the gripper orientation. ``otm`` keeps the optical axis but rolls
    the camera so image-up is world +Z projected onto the image plane; when
    the axis is within 1 degree of vertical the roll is undefined and the
    gripper roll is used instead (``fallback=True``).
    """
    axis = gripper.rotation[:, 2]
    origin = gripper.translation - offset * axis
    if mapping == "oto":
        return CameraPlacement(Transform(gripper.rotation, origin), False)
    if mapping != "otm":
        raise ValueError(f"unknown camera mapping {mapping!r}")
    if abs(axis[2]) > _DEGENERATE_ROLL_COS:
        return CameraPlacement(Transform(gripper.rotation, origin), True)
    up = np.array([0.0, 0.0, 1.0]) - axis[2] * axis
    up /= np.linalg.norm(up)
    y = -up
    x = np.cross(y, axis)
    return CameraPlacement(Transform(np.column_stack([x, y, axis]), origin), False)


# -- force closure --------------------------------------------------------------

def _tangents(n):
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(n, helper)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


def contact_wrenches(positions, normals, mu: float = FRICTION, facets: int = 8, com=None):
    """Edge wrenches of the linearised friction cones, ``(k * facets, 6)``.

    Normals point out of the object, so fingers push along ``-n``. Torques are
    taken about ``com`` and divided by the largest contact radius.
    """
    P = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    N = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    com = np.zeros(3) if com is None else np.asarray(com, dtype=np.float64)
    r = P - com
    rho = np.linalg.norm(r, axis=1).max() if len(P) else 1.0
    rho = rho if rho > 0 else 1.0
    phi = 2 * np.pi * np.arange(facets) / facets
    W = []
    for p, n in zip(r, N):
        n = n / np.linalg.norm(n)
        t1, t2 = _tangents(n)
        for c, s in zip(np.cos(phi), np.sin(phi)):
            f = -n + mu * (c * t1 + s * t2)
            W.append(np.concatenate([f, np.cross(p, f) / rho]))
    return np.array(W).reshape(-1, 6)


def closure_margin(positions, normals, mu: float = FRICTION, facets: int = 8, com=None) -> float:
    """Largest ``s`` such that the origin is a convex combination of the edge
    wrenches with every weight at least ``s``; ``-inf`` when the wrenches do
    not span wrench space or contacts coincide."""
    if mu <= 0:
        raise ValueError("friction coefficient must be positive")
    if facets < 4:
        raise ValueError("need at least 4 friction-cone facets")
    P = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if len(P) == 0:
        return -np.inf
    if len(P) > 1:
        d = np.linalg.norm(P[:, None] - P[None], axis=2)
        if d[np.triu_indices(len(P), 1)].min() < 1e-9:
            return -np.inf
    W = contact_wrenches(P, normals, mu, facets, com)
    if np.linalg.matrix_rank(W, tol=1e-9) < 6:
        return -np.inf
    m = len(W)
    # variables [lambda_1..lambda_m, s]; maximise s
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_eq = np.zeros((7, m + 1))
    A_eq[:6, :m] = W.T
    A_eq[6, :m] = 1.0
    b_eq = np.zeros(7)
    b_eq[6] = 1.0
    A_ub = np.hstack([-np.eye(m), np.ones((m, 1))])
    b_ub = np.zeros(m)
    bounds = [(0, None)] * m + [(None, 1.0)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        return -np.inf
    return float(res.x[-1])


def force_closure(positions, normals, mu: float = FRICTION, facets: int = 8, com=None,
                  tol: float = 1e-9) -> bool:
    """True iff the origin lies strictly inside the convex hull of the edge wrenches."""
    return closure_margin(positions, normals, mu, facets, com) > tol


# -- candidate evaluation --------------------------------------------------------

@dataclass
class SimOptions:
    max_range: float = 0.5
    standoffs: tuple = STANDOFFS
    camera_offset: float = CAMERA_OFFSET
    friction: float = FRICTION
    cone_facets: int = 8


@dataclass(eq=False)
class GraspRecord:
    object_name: str
    candidate_id: int
    attempt_index: int
    contacts: ContactSet                  # object frame
    world_to_object: Transform
    world_to_table: Transform
    world_to_gripper: Transform
    world_to_camera: dict                 # mapping -> Transform
    otm_fallback: bool = False
    success: bool = True

    @property
    def key(self):
        return (self.object_name, self.candidate_id, self.attempt_index)

    def camera_contacts(self, mapping: str) -> ContactSet:
        cam_from_obj = compose(invert(self.world_to_camera[mapping]), self.world_to_object)
        return self.contacts.transformed(cam_from_obj, "camera")

    def grasp(self, mapping: str) -> np.ndarray:
        """The 18-vector in the ``mapping`` camera frame."""
        return self.camera_contacts(mapping).vector()

    def frames(self, mapping_for_image: str | None = None) -> dict:
        """Named frames; ``work2cam``/``cam2work`` are given for both mappings."""
        inv_table = invert(self.world_to_table)
        out = {
            "frame_world2obj": self.world_to_object,
            "frame_world2work": self.world_to_table,
            "frame_work2grip": compose(inv_table, self.world_to_gripper),
        }
        for m in MAPPINGS:
            w2c = compose(inv_table, self.world_to_camera[m])
            out[f"frame_work2cam_{m}"] = w2c
            out[f"frame_cam2work_{m}"] = invert(w2c)
        return out


@dataclass(eq=False)
class GraspAttempt:
    candidate_id: int
    attempt_index: int
    outcome: str
    gripper: Transform
    cameras: dict = field(default_factory=dict)
    detail: str = ""
    record: GraspRecord | None = None

    def __post_init__(self):
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")
        if self.attempt_index not in (0, 1, 2, 3):
            raise ValueError("attempt index must be in 0..3")


def evaluate_candidate(candidate: GraspCandidate, obj: PreparedObject,
                       scene: SceneConfig = SceneConfig(), hand: HandModel = HandModel(),
                       options: SimOptions = SimOptions()) -> list:
    """Run the collection procedure for one candidate.

    Order: collision check of the candidate pose, proximity ray, then four
    attempts (the candidate pose and the three standoff poses). Each attempt
    places both cameras, closes the fingers and checks force closure.
    """
    w2o = obj.pose.world_to_object
    w2t = scene.world_to_table
    gripper = compose(w2o, candidate.object_to_gripper)
    cid = candidate.candidate_id
    mesh_w = obj.mesh_world

    reason = hand_collision(gripper, hand, mesh_w, scene.table_height, fingers_vs_mesh=False)
    if reason:
        return [GraspAttempt(cid, 0, "collision", gripper, detail=reason)]
    hit = proximity_ray(gripper, mesh_w, options.max_range)
    if hit is None:
        return [GraspAttempt(cid, 0, "missed_proximity", gripper)]

    approach = gripper.rotation[:, 2]
    poses = [gripper] + standoff_poses(hit.point, approach, gripper.rotation, options.standoffs)
    o_from_w = invert(w2o)
    attempts = []
    for k, pose in enumerate(poses):
        cams = {m: camera_pose(pose, m, options.camera_offset) for m in MAPPINGS}
        cam_poses = {m: c.pose for m, c in cams.items()}
        reason = hand_collision(pose, hand, mesh_w, scene.table_height)
        if reason:
            attempts.append(GraspAttempt(cid, k, "collision", pose, cam_poses, reason))
            continue
        contacts = close_fingers(pose, hand, mesh_w, scene.table_height)
        if not contacts.complete:
            outcome = "missed_contact" if contacts.failure == "missed_contact" else "collision"
            attempts.append(GraspAttempt(cid, k, outcome, pose, cam_poses, contacts.failure or ""))
            continue
        contacts_O = contacts.transformed(o_from_w, "object")
        stable = force_closure(contacts_O.positions, contacts_O.normals, options.friction,
                               options.cone_facets, obj.mass.center_of_mass)
        if not stable:
            attempts.append(GraspAttempt(cid, k, "unstable", pose, cam_poses))
            continue
        record = GraspRecord(obj.name, cid, k, contacts_O, w2o, w2t, pose, cam_poses,
                             otm_fallback=cams["otm"].fallback)
        attempts.append(GraspAttempt(cid, k, "success", pose, cam_poses, record=record))
    return attempts
