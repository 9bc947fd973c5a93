"""Three-finger precision hand: fingertip kinematics, wrist-pose IK and finger closing.

Gripper frame {G}: origin at the palm centre, +Z is the palm normal (approach
direction). Each finger is a planar two-link chain mounted on the palm circle
at ``palm_radius`` and ``knuckle_height``; it bends in the plane spanned by its
radial direction and +Z. A joint angle of zero points the link straight along
+Z, positive angles curl the finger toward the palm axis.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .mesh import TriMesh
from .raycast import points_in_mesh, ray_mesh
from .transforms import Transform, euler_xyz

DEG = np.pi / 180.0


class JointLimitError(ValueError):
    pass


@dataclass(frozen=True)
class HandModel:
    palm_radius: float = 0.025
    knuckle_height: float = 0.017
    proximal_length: float = 0.070
    distal_length: float = 0.058
    finger_base_angles: tuple = (0.0, 120 * DEG, 240 * DEG)
    proximal_limits: tuple = (-90 * DEG, 140 * DEG)
    distal_limits: tuple = (-45 * DEG, 135 * DEG)
    open_angle: float = -60 * DEG
    open_distal: float = 70 * DEG
    distal_coupling: float = 1.0 / 3.0
    close_step: float = 0.5 * DEG
    finger_radius: float = 0.008

    def __post_init__(self):
        if len(self.finger_base_angles) != 3:
            raise ValueError("the hand has exactly three fingers")
        wrapped = np.round(np.mod(self.finger_base_angles, 2 * np.pi), 12)
        if len(set(wrapped.tolist())) != 3:
            raise ValueError("finger base angles must be distinct")
        if min(self.palm_radius, self.proximal_length, self.distal_length) <= 0:
            raise ValueError("hand dimensions must be positive")
        if self.close_step <= 0:
            raise ValueError("close_step must be positive")

    @property
    def palm_to_fingertip_reach(self) -> float:
        """Palm-to-fingertip distance along +Z with the fingers fully extended."""
        return self.knuckle_height + self.proximal_length + self.distal_length

    _ANGLE_FIELDS = ("finger_base_angles", "proximal_limits", "distal_limits",
                     "open_angle", "open_distal", "close_step")

    def coupled_distal(self, proximal):
        """Distal angle that accompanies ``proximal`` during closing."""
        return self.open_distal + self.distal_coupling * (np.asarray(proximal) - self.open_angle)

    @classmethod
    def from_dict(cls, d: dict) -> "HandModel":
        """Build from a JSON block; angle fields are given in degrees."""
        kwargs = {}
        for key, val in d.items():
            name = key[:-4] if key.endswith("_deg") else key
            if name not in cls.__dataclass_fields__ or (key.endswith("_deg") != (name in cls._ANGLE_FIELDS)):
                raise ValueError(f"unknown hand field {key!r}")
            if name in cls._ANGLE_FIELDS:
                val = tuple(v * DEG for v in val) if isinstance(val, (list, tuple)) else val * DEG
            kwargs[name] = val
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {}
        for key, val in asdict(self).items():
            if key in self._ANGLE_FIELDS:
                val = [v / DEG for v in val] if isinstance(val, (list, tuple)) else val / DEG
                key = key + "_deg"
            out[key] = val
        return out


@dataclass(frozen=True)
class FingerState:
    proximal: tuple
    distal: tuple
    spread: float = 0.0

    @classmethod
    def uniform(cls, proximal: float, hand: HandModel = HandModel()) -> "FingerState":
        """All fingers at ``proximal`` with the coupled distal angle."""
        return cls((float(proximal),) * 3, (float(hand.coupled_distal(proximal)),) * 3)

    @classmethod
    def open(cls, hand: HandModel = HandModel()) -> "FingerState":
        return cls.uniform(hand.open_angle, hand)

    def check(self, hand: HandModel):
        lo, hi = hand.proximal_limits
        dlo, dhi = hand.distal_limits
        q1 = np.asarray(self.proximal, dtype=np.float64)
        q2 = np.asarray(self.distal, dtype=np.float64)
        if q1.shape != (3,) or q2.shape != (3,):
            raise ValueError("finger state needs three proximal and three distal angles")
        if np.any(q1 < lo - 1e-12) or np.any(q1 > hi + 1e-12):
            raise JointLimitError(f"proximal angle outside [{lo:.4f}, {hi:.4f}] rad: {q1}")
        if np.any(q2 < dlo - 1e-12) or np.any(q2 > dhi + 1e-12):
            raise JointLimitError(f"distal angle outside [{dlo:.4f}, {dhi:.4f}] rad: {q2}")


@dataclass(eq=False)
class ContactSet:
    positions: np.ndarray
    normals: np.ndarray
    frame: str = "object"
    fingers: tuple = ()
    approach: np.ndarray = None
    failure: str | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if self.approach is not None:
            self.approach = np.asarray(self.approach, dtype=np.float64).reshape(-1, 3)

    @property
    def complete(self) -> bool:
        return self.failure is None and len(self.positions) == 3

    def transformed(self, tf: Transform, frame: str) -> "ContactSet":
        approach = None if self.approach is None else tf.apply_vectors(self.approach)
        return ContactSet(tf.apply(self.positions), tf.apply_vectors(self.normals), frame,
                          self.fingers, approach, self.failure)

    def vector(self) -> np.ndarray:
        """The 18-vector ``[p1, p2, p3, n1, n2, n3]``."""
        return np.concatenate([self.positions.ravel(), self.normals.ravel()])


def _finger_axes(hand: HandModel):
    ang = np.asarray(hand.finger_base_angles, dtype=np.float64)
    radial = np.stack([np.cos(ang), np.sin(ang), np.zeros(3)], axis=1)
    knuckles = hand.palm_radius * radial + np.array([0.0, 0.0, hand.knuckle_height])
    return radial, knuckles


def _link_dir(phi, radial):
    """Unit link direction for bend angle ``phi`` (broadcast over leading axes)."""
    phi = np.asarray(phi, dtype=np.float64)[..., None]
    return np.cos(phi) * np.array([0.0, 0.0, 1.0]) - np.sin(phi) * radial


def finger_points(q1, q2, hand: HandModel = HandModel()):
    """Knuckle, middle joint and tip of every finger in {G}.

    ``q1``/``q2`` broadcast against a trailing finger axis of length 3, so an
    ``(S, 3)`` array of angles yields ``(S, 3, 3)`` outputs.
    """
    radial, knuckles = _finger_axes(hand)
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    mid = knuckles + hand.proximal_length * _link_dir(q1, radial)
    tip = mid + hand.distal_length * _link_dir(q1 + q2, radial)
    return np.broadcast_to(knuckles, mid.shape), mid, tip


def fingertip_fk(wrist: Transform, state: FingerState, hand: HandModel = HandModel()) -> np.ndarray:
    """Fingertip positions ``(3, 3)`` in the wrist's parent frame."""
    state.check(hand)
    _, _, tip = finger_points(state.proximal, state.distal, hand)
    return wrist.apply(tip)


# -- wrist pose least squares ------------------------------------------------

def pose_from_params(params) -> Transform:
    a, b, c, tx, ty, tz = np.asarray(params, dtype=np.float64)
    return Transform(euler_xyz(a, b, c), (tx, ty, tz))


def params_from_pose(pose: Transform) -> np.ndarray:
    """Euler XYZ angles and translation of ``pose`` (inverse of :func:`pose_from_params`)."""
    R = pose.rotation
    beta = np.arcsin(np.clip(R[0, 2], -1.0, 1.0))
    alpha = np.arctan2(-R[1, 2], R[2, 2])
    gamma = np.arctan2(-R[0, 1], R[0, 0])
    return np.concatenate([[alpha, beta, gamma], pose.translation])


def ik_residuals(params, targets, local_tips) -> np.ndarray:
    """Stacked fingertip-minus-target errors (9,) for wrist parameters ``params``."""
    return (pose_from_params(params).apply(local_tips) - targets).ravel()


def ik_objective(params, targets, local_tips) -> float:
    r = ik_residuals(params, targets, local_tips)
    return float(r @ r)


def ik_jacobian(params, targets, local_tips, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of :func:`ik_residuals`, shape (9, 6)."""
    p = np.asarray(params, dtype=np.float64)
    J = np.empty((local_tips.size, 6))
    for k in range(6):
        e = np.zeros(6)
        e[k] = h
        J[:, k] = (ik_residuals(p + e, targets, local_tips)
                   - ik_residuals(p - e, targets, local_tips)) / (2 * h)
    return J


@dataclass
class IkResult:
    pose: Transform
    residual: float
    params: np.ndarray
    converged: bool
    iterations: int
    history: list = field(default_factory=list)


def solve_wrist_ik(targets, hand: HandModel = HandModel(), state: FingerState | None = None,
                   init=None, max_iter: int = 200, step_tol: float = 1e-10,
                   local_points=None) -> IkResult:
    """Wrist pose minimising the summed squared fingertip-to-target distance.

    Levenberg-Marquardt over ``(alpha, beta, gamma, tx, ty, tz)`` with numeric
    Jacobians. Only steps that reduce the objective are accepted, so the
    objective is non-increasing across iterations. ``residual`` is in m^2.
    ``local_points`` (3, 3) in {G} replaces the fingertips of ``state``.
    """
    targets = np.asarray(targets, dtype=np.float64).reshape(3, 3)
    if not np.all(np.isfinite(targets)):
        raise ValueError("IK targets must be finite")
    state = FingerState.open(hand) if state is None else state
    state.check(hand)
    if local_points is None:
        _, _, local_tips = finger_points(state.proximal, state.distal, hand)
    else:
        local_tips = np.asarray(local_points, dtype=np.float64).reshape(3, 3)
    p = np.zeros(6) if init is None else np.asarray(init, dtype=np.float64).copy()

    r = ik_residuals(p, targets, local_tips)
    f = float(r @ r)
    if not np.isfinite(f):
        raise ValueError("IK objective is not finite at the initial pose")
    lam = 1e-3
    history = [f]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = ik_jacobian(p, targets, local_tips)
        A = J.T @ J
        g = J.T @ r
        accepted = False
        while lam < 1e16:
            step = np.linalg.solve(A + lam * np.eye(6), -g)
            r_new = ik_residuals(p + step, targets, local_tips)
            f_new = float(r_new @ r_new)
            if not np.isfinite(f_new):
                raise ValueError("IK objective became non-finite")
            if f_new < f:
                accepted = True
                break
            lam *= 4.0
        if not accepted:
            converged = True  # no descent direction left at working precision
            break
        p, r, f = p + step, r_new, f_new
        history.append(f)
        lam = max(lam / 3.0, 1e-12)
        if np.linalg.norm(step) < step_tol or f == 0.0:
            converged = True
            break
    return IkResult(pose_from_params(p), f, p, converged, it, history)


# -- finger closing -----------------------------------------------------------

def _sweep_angles(hand: HandModel) -> np.ndarray:
    lo = hand.open_angle
    hi = hand.proximal_limits[1]
    if hand.distal_coupling > 0:
        hi = min(hi, lo + (hand.distal_limits[1] - hand.open_distal) / hand.distal_coupling)
    n = int(np.floor((hi - lo) / hand.close_step + 1e-9)) + 1
    return lo + hand.close_step * np.arange(n)


def close_fingers(wrist: Transform, hand: HandModel, mesh: TriMesh,
                  table_height: float | None = None) -> ContactSet:
    """Sweep each finger closed until its distal link meets ``mesh``.

    ``wrist`` and ``mesh`` share a parent frame; contacts come back in that
    frame. The contact is the first surface crossing along the distal link
    (from its joint toward the tip) at the first step that touches the mesh;
    the normal is the outward triangle normal. A finger whose proximal link
    strikes the mesh first cannot make a fingertip contact and fails. With
    ``table_height`` set, a finger capsule dipping below the table before
    contact fails with ``finger_table``.
    """
    if points_in_mesh(mesh, wrist.translation[None])[0]:
        return ContactSet(np.empty((0, 3)), np.empty((0, 3)), failure="palm_collision")
    q1 = _sweep_angles(hand)
    q2 = hand.coupled_distal(q1)
    knuckle, mid, tip = finger_points(q1[:, None], q2[:, None], hand)     # (S, 3, 3)
    knuckle, mid, tip = wrist.apply(knuckle), wrist.apply(mid), wrist.apply(tip)
    face_n = mesh.face_normals()
    radial, _ = _finger_axes(hand)
    positions, normals, approach, fingers = [], [], [], []

    def failed(reason):
        return ContactSet(np.reshape(positions, (-1, 3)), np.reshape(normals, (-1, 3)),
                          fingers=tuple(fingers), approach=np.reshape(approach, (-1, 3)),
                          failure=reason)

    for f in range(3):
        t_d, face_d = ray_mesh(mesh, mid[:, f], tip[:, f] - mid[:, f], 0.0, 1.0)
        t_p, _ = ray_mesh(mesh, knuckle[:, f], mid[:, f] - knuckle[:, f], 0.0, 1.0)
        hit_d = np.nonzero(np.isfinite(t_d))[0]
        hit_p = np.nonzero(np.isfinite(t_p))[0]
        if len(hit_d) == 0 or (len(hit_p) and hit_p[0] <= hit_d[0]):
            return failed("missed_contact")
        s = hit_d[0]
        if table_height is not None:
            low = np.minimum(mid[:s + 1, f, 2], tip[:s + 1, f, 2]).min()
            if low - hand.finger_radius < table_height:
                return failed("finger_table")
        frac = t_d[s]
        point = mid[s, f] + frac * (tip[s, f] - mid[s, f])
        positions.append(point)
        normals.append(face_n[face_d[s]])
        # Velocity of the touching material point with respect to the proximal angle.
        phi1, phi2 = q1[s], q1[s] + q2[s]
        dz = np.array([0.0, 0.0, 1.0])
        d1 = -np.sin(phi1) * dz - np.cos(phi1) * radial[f]
        d2 = -np.sin(phi2) * dz - np.cos(phi2) * radial[f]
        v = hand.proximal_length * d1 + frac * hand.distal_length * (1 + hand.distal_coupling) * d2
        v = wrist.apply_vectors(v)
        approach.append(v / np.linalg.norm(v))
        fingers.append(f)
    return ContactSet(positions, normals, fingers=tuple(fingers), approach=approach)


def hand_collision(wrist: Transform, hand: HandModel, mesh: TriMesh | None,
                   table_height: float | None, fingers_vs_mesh: bool = True,
                   state: FingerState | None = None) -> str | None:
    """Primitive collision test of the hand (open unless ``state`` is given);
    returns a reason or ``None``.

    The palm is a disc of ``palm_radius`` and the open fingers are capsules
    of ``finger_radius``. Against the table any sample below the plane
    (inflated by the capsule radius) collides; against the mesh the palm
    centre, rim and spokes are tested, plus the open finger links when
    ``fingers_vs_mesh`` is set.
    """
    ring = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    palm = np.vstack([[0.0, 0.0, 0.0],
                      np.column_stack([hand.palm_radius * np.cos(ring),
                                       hand.palm_radius * np.sin(ring), np.zeros(16)])])
    palm_w = wrist.apply(palm)
    st = FingerState.open(hand) if state is None else state
    k, m, t = finger_points(st.proximal, st.distal, hand)
    k, m, t = wrist.apply(k), wrist.apply(m), wrist.apply(t)
    if table_height is not None:
        if palm_w[:, 2].min() < table_height:
            return "palm_table"
        if np.vstack([k, m, t])[:, 2].min() - hand.finger_radius < table_height:
            return "finger_table"
    if mesh is not None:
        if points_in_mesh(mesh, palm_w).any():
            return "palm_mesh"
        spokes_t, _ = ray_mesh(mesh, np.repeat(palm_w[:1], 16, axis=0), palm_w[1:] - palm_w[0], 0.0, 1.0)
        if np.isfinite(spokes_t).any():
            return "palm_mesh"
        if not fingers_vs_mesh:
            return None
        starts = np.vstack([k, m])
        ends = np.vstack([m, t])
        seg_t, _ = ray_mesh(mesh, starts, ends - starts, 0.0, 1.0)
        if np.isfinite(seg_t).any():
            return "finger_mesh"
    return None
