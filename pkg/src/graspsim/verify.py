"""Wrist-pose check of grasps: can the hand place its fingertips on the contacts?

Contacts are mapped into the object frame, a finger closure is chosen whose
fingertip circle best matches the contact triangle, and the wrist pose is
fitted by least squares starting from the recorded gripper pose.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datastore import Dataset
from .hand import (FingerState, HandModel, _sweep_angles, finger_points, hand_collision,
                   params_from_pose, solve_wrist_ik)
from .transforms import Transform, compose, invert


@dataclass
class VerifyResult:
    key: tuple
    residual: float
    rms_error: float
    converged: bool
    proximal_deg: float
    collision: str | None


def circumradius(points) -> float:
    a, b, c = np.asarray(points, dtype=np.float64)
    la, lb, lc = np.linalg.norm(b - c), np.linalg.norm(a - c), np.linalg.norm(a - b)
    area2 = np.linalg.norm(np.cross(b - a, c - a))
    return float(la * lb * lc / (2 * area2)) if area2 > 0 else np.inf


def matching_states(targets, hand: HandModel = HandModel()) -> list:
    """Uniform closing states whose fingertip circle radius locally best
    matches the circumradius of the targets (one per branch of the sweep)."""
    q1 = _sweep_angles(hand)
    q2 = hand.coupled_distal(q1)
    _, _, tips = finger_points(q1[:, None], q2[:, None], hand)
    err = np.abs(np.linalg.norm(tips[:, 0, :2], axis=1) - circumradius(targets))
    left = np.r_[np.inf, err[:-1]]
    right = np.r_[err[1:], np.inf]
    minima = np.nonzero((err <= left) & (err <= right))[0]
    return [FingerState.uniform(q1[k], hand) for k in minima]


def _segment_distance(p, a, b):
    ab = b - a
    t = np.clip(((p - a) * ab).sum(-1) / (ab * ab).sum(-1), 0.0, 1.0)
    return np.linalg.norm(a + t[..., None] * ab - p, axis=-1), t


def fit_distal_contacts(targets, hand: HandModel, state: FingerState, init, rounds: int = 6):
    """Wrist pose and per-finger closure putting each target on its distal link.

    Alternates three steps: fit the wrist to fixed points on the links, pick
    for every finger the sweep angle whose distal link passes closest to its
    target, and slide the fitted points to the projections of the targets.
    """
    q1 = _sweep_angles(hand)
    q2 = hand.coupled_distal(q1)
    _, mids, tips = finger_points(q1[:, None], q2[:, None], hand)        # (S, 3, 3)
    prox = np.array(state.proximal, dtype=np.float64)
    dist = np.array(state.distal, dtype=np.float64)
    _, mid, tip = finger_points(prox, dist, hand)
    frac = np.ones(3)
    best = None
    for _ in range(rounds):
        pts = mid + frac[:, None] * (tip - mid)
        res = solve_wrist_ik(targets, hand, FingerState(tuple(prox), tuple(dist)), init=init,
                             local_points=pts)
        if best is None or res.residual < best[0].residual:
            best = (res, FingerState(tuple(prox), tuple(dist)))
        local = res.pose.inverse().apply(targets)
        d, t = _segment_distance(local[None], mids, tips)                  # (S, 3)
        k = np.argmin(d, axis=0)
        prox, dist = q1[k], q2[k]
        mid, tip = mids[k, [0, 1, 2]], tips[k, [0, 1, 2]]
        frac = t[k, [0, 1, 2]]
        init = res.params
    return best


def camera_to_object(ds: Dataset, i: int) -> Transform:
    """Transform taking camera-frame points of sample ``i`` into {O}."""
    w2o = ds.frame(i, "frame_world2obj")
    w2t = ds.frame(i, "frame_world2work")
    t2c = ds.frame(i, f"frame_work2cam_{ds.mapping}")
    return compose(invert(w2o), compose(w2t, t2c))


def verify_grasps(ds: Dataset, meshes: dict, hand: HandModel = HandModel(), grasps=None,
                  table_height: float = 0.65, limit: int | None = None) -> list:
    """Fit the wrist to each grasp's contacts.

    ``grasps`` optionally replaces the stored camera-frame vectors (e.g. model
    predictions aligned with the samples). ``meshes`` maps object names to
    meshes in their object frames.
    """
    G = ds.grasps.astype(np.float64) if grasps is None else np.asarray(grasps, dtype=np.float64)
    if G.shape != (len(ds), 18):
        raise ValueError(f"grasps must have shape ({len(ds)}, 18), got {G.shape}")
    n = len(ds) if limit is None else min(limit, len(ds))
    results = []
    for i in range(n):
        c2o = camera_to_object(ds, i)
        targets = c2o.apply(G[i, :9].reshape(3, 3))
        w2o = ds.frame(i, "frame_world2obj")
        w2t = ds.frame(i, "frame_world2work")
        grip_O = compose(invert(w2o), compose(w2t, ds.frame(i, "frame_work2grip")))
        init = params_from_pose(grip_O)
        fits = [fit_distal_contacts(targets, hand, st, init) for st in matching_states(targets, hand)]
        res, state = min(fits, key=lambda f: f[0].residual)
        mesh = meshes.get(ds.samples[i]["object"])
        # {O} shares the world axes, so the table plane only shifts in z.
        table_O = table_height - w2o.translation[2]
        reason = hand_collision(res.pose, hand, mesh, table_O, fingers_vs_mesh=False, state=state)
        results.append(VerifyResult(ds.keys[i], res.residual, float(np.sqrt(res.residual / 3)),
                                    res.converged, float(np.degrees(np.mean(state.proximal))), reason))
    return results
