"""Rigid transforms: Euler XYZ rotations, composition, and the 1x12 frame codec.

Angles are radians everywhere in this module. A ``Transform`` maps points from
its child frame into its parent frame: ``p_parent = R @ p_child + t``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHONORMAL_TOL = 1e-6


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_xyz_batch(angles) -> np.ndarray:
    """Vectorised ``R_X(a) @ R_Y(b) @ R_Z(c)`` for an ``(N, 3)`` angle array.

    Returns an ``(N, 3, 3)`` array. The scalar :func:`euler_xyz` goes through
    this same code path so batch and scalar results agree bitwise.
    """
    angles = np.asarray(angles, dtype=np.float64).reshape(-1, 3)
    ca, cb, cc = np.cos(angles).T
    sa, sb, sc = np.sin(angles).T
    out = np.empty((angles.shape[0], 3, 3))
    # Expanded product of the three single-axis matrices.
    out[:, 0, 0] = cb * cc
    out[:, 0, 1] = -cb * sc
    out[:, 0, 2] = sb
    out[:, 1, 0] = sa * sb * cc + ca * sc
    out[:, 1, 1] = -sa * sb * sc + ca * cc
    out[:, 1, 2] = -sa * cb
    out[:, 2, 0] = -ca * sb * cc + sa * sc
    out[:, 2, 1] = ca * sb * sc + sa * cc
    out[:, 2, 2] = ca * cb
    return out


def euler_xyz(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Rotation ``R_X(alpha) R_Y(beta) R_Z(gamma)`` (radians)."""
    return euler_xyz_batch([[alpha, beta, gamma]])[0]


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return (np.abs(R.T @ R - np.eye(3)).max() <= tol
            and abs(np.linalg.det(R) - 1.0) <= tol)


@dataclass(frozen=True, eq=False)
class Transform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got shape {R.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        if not is_rotation(R, ORTHONORMAL_TOL):
            raise ValueError("rotation must be orthonormal with determinant +1")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Transform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rotation(cls, R) -> "Transform":
        return cls(R, np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> "Transform":
        return cls(np.eye(3), t)

    @classmethod
    def from_matrix(cls, M) -> "Transform":
        M = np.asarray(M, dtype=np.float64)
        return cls(M[:3, :3], M[:3, 3])

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def apply(self, points) -> np.ndarray:
        """Map points (``(3,)`` or ``(N, 3)``) from the child into the parent frame."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def apply_vectors(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T

    def inverse(self) -> "Transform":
        return invert(self)

    def __matmul__(self, other: "Transform") -> "Transform":
        return compose(self, other)

    def __eq__(self, other):
        if not isinstance(other, Transform):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    def __repr__(self):
        return f"Transform(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def compose(a: Transform, b: Transform) -> Transform:
    """``a o b``: apply ``b`` first, then ``a``."""
    return Transform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(a: Transform) -> Transform:
    Rt = a.rotation.T
    return Transform(Rt, -(Rt @ a.translation))


def encode_frame(t: Transform) -> np.ndarray:
    """Row-major flattening of the 3x4 matrix ``[R | t]`` into a 12-vector."""
    return np.hstack([t.rotation, t.translation[:, None]]).reshape(12)


def decode_frame(vec, tol: float = ORTHONORMAL_TOL) -> Transform:
    """Inverse of :func:`encode_frame`; rejects non-orthonormal rotation blocks."""
    v = np.asarray(vec, dtype=np.float64)
    if v.shape != (12,):
        raise ValueError(f"frame vector must have 12 entries, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("frame vector contains non-finite values")
    M = v.reshape(3, 4)
    R = M[:, :3]
    col_norms = np.linalg.norm(R, axis=0)
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err > tol:
        raise ValueError(
            "frame rotation block is not orthonormal: column norms "
            f"{np.array2string(col_norms, precision=9)}, max |R^T R - I| = {err:.3e}")
    if np.linalg.det(R) < 0:
        raise ValueError("frame rotation block is a reflection (det < 0)")
    return Transform(R, M[:, 3])
