"""Vectorised ray queries against triangle meshes and axis-aligned boxes."""
from __future__ import annotations

import numpy as np

from .mesh import TriMesh

_EPS = 1e-12
_CHUNK_PAIRS = 2_000_000


def ray_aabb(origins, directions, box_min, box_max, t_min: float = 0.0):
    """Slab test for many rays against one box.

    Returns ``(hit, t_entry)``. ``t_entry`` is the first parameter ``>= t_min``
    at which the ray is inside the closed box (``t_min`` itself when the origin
    is already inside). Grazing contact with a face counts as a hit.
    """
    o = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    d = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    lo = np.asarray(box_min, dtype=np.float64)
    hi = np.asarray(box_max, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (lo - o) * inv
        t2 = (hi - o) * inv
    tn = np.minimum(t1, t2)
    tf = np.maximum(t1, t2)
    # Axis-parallel rays: inside the slab means unconstrained, outside means miss.
    parallel = d == 0
    inside_slab = (o >= lo) & (o <= hi)
    tn = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), tn)
    tf = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), tf)
    t_near = np.maximum(tn.max(axis=1), t_min)
    t_far = tf.min(axis=1)
    hit = t_near <= t_far
    return hit, np.where(hit, t_near, np.inf)


def _bounding_sphere(mesh: TriMesh):
    V = mesh.vertices
    center = 0.5 * (V.min(axis=0) + V.max(axis=0))
    radius = np.sqrt(((V - center) ** 2).sum(axis=1).max())
    return center, radius


def ray_triangles(origins, directions, corners, t_min: float = 0.0, t_max=np.inf):
    """Nearest ray/triangle hit (Moller-Trumbore) for every ray.

    ``corners`` is ``(F, 3, 3)``. Directions need not be unit length; the
    returned ``t`` is in units of the direction vector. Returns
    ``(t, face_index)`` with ``t = inf`` and ``face_index = -1`` on a miss.
    Hits are accepted for ``t_min <= t <= t_max``.
    """
    o = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    d = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    n = len(o)
    t_max = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n,))
    best_t = np.full(n, np.inf)
    best_f = np.full(n, -1, dtype=np.int64)
    if n == 0 or len(corners) == 0:
        return best_t, best_f
    v0 = corners[:, 0]
    e1 = corners[:, 1] - v0
    e2 = corners[:, 2] - v0
    chunk = max(1, _CHUNK_PAIRS // len(corners))
    for s in range(0, n, chunk):
        oo = o[s:s + chunk, None, :]
        dd = d[s:s + chunk, None, :]
        p = np.cross(dd, e2)
        det = np.einsum("rfk,fk->rf", p, e1)
        ok = np.abs(det) > _EPS * np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(ok, 1.0 / det, 0.0)
            tv = oo - v0
            u = np.einsum("rfk,rfk->rf", tv, p) * inv
            q = np.cross(tv, e1)
            v = np.einsum("rk,rfk->rf", d[s:s + chunk], q) * inv
            t = np.einsum("fk,rfk->rf", e2, q) * inv
        valid = (ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0)
                 & (t >= t_min) & (t <= t_max[s:s + chunk, None]))
        t = np.where(valid, t, np.inf)
        idx = np.argmin(t, axis=1)
        tt = t[np.arange(len(idx)), idx]
        best_t[s:s + chunk] = tt
        best_f[s:s + chunk] = np.where(np.isfinite(tt), idx, -1)
    return best_t, best_f


def ray_mesh(mesh: TriMesh, origins, directions, t_min: float = 0.0, t_max=np.inf):
    """Nearest hit of each ray with ``mesh``; culls rays missing its bounding sphere."""
    o = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    d = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    n = len(o)
    t_max = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n,)).copy()
    t = np.full(n, np.inf)
    f = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return t, f
    c, r = _bounding_sphere(mesh)
    # Quadratic |o + s d - c|^2 = (r + margin)^2 in the unnormalised parameter s.
    r = r * (1 + 1e-9) + 1e-12
    oc = o - c
    a = (d * d).sum(axis=1)
    b = (oc * d).sum(axis=1)
    cc = (oc * oc).sum(axis=1) - r * r
    disc = b * b - a * cc
    with np.errstate(divide="ignore", invalid="ignore"):
        s_far = (-b + np.sqrt(np.maximum(disc, 0))) / a
    cand = (disc >= 0) & (a > 0) & (s_far >= t_min)
    if not cand.any():
        return t, f
    idx = np.nonzero(cand)[0]
    tt, ff = ray_triangles(o[idx], d[idx], mesh.corners, t_min, t_max[idx])
    t[idx] = tt
    f[idx] = ff
    return t, f


def segments_hit_mesh(mesh: TriMesh, starts, ends):
    """For each segment, parameter in [0, 1] of the first mesh hit from ``starts`` (inf on miss)."""
    starts = np.atleast_2d(starts)
    t, f = ray_mesh(mesh, starts, np.atleast_2d(ends) - starts, 0.0, 1.0)
    return t, f


# Irrational-ish direction so parity rays avoid edges and vertices of axis-aligned meshes.
_PARITY_DIR = np.array([0.5773502691896258, 0.5345224838248488, 0.6172133998483676])
_PARITY_DIR = _PARITY_DIR / np.linalg.norm(_PARITY_DIR)


def points_in_mesh(mesh: TriMesh, points) -> np.ndarray:
    """Crossing-parity containment test for a closed mesh."""
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    inside = np.zeros(len(P), dtype=bool)
    if len(P) == 0:
        return inside
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    cand = np.all((P >= lo) & (P <= hi), axis=1)
    idx = np.nonzero(cand)[0]
    if len(idx) == 0:
        return inside
    corners = mesh.corners
    v0 = corners[:, 0]
    e1 = corners[:, 1] - v0
    e2 = corners[:, 2] - v0
    d = _PARITY_DIR
    p = np.cross(d, e2)
    det = (p * e1).sum(axis=1)
    ok = np.abs(det) > _EPS
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    chunk = max(1, _CHUNK_PAIRS // len(corners))
    for s in range(0, len(idx), chunk):
        ii = idx[s:s + chunk]
        tv = P[ii, None, :] - v0
        u = (tv * p).sum(axis=2) * inv
        q = np.cross(tv, e1)
        v = (q * d).sum(axis=2) * inv
        t = (q * e2).sum(axis=2) * inv
        cross = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
        inside[ii] = (cross.sum(axis=1) % 2) == 1
    return inside


def closest_points_on_triangles(points, corners):
    """Closest point on each triangle for each point: returns ``(P, F, 3)``.

    Region-based closest point (Ericson, Real-Time Collision Detection 5.1.5).
    """
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))[:, None, :]
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    ab, ac = b - a, c - a
    ap = P - a
    d1 = (ab * ap).sum(-1)
    d2 = (ac * ap).sum(-1)
    bp = P - b
    d3 = (ab * bp).sum(-1)
    d4 = (ac * bp).sum(-1)
    cp = P - c
    d5 = (ab * cp).sum(-1)
    d6 = (ac * cp).sum(-1)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = 1.0 / (va + vb + vc)
        v_in = vb * denom
        w_in = vc * denom
        out = a + ab * v_in[..., None] + ac * w_in[..., None]
        # edge BC
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        m = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        out = np.where(m[..., None], b + (c - b) * w_bc[..., None], out)
        # edge AC
        w_ac = d2 / (d2 - d6)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out = np.where(m[..., None], a + ac * w_ac[..., None], out)
    # Later assignments win, so regions are applied in reverse priority.
    m = (d6 >= 0) & (d5 <= d6)
    out = np.where(m[..., None], np.broadcast_to(c, out.shape), out)
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = d1 / (d1 - d3)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out = np.where(m[..., None], a + ab * v_ab[..., None], out)
    m = (d3 >= 0) & (d4 <= d3)
    out = np.where(m[..., None], np.broadcast_to(b, out.shape), out)
    m = (d1 <= 0) & (d2 <= 0)
    out = np.where(m[..., None], np.broadcast_to(a, out.shape), out)
    return out


def point_mesh_distance(mesh: TriMesh, points) -> np.ndarray:
    """Unsigned distance from each point to the mesh surface."""
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    corners = mesh.corners
    out = np.empty(len(P))
    chunk = max(1, _CHUNK_PAIRS // max(len(corners), 1))
    for s in range(0, len(P), chunk):
        cp = closest_points_on_triangles(P[s:s + chunk], corners)
        out[s:s + chunk] = np.sqrt(((cp - P[s:s + chunk, None, :]) ** 2).sum(-1)).min(axis=1)
    return out
