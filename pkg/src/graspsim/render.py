"""Software pinhole ray-caster producing RGB, encoded depth and object masks.

Camera frame: +Z optical axis, +X image right, +Y image down. Pixel rays
have a unit Z component in the camera frame, so the ray parameter of a hit
is its planar depth along the optical axis.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .mesh import TriMesh
from .raycast import ray_mesh
from .transforms import Transform

log = logging.getLogger(__name__)

NEAR = 0.01
FAR = 0.75
FOV_DEG = 50.0
RESOLUTION = 128
OBJECT_ALBEDO = 0.7
TABLE_ALBEDO = 0.4


@dataclass(frozen=True, eq=False)
class Camera:
    pose: Transform
    fov_deg: float = FOV_DEG
    near: float = NEAR
    far: float = FAR
    width: int = RESOLUTION
    height: int = RESOLUTION

    def __post_init__(self):
        if not 0 < self.near < self.far:
            raise ValueError("camera needs 0 < near < far")
        if not 0 < self.fov_deg < 180:
            raise ValueError("field of view must lie in (0, 180) degrees")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    @property
    def tan_half(self) -> float:
        """Half-extent of the image plane at unit depth along the larger dimension."""
        return float(np.tan(np.radians(self.fov_deg) / 2))

    def ray_directions(self) -> np.ndarray:
        """Camera-frame ray directions ``(H, W, 3)`` with unit optical component."""
        s = self.tan_half / max(self.width, self.height)
        u = (2 * (np.arange(self.width) + 0.5) - self.width) * s
        v = (2 * (np.arange(self.height) + 0.5) - self.height) * s
        vv, uu = np.meshgrid(v, u, indexing="ij")
        return np.stack([uu, vv, np.ones_like(uu)], axis=-1)

    def image_frame(self) -> Transform:
        """Image-plane frame in camera coordinates: origin at the top-left
        corner of the near plane, axes parallel to the camera axes."""
        s = self.near * self.tan_half / max(self.width, self.height)
        return Transform.from_translation((-self.width * s, -self.height * s, self.near))


class RenderBody:
    albedo: float = OBJECT_ALBEDO

    def intersect(self, origins, dirs, t_min, t_max):
        """Nearest hit per ray: ``(t, normal)``; ``t = inf`` on a miss."""
        raise NotImplementedError


@dataclass(eq=False)
class MeshBody(RenderBody):
    mesh: TriMesh
    albedo: float = OBJECT_ALBEDO

    def intersect(self, origins, dirs, t_min, t_max):
        t, f = ray_mesh(self.mesh, origins, dirs, t_min, t_max)
        normals = np.zeros((len(t), 3))
        hit = f >= 0
        normals[hit] = self.mesh.face_normals()[f[hit]]
        return t, normals


@dataclass(eq=False)
class Sphere(RenderBody):
    center: tuple
    radius: float
    albedo: float = OBJECT_ALBEDO

    def intersect(self, origins, dirs, t_min, t_max):
        c = np.asarray(self.center, dtype=np.float64)
        oc = origins - c
        a = (dirs * dirs).sum(axis=1)
        b = (oc * dirs).sum(axis=1)
        cc = (oc * oc).sum(axis=1) - self.radius ** 2
        disc = b * b - a * cc
        root = np.sqrt(np.maximum(disc, 0.0))
        t0 = (-b - root) / a
        t1 = (-b + root) / a
        t = np.where((t0 >= t_min) & (t0 <= t_max), t0,
                     np.where((t1 >= t_min) & (t1 <= t_max), t1, np.inf))
        t = np.where(disc >= 0, t, np.inf)
        p = origins + np.where(np.isfinite(t), t, 0.0)[:, None] * dirs
        return t, (p - c) / self.radius


@dataclass(eq=False)
class Plane(RenderBody):
    """Plane through ``point`` with ``normal``; optionally bounded to an
    axis-aligned rectangle ``|x - px| <= hx, |y - py| <= hy`` (tables)."""
    point: tuple
    normal: tuple
    half_extent: tuple | None = None
    albedo: float = TABLE_ALBEDO

    def intersect(self, origins, dirs, t_min, t_max):
        p0 = np.asarray(self.point, dtype=np.float64)
        n = np.asarray(self.normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((p0 - origins) @ n) / denom
        ok = (denom != 0) & (t >= t_min) & (t <= t_max)
        if self.half_extent is not None:
            hit = origins + np.where(ok, t, 0.0)[:, None] * dirs
            hx, hy = self.half_extent
            ok &= (np.abs(hit[:, 0] - p0[0]) <= hx) & (np.abs(hit[:, 1] - p0[1]) <= hy)
        return np.where(ok, t, np.inf), np.broadcast_to(n, (len(t), 3)).copy()


def table_body(height: float, half_extent=(0.6, 0.6)) -> Plane:
    return Plane((0.0, 0.0, height), (0.0, 0.0, 1.0), tuple(half_extent), TABLE_ALBEDO)


@dataclass(eq=False)
class RgbdImage:
    rgb: np.ndarray      # (3, H, W) float32 in [0, 1]
    depth: np.ndarray    # (H, W) float32 encoded in [0, 1]
    mask: np.ndarray     # (H, W) uint8, 1 where the nearest hit is an object

    def stacked(self) -> np.ndarray:
        """``(4, H, W)`` float32 tensor ``[R, G, B, D]``."""
        return np.concatenate([self.rgb, self.depth[None]], axis=0).astype(np.float32)


def render(camera: Camera, objects=(), environment=()) -> RgbdImage:
    """Cast one primary ray per pixel and keep the nearest hit in ``[near, far]``.

    Bodies in ``objects`` contribute to the mask, bodies in ``environment``
    (the table) only occlude. Shading is a constant albedo scaled by the
    cosine between the surface normal and the view ray (headlight).
    """
    H, W = camera.height, camera.width
    d_cam = camera.ray_directions().reshape(-1, 3)
    dirs = d_cam @ camera.pose.rotation.T
    origins = np.broadcast_to(camera.pose.translation, dirs.shape)
    best = np.full(len(dirs), np.inf)
    normal = np.zeros_like(dirs)
    albedo = np.zeros(len(dirs))
    is_obj = np.zeros(len(dirs), dtype=bool)
    for bodies, flag in ((objects, True), (environment, False)):
        for body in bodies:
            t, n = body.intersect(origins, dirs, camera.near, camera.far)
            closer = t < best
            best = np.where(closer, t, best)
            normal[closer] = n[closer]
            albedo[closer] = body.albedo
            is_obj = np.where(closer, flag, is_obj)
    hit = np.isfinite(best)
    depth = np.where(hit, (best - camera.near) / (camera.far - camera.near), 1.0)
    depth = np.clip(depth, 0.0, 1.0)
    unit = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    shade = np.where(hit, albedo * np.abs((normal * unit).sum(axis=1)), 0.0)
    rgb = np.broadcast_to(shade.reshape(1, H, W), (3, H, W)).astype(np.float32)
    return RgbdImage(rgb, depth.reshape(H, W).astype(np.float32),
                     (hit & is_obj & (depth < 1.0)).reshape(H, W).astype(np.uint8))


def render_object(mesh_world: TriMesh, camera: Camera, table_height: float | None = 0.65,
                  table_half_extent=(0.6, 0.6)) -> RgbdImage:
    env = () if table_height is None else (table_body(table_height, table_half_extent),)
    return render(camera, (MeshBody(mesh_world),), env)


def encode_depth(depth, near: float = NEAR, far: float = FAR) -> np.ndarray:
    return (np.asarray(depth, dtype=np.float64) - near) / (far - near)


def decode_depth(image, near: float = NEAR, far: float = FAR) -> np.ndarray:
    """Metric depth ``near + I * (far - near)``; values outside [0, 1] are clamped."""
    I = np.asarray(image, dtype=np.float64)
    bad = int(np.count_nonzero((I < 0) | (I > 1)))
    if bad:
        log.warning("decode_depth: clamped %d out-of-range values", bad)
        I = np.clip(I, 0.0, 1.0)
    return near + I * (far - near)
