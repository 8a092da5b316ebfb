"""Pinhole cameras, sphere silhouettes and localisation from projected areas.

Image-plane coordinates ``(u, v)`` live on the plane ``z = focal`` of the
camera frame.  A camera covers the rectangle ``|u| <= half_width``,
``|v| <= half_height`` where the half extents are the pixel dimensions divided
by ``2 * pixels_per_unit``.  With ``pixels_per_unit = 1`` and ``focal`` given
in pixels, image-plane units are pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateGeometry, DegenerateView, InvalidConfig, NoConvergence

_ORTHO_TOL = 1e-9


def _vec3(p) -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite vector {arr}")
    return arr


def rotation_from_ypr(yaw_deg: float, pitch_deg: float, roll_deg: float = 0.0) -> np.ndarray:
    """Camera rotation (columns = camera x/right, y/down, z/forward in world).

    ``yaw`` is the heading of the optical axis in the world xy-plane measured
    from +x, ``pitch`` its elevation (negative looks down) and ``roll`` a
    rotation about the optical axis.
    """
    yaw, pitch, roll = np.radians([yaw_deg, pitch_deg, roll_deg])
    forward = np.array([math.cos(pitch) * math.cos(yaw),
                        math.cos(pitch) * math.sin(yaw),
                        math.sin(pitch)])
    return _basis_from_forward(forward, roll)


def _basis_from_forward(forward, roll=0.0) -> np.ndarray:
    forward = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    if abs(forward @ up) > 1.0 - 1e-12:
        up = np.array([1.0, 0.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    if roll:
        c, s = math.cos(roll), math.sin(roll)
        right, down = c * right + s * down, -s * right + c * down
    return np.column_stack([right, down, forward])


@dataclass(frozen=True, eq=False)
class CameraModel:
    rotation: np.ndarray
    center: np.ndarray
    focal: float
    image_width: int
    image_height: int
    pixels_per_unit: float = 1.0

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "center", _vec3(self.center))
        if np.max(np.abs(rot.T @ rot - np.eye(3))) >= _ORTHO_TOL:
            raise InvalidConfig("camera rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) >= _ORTHO_TOL:
            raise InvalidConfig("camera rotation must have determinant +1")
        if not self.focal > 0:
            raise InvalidConfig("focal must be positive")
        if int(self.image_width) < 1 or int(self.image_height) < 1:
            raise InvalidConfig("image dimensions must be positive")
        if not self.pixels_per_unit > 0:
            raise InvalidConfig("pixels_per_unit must be positive")

    @classmethod
    def look_at(cls, position, target, focal, width, height, pixels_per_unit=1.0):
        position = _vec3(position)
        rot = _basis_from_forward(_vec3(target) - position)
        return cls(rot, position, focal, width, height, pixels_per_unit)

    @classmethod
    def from_ypr(cls, position, yaw_deg, pitch_deg, roll_deg, focal_px, width, height):
        return cls(rotation_from_ypr(yaw_deg, pitch_deg, roll_deg), position,
                   float(focal_px), int(width), int(height), 1.0)

    @property
    def half_width(self) -> float:
        return self.image_width / (2.0 * self.pixels_per_unit)

    @property
    def half_height(self) -> float:
        return self.image_height / (2.0 * self.pixels_per_unit)

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        """Vectorised world->camera transform for an ``(..., 3)`` array."""
        return (np.asarray(points, dtype=np.float64) - self.center) @ self.rotation


@dataclass(frozen=True)
class SphereTarget:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center))
        if not self.radius > 0:
            raise InvalidConfig("sphere radius must be positive")


@dataclass(frozen=True)
class EllipseSilhouette:
    center_u: float
    center_v: float
    quad_A: float
    quad_B: float
    quad_C: float

    @property
    def discriminant(self) -> float:
        return 4.0 * self.quad_A * self.quad_C - self.quad_B ** 2

    @property
    def area(self) -> float:
        return 2.0 * math.pi / math.sqrt(self.discriminant)

    def half_extents(self) -> tuple[float, float]:
        """Half width (u) and half height (v) of the axis-aligned bounding box."""
        det = self.discriminant / 4.0
        return math.sqrt(self.quad_C / det), math.sqrt(self.quad_A / det)


def world_to_camera(p, cam: CameraModel) -> np.ndarray:
    return cam.rotation.T @ (_vec3(p) - cam.center)


def _check_depth(z, r):
    if not z > r:
        raise DegenerateView(f"camera depth {z:.6g} must exceed the sphere radius {r:.6g}")


def silhouette_ellipse(p_cam, r: float, f: float) -> EllipseSilhouette:
    x, y, z = _vec3(p_cam)
    _check_depth(z, r)
    k = x * x + y * y + z * z - r * r
    denom = z * z - r * r
    u0 = z * f * x / denom
    v0 = z * f * y / denom
    # Inside of the silhouette is where this conic is <= 0; it is the tangency
    # quadratic with its sign flipped.
    a = k - x * x
    b = -2.0 * x * y
    c = k - y * y
    d = -2.0 * x * z * f
    e = -2.0 * y * z * f
    g = f * f * (x * x + y * y - r * r)
    at_center = a * u0 * u0 + b * u0 * v0 + c * v0 * v0 + d * u0 + e * v0 + g
    scale = -1.0 / at_center
    return EllipseSilhouette(float(u0), float(v0), float(a * scale), float(b * scale), float(c * scale))


def _area_cam(pc: np.ndarray, r: float, f: float) -> np.ndarray:
    """Analytic silhouette area for camera-frame centres (no depth checks)."""
    x, y, z = pc[..., 0], pc[..., 1], pc[..., 2]
    return math.pi * r * r * f * f * np.sqrt(x * x + y * y + z * z - r * r) / (z * z - r * r) ** 1.5


def projected_area_analytic(target: SphereTarget, cam: CameraModel) -> float:
    pc = world_to_camera(target.center, cam)
    _check_depth(pc[2], target.radius)
    return float(_area_cam(pc, target.radius, cam.focal))


@dataclass(frozen=True)
class SilhouetteMask:
    """Pixel-centre coverage of a silhouette, stored over its bounding box."""

    row0: int
    col0: int
    mask: np.ndarray
    cell_area: float
    grid_shape: tuple[int, int]
    cell_u: float
    cell_v: float
    half_width: float
    half_height: float

    @cached_property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def area(self) -> float:
        return self.count * self.cell_area

    def centroid(self) -> tuple[float, float]:
        """Mean image-plane position of covered pixel centres (nan when empty)."""
        n = self.count
        if n == 0:
            return math.nan, math.nan
        cols = np.arange(self.mask.shape[1]) + self.col0 + 0.5
        rows = np.arange(self.mask.shape[0]) + self.row0 + 0.5
        u = -self.half_width + (self.mask.sum(axis=0) @ cols) / n * self.cell_u
        v = -self.half_height + (self.mask.sum(axis=1) @ rows) / n * self.cell_v
        return float(u), float(v)


def _grid(cam: CameraModel, resolution):
    res_w = int(resolution) if resolution else int(cam.image_width)
    if res_w < 1:
        raise ValueError("resolution must be positive")
    res_h = max(1, int(round(res_w * cam.image_height / cam.image_width)))
    return res_w, res_h, 2 * cam.half_width / res_w, 2 * cam.half_height / res_h


def empty_mask(cam: CameraModel, resolution=None) -> SilhouetteMask:
    res_w, res_h, du, dv = _grid(cam, resolution)
    return SilhouetteMask(0, 0, np.zeros((0, 0), bool), du * dv, (res_h, res_w), du, dv,
                          cam.half_width, cam.half_height)


def silhouette_mask(target: SphereTarget, cam: CameraModel, resolution=None) -> SilhouetteMask:
    """Rasterise the silhouette by testing the ray through every pixel centre.

    A pixel is covered when its ray passes within ``radius`` of the sphere
    centre (point-to-line distance through the cross product) and points
    towards the sphere.  Only the ellipse bounding box is evaluated.
    """
    res_w, res_h, du, dv = _grid(cam, resolution)
    pc = world_to_camera(target.center, cam)
    r = target.radius
    _check_depth(pc[2], r)
    ell = silhouette_ellipse(pc, r, cam.focal)
    hu, hv = ell.half_extents()
    hw, hh = cam.half_width, cam.half_height
    c0 = max(0, int(math.floor((ell.center_u - hu + hw) / du)) - 1)
    c1 = min(res_w, int(math.ceil((ell.center_u + hu + hw) / du)) + 1)
    r0 = max(0, int(math.floor((ell.center_v - hv + hh) / dv)) - 1)
    r1 = min(res_h, int(math.ceil((ell.center_v + hv + hh) / dv)) + 1)
    if c0 >= c1 or r0 >= r1:
        return SilhouetteMask(0, 0, np.zeros((0, 0), bool), du * dv, (res_h, res_w), du, dv, hw, hh)
    uu = (-hw + (np.arange(c0, c1) + 0.5) * du)[None, :]
    vv = (-hh + (np.arange(r0, r1) + 0.5) * dv)[:, None]
    f = cam.focal
    x, y, z = pc
    # |p x d|^2 <= r^2 |d|^2 with d = (u, v, f)
    cx = y * f - z * vv
    cy = z * uu - x * f
    cz = x * vv - y * uu
    cross2 = cx * cx + cy * cy + cz * cz
    norm2 = uu * uu + vv * vv + f * f
    front = x * uu + y * vv + z * f > 0
    mask = (cross2 <= r * r * norm2) & front
    return SilhouetteMask(r0, c0, mask, du * dv, (res_h, res_w), du, dv, hw, hh)


def projected_area_rasterized(target: SphereTarget, cam: CameraModel, resolution=None) -> float:
    """Silhouette area clipped to the image rectangle, in image-plane units^2."""
    return silhouette_mask(target, cam, resolution).area


def is_visible(target: SphereTarget, cam: CameraModel) -> bool:
    pc = world_to_camera(target.center, cam)
    return bool(visible_mask(pc[None, :], target.radius, cam)[0])


def visible_mask(pc: np.ndarray, r: float, cam: CameraModel) -> np.ndarray:
    """Centre-in-frame visibility for an ``(N, 3)`` array of camera-frame centres."""
    pc = np.atleast_2d(pc)
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    out = z > r
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(out, z * cam.focal / (z * z - r * r), 0.0)
    u0, v0 = scale * x, scale * y
    return out & (np.abs(u0) <= cam.half_width) & (np.abs(v0) <= cam.half_height)


# --- localisation -------------------------------------------------------------

class Localization(NamedTuple):
    position: np.ndarray
    residual: float
    iterations: int


def _residuals_and_jacobian(xy, areas, cams, r, z_known):
    p = np.array([xy[0], xy[1], z_known])
    res = np.empty(len(cams))
    jac = np.empty((len(cams), 2))
    for i, cam in enumerate(cams):
        pc = cam.rotation.T @ (p - cam.center)
        x, y, z = pc
        _check_depth(z, r)
        k = x * x + y * y + z * z - r * r
        dd = z * z - r * r
        c = math.pi * r * r * cam.focal ** 2
        sk = math.sqrt(k)
        res[i] = c * sk / dd ** 1.5 - areas[i]
        grad_cam = np.array([
            c * x / (sk * dd ** 1.5),
            c * y / (sk * dd ** 1.5),
            c * (z / (sk * dd ** 1.5) - 3.0 * z * sk / dd ** 2.5),
        ])
        jac[i] = (cam.rotation @ grad_cam)[:2]
    return res, jac


def _rank_deficient(jac) -> bool:
    s = np.linalg.svd(jac, compute_uv=False)
    return s.size < 2 or s[0] == 0.0 or s[-1] / s[0] < 1e-10


def _levenberg_marquardt(xy, areas, cams, r, z_known, max_iter, residual_tol):
    lam = 1e-3
    res, jac = _residuals_and_jacobian(xy, areas, cams, r, z_known)
    cost = res @ res
    for it in range(1, max_iter + 1):
        grad = jac.T @ res
        hess = jac.T @ jac
        damped = hess + lam * np.diag(np.diag(hess))
        try:
            step = np.linalg.solve(damped, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(damped, -grad, rcond=None)[0]
        step_norm = float(np.linalg.norm(step))
        try:
            res_new, jac_new = _residuals_and_jacobian(xy + step, areas, cams, r, z_known)
            cost_new = res_new @ res_new
        except DegenerateView:
            cost_new = math.inf
        if cost_new < cost:
            converged = step_norm < 1e-9 or cost - cost_new <= 1e-12 * cost
            xy, res, jac, cost = xy + step, res_new, jac_new, cost_new
            lam = max(lam / 10.0, 1e-12)
            if converged or cost == 0.0:
                return xy, math.sqrt(cost), it, True
        else:
            if step_norm < 1e-9:
                return xy, math.sqrt(cost), it, True
            lam *= 10.0
            if lam > 1e16:
                break
    return xy, math.sqrt(cost), max_iter, math.sqrt(cost) <= residual_tol


def localize_from_areas(areas, cams: Sequence[CameraModel], r: float, z_known: float, init,
                        region=None, max_iter: int = 100, restarts: int = 8,
                        residual_tol: float | None = None, seed: int = 0) -> Localization:
    """Recover the ``(x, y)`` of a sphere at height ``z_known`` from per-camera areas.

    ``areas`` is either a list of ``(camera_index, area)`` pairs indexing into
    ``cams`` or a plain sequence aligned with ``cams``.  Damped Gauss-Newton
    with an analytic Jacobian; on failure up to ``restarts`` random starts
    are drawn uniformly from ``region`` (``(x_min, x_max, y_min, y_max)``,
    default a 2 m box around ``init``).
    """
    pairs = list(areas)
    if pairs and isinstance(pairs[0], (tuple, list)):
        used = [cams[int(i)] for i, _ in pairs]
        values = np.array([float(a) for _, a in pairs])
    else:
        used = list(cams)
        values = np.asarray(pairs, dtype=np.float64)
    if len(used) < 2:
        raise DegenerateGeometry("need at least two cameras")
    if residual_tol is None:
        residual_tol = 1e-6 * max(float(np.linalg.norm(values)), 1e-12)
    init_xy = _vec3(init)[:2].copy()
    if region is None:
        region = (init_xy[0] - 1, init_xy[0] + 1, init_xy[1] - 1, init_xy[1] + 1)
    rng = np.random.default_rng(seed)
    starts = [init_xy] + [np.array([rng.uniform(region[0], region[1]),
                                    rng.uniform(region[2], region[3])]) for _ in range(restarts)]
    any_full_rank = False
    best = None
    for start in starts:
        try:
            _, jac = _residuals_and_jacobian(start, values, used, r, z_known)
        except DegenerateView:
            continue
        if _rank_deficient(jac):
            continue
        any_full_rank = True
        xy, resid, its, ok = _levenberg_marquardt(start, values, used, r, z_known, max_iter, residual_tol)
        if ok:
            return Localization(np.array([xy[0], xy[1], z_known]), resid, its)
        if best is None or resid < best[1]:
            best = (xy, resid)
    if not any_full_rank:
        raise DegenerateGeometry("Jacobian is rank deficient at every start")
    raise NoConvergence(f"no convergence after {len(starts)} starts (best residual {best[1]:.3g})")
