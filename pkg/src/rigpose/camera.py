"""Pinhole camera with one radial distortion term, and ray lifting for rigs.

The forward model maps a world point M through the camera pose (R, t),
world frame to camera frame, onto the image:

    [x, y, 1]^T ~ R @ M + t          (normalized coordinates)
    u = fx * x + cx,  v = fy * y + cy
    u_d = u + d * (u - cx) * r^2,  v_d = v + d * (v - cy) * r^2

with r^2 = x^2 + y^2 computed in normalized coordinates. Distortion is
inverted iteratively (fixed point, tolerance 1e-10 px, max 20 iterations).

A CameraRig holds one extrinsic transform per camera mapping that camera's
frame into the reference camera's frame; lifting a pixel through camera c
yields a ray (f, v) in the reference frame with v the camera's position and
f the unit direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, NoConvergence
from .geometry import RigidTransform, skew

MIN_DEPTH = 1e-12


@dataclass(frozen=True)
class CameraIntrinsics:
    """Focal lengths, principal point (pixels), radial coefficient, size."""

    fx: float
    fy: float
    cx: float
    cy: float
    d: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValueError("principal point outside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def replace(self, **kwargs) -> "CameraIntrinsics":
        fields = dict(fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy, d=self.d, width=self.width, height=self.height)
        fields.update(kwargs)
        return CameraIntrinsics(**fields)


@dataclass(frozen=True)
class RigCamera:
    """One rig member: intrinsics plus camera-to-reference transform."""

    intrinsics: CameraIntrinsics
    extrinsic: RigidTransform


@dataclass(frozen=True)
class CameraRig:
    """Ordered cameras; exactly the reference camera has identity extrinsic."""

    cameras: tuple[RigCamera, ...]
    reference_index: int = 0

    def __post_init__(self):
        if not self.cameras:
            raise ValueError("rig needs at least one camera")
        if not (0 <= self.reference_index < len(self.cameras)):
            raise ValueError("reference index out of range")
        identities = [i for i, cam in enumerate(self.cameras) if cam.extrinsic.is_identity(1e-12)]
        if identities != [self.reference_index]:
            raise ValueError("exactly the reference camera must have identity extrinsic")

    def __len__(self) -> int:
        return len(self.cameras)


@dataclass(frozen=True)
class GeneralizedObservation:
    """Ray (f, v) in the rig reference frame paired with a world point."""

    f: np.ndarray
    v: np.ndarray
    point: np.ndarray
    camera_index: int = 0

    def __post_init__(self):
        f = np.array(self.f, dtype=float).reshape(3)
        norm = np.linalg.norm(f)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError("ray direction must be unit length")
        v = np.array(self.v, dtype=float).reshape(3)
        point = np.array(self.point, dtype=float).reshape(3)
        for arr in (f, v, point):
            arr.setflags(write=False)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "point", point)


def distort_pixel(intr: CameraIntrinsics, pixel: np.ndarray) -> np.ndarray:
    """Apply the radial model to an undistorted pixel."""
    u, v = np.asarray(pixel, dtype=float)
    x = (u - intr.cx) / intr.fx
    y = (v - intr.cy) / intr.fy
    r2 = x * x + y * y
    return np.array([u + intr.d * (u - intr.cx) * r2, v + intr.d * (v - intr.cy) * r2])


def project(intr: CameraIntrinsics, pose: RigidTransform, point: np.ndarray) -> np.ndarray:
    """Project a world point to distorted pixel coordinates.

    Raises:
        BehindCamera: if the camera-frame depth is <= 1e-12.
    """
    pc = pose.apply(np.asarray(point, dtype=float))
    if pc[2] <= MIN_DEPTH:
        raise BehindCamera(f"depth {pc[2]:.3e} not positive")
    x, y = pc[0] / pc[2], pc[1] / pc[2]
    u = intr.fx * x + intr.cx
    v = intr.fy * y + intr.cy
    r2 = x * x + y * y
    return np.array([u + intr.d * (u - intr.cx) * r2, v + intr.d * (v - intr.cy) * r2])


def project_batch(intr: CameraIntrinsics, pose: RigidTransform, points: np.ndarray):
    """Vectorized projection.

    Returns:
        pixels: (n, 2) distorted pixels (rows with bad depth are nan).
        valid: (n,) bool mask of points with positive depth.
    """
    pc = pose.apply(np.asarray(points, dtype=float).reshape(-1, 3))
    valid = pc[:, 2] > MIN_DEPTH
    z = np.where(valid, pc[:, 2], 1.0)
    x = pc[:, 0] / z
    y = pc[:, 1] / z
    u = intr.fx * x + intr.cx
    v = intr.fy * y + intr.cy
    r2 = x * x + y * y
    pixels = np.stack([u + intr.d * (u - intr.cx) * r2, v + intr.d * (v - intr.cy) * r2], axis=1)
    pixels[~valid] = np.nan
    return pixels, valid


def project_jacobians(intr: CameraIntrinsics, pose: RigidTransform, point: np.ndarray):
    """Projection value plus analytic Jacobians.

    Returns:
        pixel: (2,) distorted pixel.
        J_intr: (2, 5) w.r.t. (fx, fy, cx, cy, d).
        J_pc: (2, 3) w.r.t. the camera-frame point, for chaining into pose
            or extrinsic parameters.

    Raises:
        BehindCamera: if the camera-frame depth is <= 1e-12.
    """
    pc = pose.apply(np.asarray(point, dtype=float))
    if pc[2] <= MIN_DEPTH:
        raise BehindCamera(f"depth {pc[2]:.3e} not positive")
    X, Y_, Z = pc
    x, y = X / Z, Y_ / Z
    r2 = x * x + y * y
    u = intr.fx * x + intr.cx
    v = intr.fy * y + intr.cy
    du, dv = u - intr.cx, v - intr.cy
    scale = 1.0 + intr.d * r2
    pixel = np.array([intr.cx + du * scale, intr.cy + dv * scale])

    # du = fx*x, dv = fy*y; pixel = c + (1 + d*r2) * (fx*x, fy*y)
    J_intr = np.zeros((2, 5))
    J_intr[0, 0] = x * scale            # d/dfx
    J_intr[1, 1] = y * scale            # d/dfy
    J_intr[0, 2] = 1.0                  # d/dcx
    J_intr[1, 3] = 1.0                  # d/dcy
    J_intr[0, 4] = du * r2              # d/dd
    J_intr[1, 4] = dv * r2

    # normalized coords w.r.t. camera point
    Jxy = np.array([[1.0 / Z, 0.0, -X / (Z * Z)], [0.0, 1.0 / Z, -Y_ / (Z * Z)]])
    dr2 = 2.0 * (x * Jxy[0] + y * Jxy[1])
    J_pc = np.empty((2, 3))
    J_pc[0] = intr.fx * scale * Jxy[0] + intr.d * du * dr2
    J_pc[1] = intr.fy * scale * Jxy[1] + intr.d * dv * dr2
    return pixel, J_intr, J_pc


def undistort_pixel(intr: CameraIntrinsics, pixel: np.ndarray, margin_scale: float = 0.5) -> np.ndarray:
    """Invert the radial model by fixed-point iteration.

    Args:
        pixel: distorted pixel, at most margin_scale*max(W, H) beyond the
            image borders.

    Raises:
        NoConvergence: residual above 1e-6 px after 20 iterations.
    """
    pixel = np.asarray(pixel, dtype=float)
    margin = margin_scale * max(intr.width, intr.height)
    if not (-margin <= pixel[0] <= intr.width + margin and -margin <= pixel[1] <= intr.height + margin):
        raise ValueError(f"pixel {pixel} too far outside the image")
    c = np.array([intr.cx, intr.cy])
    guess = pixel.copy()
    for _ in range(20):
        x = (guess[0] - intr.cx) / intr.fx
        y = (guess[1] - intr.cy) / intr.fy
        r2 = x * x + y * y
        new = (pixel + intr.d * r2 * c) / (1.0 + intr.d * r2)
        if np.max(np.abs(new - guess)) < 1e-10:
            guess = new
            break
        guess = new
    residual = np.max(np.abs(distort_pixel(intr, guess) - pixel))
    if residual > 1e-6:
        raise NoConvergence(f"undistortion residual {residual:.3e} px")
    return guess


def normalized_from_pixel(intr: CameraIntrinsics, pixel: np.ndarray) -> np.ndarray:
    """Undistort and map to normalized image coordinates (x, y)."""
    und = undistort_pixel(intr, pixel)
    return np.array([(und[0] - intr.cx) / intr.fx, (und[1] - intr.cy) / intr.fy])


def pixel_to_ray(rig: CameraRig, camera_index: int, pixel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lift a pixel of camera `camera_index` to a reference-frame ray (f, v)."""
    cam = rig.cameras[camera_index]
    x, y = normalized_from_pixel(cam.intrinsics, pixel)
    direction = cam.extrinsic.rotation @ np.array([x, y, 1.0])
    f = direction / np.linalg.norm(direction)
    return f, cam.extrinsic.translation.copy()


def lift_correspondences(rig: CameraRig, records) -> list[GeneralizedObservation]:
    """Build observations from (camera_index, pixel, world_point) records."""
    out = []
    for camera_index, pixel, point in records:
        f, v = pixel_to_ray(rig, camera_index, pixel)
        out.append(GeneralizedObservation(f=f, v=v, point=point, camera_index=camera_index))
    return out


def generalized_residual(obs: GeneralizedObservation, pose: RigidTransform) -> np.ndarray:
    """Cross-product residual [f]x (R @ M + t - v); zero iff on the ray."""
    return skew(obs.f) @ (pose.apply(obs.point) - obs.v)
