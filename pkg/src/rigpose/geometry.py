"""Rotation and rigid-transform algebra shared by every pipeline.

Conventions used throughout the package:

- Rotation matrices are 3x3 with R^T R = I and det(R) = +1.
- Quaternions are (w, x, y, z); q and -q encode the same rotation and the
  serialized normal form keeps w >= 0.
- Euler angles are reported in degrees as (rx, ry, rz) for the intrinsic
  ZYX factorization R = Rz(rz) @ Ry(ry) @ Rx(rx).
- A RigidTransform maps points as x -> R @ x + t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, GimbalLock, SingularRotation

ROTATION_TOL = 1e-9


def skew(v: np.ndarray) -> np.ndarray:
    """Antisymmetric matrix of v, so that skew(v) @ w == cross(v, w)."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def is_rotation(R: np.ndarray, tol: float = ROTATION_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    ortho = np.max(np.abs(R.T @ R - np.eye(3)))
    return bool(ortho < tol and abs(np.linalg.det(R) - 1.0) < tol)


def project_to_rotation(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense (polar projection)."""
    u, _, vt = np.linalg.svd(np.asarray(R, dtype=float))
    out = u @ vt
    if np.linalg.det(out) < 0.0:
        out = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return out


def cayley_to_rotation(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of the 3-parameter Cayley vector q.

    Total on R^3; q = 0 is the identity and |q| = tan(theta / 2) for a
    rotation by theta about q's direction. 180-degree rotations are the
    only ones not reachable.
    """
    q = np.asarray(q, dtype=float)
    s = float(q @ q)
    return ((1.0 - s) * np.eye(3) + 2.0 * np.outer(q, q) + 2.0 * skew(q)) / (1.0 + s)


def rotation_to_cayley(R: np.ndarray) -> np.ndarray:
    """Inverse of cayley_to_rotation.

    Raises:
        SingularRotation: if trace(R) is within 1e-9 of -1 (180-degree
            rotation, outside the Cayley chart).
    """
    R = np.asarray(R, dtype=float)
    denom = 1.0 + float(np.trace(R))
    if denom < 1e-9:
        raise SingularRotation("180-degree rotation has no Cayley vector")
    return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / denom


def rotvec_to_rotation(w: np.ndarray) -> np.ndarray:
    """Exponential map: axis-angle 3-vector to rotation matrix."""
    w = np.asarray(w, dtype=float)
    angle = float(np.linalg.norm(w))
    K = skew(w)
    if angle < 1e-12:
        # second-order series keeps small steps accurate
        return np.eye(3) + K + 0.5 * (K @ K)
    K = K / angle
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rotation_to_quat(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 0.5 / np.sqrt(tr + 1.0)
        q = np.array([0.25 / s, (R[2, 1] - R[1, 2]) * s, (R[0, 2] - R[2, 0]) * s, (R[1, 0] - R[0, 1]) * s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    return q / np.linalg.norm(q)


def quat_to_rotation(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion (w, x, y, z)."""
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * y * y - 2 * z * z, 2 * x * y - 2 * w * z, 2 * x * z + 2 * w * y],
            [2 * x * y + 2 * w * z, 1 - 2 * x * x - 2 * z * z, 2 * y * z - 2 * w * x],
            [2 * x * z - 2 * w * y, 2 * y * z + 2 * w * x, 1 - 2 * x * x - 2 * y * y],
        ]
    )


def quat_normal_form(q: np.ndarray) -> np.ndarray:
    """Unit quaternion with non-negative scalar part."""
    q = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return -q if q[0] < 0 else q


def average_quaternions(quats: np.ndarray) -> np.ndarray:
    """Eigenvector average of unit quaternions (rows), sign-aligned first."""
    Q = np.asarray(quats, dtype=float)
    if Q.ndim != 2 or Q.shape[0] == 0:
        raise EmptyInput("no quaternions to average")
    signs = np.where(Q @ Q[0] < 0.0, -1.0, 1.0)
    Q = Q * signs[:, None]
    acc = Q.T @ Q
    eigvals, eigvecs = np.linalg.eigh(acc)
    return quat_normal_form(eigvecs[:, np.argmax(eigvals)])


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rigid map x -> rotation @ x + translation (meters)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or many points (n, 3)."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self.compose(other)).apply(x) == self.apply(other.apply(x))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def invert(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out

    def is_identity(self, tol: float = 1e-12) -> bool:
        return bool(
            np.max(np.abs(self.rotation - np.eye(3))) < tol
            and np.max(np.abs(self.translation)) < tol
        )


def average_transforms(transforms: list[RigidTransform]) -> RigidTransform:
    """Average rotations by the dominant-eigenvector quaternion method and
    translations arithmetically.

    Raises:
        EmptyInput: on an empty list.
    """
    if not transforms:
        raise EmptyInput("no transforms to average")
    quats = np.array([rotation_to_quat(T.rotation) for T in transforms])
    rotation = quat_to_rotation(average_quaternions(quats))
    translation = np.mean([T.translation for T in transforms], axis=0)
    return RigidTransform(rotation, translation)


def to_euler_zyx(R: np.ndarray) -> np.ndarray:
    """Euler angles in degrees (rx, ry, rz) with R = Rz(rz) @ Ry(ry) @ Rx(rx).

    Raises:
        GimbalLock: when the middle angle is within 1e-6 rad of +/-90 deg.
    """
    R = np.asarray(R, dtype=float)
    sy = -R[2, 0]
    sy = min(1.0, max(-1.0, sy))
    ry = np.arcsin(sy)
    if abs(abs(ry) - np.pi / 2.0) < 1e-6:
        raise GimbalLock("middle ZYX angle at +/-90 degrees")
    rx = np.arctan2(R[2, 1], R[2, 2])
    rz = np.arctan2(R[1, 0], R[0, 0])
    return np.degrees(np.array([rx, ry, rz]))


def euler_zyx_to_rotation(angles_deg: np.ndarray) -> np.ndarray:
    """Inverse of to_euler_zyx: (rx, ry, rz) in degrees to a rotation."""
    rx, ry, rz = np.radians(np.asarray(angles_deg, dtype=float))
    return rot_z(rz) @ rot_y(ry) @ rot_x(rx)


def rotation_angle(R: np.ndarray) -> float:
    """Rotation angle of R in radians, in [0, pi]."""
    c = (float(np.trace(R)) - 1.0) / 2.0
    return float(np.arccos(min(1.0, max(-1.0, c))))


def rotation_distance(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic angle in radians between two rotations."""
    return rotation_angle(np.asarray(Ra).T @ np.asarray(Rb))
