"""Rotation parameterizations, pinhole projection, and epipolar machinery.

Conventions
-----------
A transform ``T_BA = (R, t)`` maps points via ``p_B = R @ p_A + t``; its
inverse is ``(R.T, -R.T @ t)``.  Image points are in normalized coordinates
(pixels divided by focal length, principal point at the origin).

The yaw factor ``rot_yaw(psi)`` and the roll-pitch factor ``rot_rp(theta,
phi)`` multiply as ``R = rot_yaw(psi) @ rot_rp(theta, phi)``.  Note that
``rot_yaw`` is the transpose of the usual right-handed z-rotation; the
relative camera rotation of a 4-DOF pose is assembled with the transposed
yaw factor (see :func:`relative_rotation`), which is the convention under
which the linearized solver stencil in :mod:`gravpose.pnp4dof` is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateEpipolarError,
    DegenerateFactorizationError,
    DegenerateLineError,
)

DEPTH_FLOOR = 1e-6


@dataclass(frozen=True)
class EulerYRP:
    """Yaw/pitch/roll angles (rad) of the factorization R = R_psi @ R_theta_phi."""

    psi: float
    theta: float
    phi: float


@dataclass(frozen=True)
class Pose4:
    """4-DOF relative pose: yaw angle (rad) plus translation (m)."""

    psi: float
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).reshape(3))


@dataclass(frozen=True)
class PoseSE3:
    """Rigid transform (R, t) mapping p -> R @ p + t."""

    r: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float).reshape(3, 3))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).reshape(3))

    def apply(self, p: np.ndarray) -> np.ndarray:
        return np.asarray(p, dtype=float) @ self.r.T + self.t

    def compose(self, other: "PoseSE3") -> "PoseSE3":
        """self after other: maps other's source frame into self's target."""
        return PoseSE3(self.r @ other.r, self.r @ other.t + self.t)

    def inverse(self) -> "PoseSE3":
        return PoseSE3(self.r.T, -self.r.T @ self.t)


@dataclass(frozen=True)
class StereoRig:
    """Rectified-by-default stereo rig.

    ``baseline`` is the position of the right camera expressed in the left
    camera frame (m); ``rotation`` orients the right camera in the left
    frame.  For the identity rotation and a pure-x baseline ``[b, 0, 0]``
    a scene point at depth Z sees a disparity ``u_left - u_right = b / Z``.
    """

    baseline: np.ndarray = field(default_factory=lambda: np.array([0.2, 0.0, 0.0]))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    focal_px: float = 1100.0
    width_px: float = 800.0
    height_px: float = 800.0

    def __post_init__(self):
        object.__setattr__(self, "baseline", np.asarray(self.baseline, dtype=float).reshape(3))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))
        if self.focal_px <= 0:
            raise ValueError("focal length must be positive")
        if np.linalg.norm(self.baseline) == 0:
            raise ValueError("baseline translation must be nonzero")

    @property
    def half_extent_u(self) -> float:
        return 0.5 * self.width_px / self.focal_px

    @property
    def half_extent_v(self) -> float:
        return 0.5 * self.height_px / self.focal_px

    def is_rectified(self, tol: float = 1e-12) -> bool:
        return (
            np.allclose(self.rotation, np.eye(3), atol=tol)
            and abs(self.baseline[1]) <= tol
            and abs(self.baseline[2]) <= tol
            and self.baseline[0] > 0
        )

    def right_from_left(self) -> PoseSE3:
        """Transform mapping left-camera points into the right camera frame."""
        return PoseSE3(self.rotation, self.baseline).inverse()


def rot_yaw(psi: float) -> np.ndarray:
    """Yaw factor of the rotation split (transpose of the common z-rotation)."""
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_rp(theta: float, phi: float) -> np.ndarray:
    """Combined pitch/roll factor of the rotation split."""
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    return np.array(
        [
            [ct, -st * sp, st * cp],
            [0.0, cp, sp],
            [-st, -ct * sp, ct * cp],
        ]
    )


def rot_rp_grads(theta: float, phi: float) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of rot_rp with respect to theta and phi."""
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    d_theta = np.array(
        [
            [-st, -ct * sp, ct * cp],
            [0.0, 0.0, 0.0],
            [-ct, st * sp, -st * cp],
        ]
    )
    d_phi = np.array(
        [
            [0.0, -st * cp, -st * sp],
            [0.0, -sp, cp],
            [0.0, -ct * cp, -ct * sp],
        ]
    )
    return d_theta, d_phi


def factor_yaw_rollpitch(r: np.ndarray) -> EulerYRP:
    """Split R into rot_yaw(psi) @ rot_rp(theta, phi).

    Raises DegenerateFactorizationError at gimbal lock (|R[2,0]| ~ 1).
    """
    r = np.asarray(r, dtype=float)
    s = -r[2, 0]
    if abs(s) >= 1.0 - 1e-9:
        raise DegenerateFactorizationError("pitch at +-pi/2, factorization not unique")
    theta = np.arcsin(s)
    phi = np.arctan2(-r[2, 1], r[2, 2])
    m = r @ rot_rp(theta, phi).T
    # first column of rot_yaw is [cos, -sin, 0]
    psi = np.arctan2(-m[1, 0], m[0, 0])
    return EulerYRP(psi=float(psi), theta=float(theta), phi=float(phi))


def rp_factor(r: np.ndarray) -> np.ndarray:
    """Roll-pitch factor of r, discarding the yaw factor."""
    e = factor_yaw_rollpitch(r)
    return rot_rp(e.theta, e.phi)


def relative_rotation(psi: float, r_rp: np.ndarray) -> np.ndarray:
    """Relative camera rotation of a 4-DOF pose given the roll-pitch factor.

    The yaw is applied as ``rot_yaw(psi).T`` (a standard right-handed
    z-rotation); with this convention the linear solver stencil reproduces
    noise-free data exactly.
    """
    return rot_yaw(psi).T @ r_rp


def pose4_to_se3(pose: Pose4, r_rp: np.ndarray) -> PoseSE3:
    return PoseSE3(relative_rotation(pose.psi, r_rp), pose.t)


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def project(p: np.ndarray) -> np.ndarray:
    """Pinhole projection onto the normalized image plane.

    Accepts a single 3-vector or an (n, 3) batch.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = p.reshape(-1, 3)
    if np.any(pts[:, 2] <= DEPTH_FLOOR):
        raise BehindCameraError("depth at or below the floor")
    uv = pts[:, :2] / pts[:, 2:3]
    return uv[0] if single else uv


def backproject(uv: np.ndarray, depth) -> np.ndarray:
    """Lift normalized image points to 3D at the given depth(s)."""
    uv = np.asarray(uv, dtype=float)
    single = uv.ndim == 1
    uv2 = uv.reshape(-1, 2)
    d = np.broadcast_to(np.asarray(depth, dtype=float), (uv2.shape[0],))
    p = np.column_stack([uv2 * d[:, None], d])
    return p[0] if single else p


def homogeneous(uv: np.ndarray) -> np.ndarray:
    uv = np.asarray(uv, dtype=float)
    single = uv.ndim == 1
    uv2 = uv.reshape(-1, 2)
    h = np.column_stack([uv2, np.ones(uv2.shape[0])])
    return h[0] if single else h


def epipolar_line(q: np.ndarray, pose: PoseSE3) -> np.ndarray:
    """Epipolar line(s) in the source image of ``pose`` for target points q.

    l = ([t]x R).T @ q_h, for q a 2-vector or an (n, 2) batch.
    """
    if np.linalg.norm(pose.t) == 0:
        raise DegenerateEpipolarError("zero translation")
    qh = homogeneous(q)
    m = skew(pose.t) @ pose.r
    return qh @ m


def epipolar_distance(line: np.ndarray, pt: np.ndarray) -> np.ndarray:
    """Signed normal distance from point(s) to epipolar line(s)."""
    line = np.asarray(line, dtype=float)
    single = line.ndim == 1
    lines = line.reshape(-1, 3)
    norm = np.hypot(lines[:, 0], lines[:, 1])
    if np.any(norm == 0):
        raise DegenerateLineError("line at infinity")
    d = np.sum(lines * homogeneous(pt).reshape(-1, 3), axis=1) / norm
    return float(d[0]) if single else d


def compose_stereo_pose(pose_ck: PoseSE3, rig: StereoRig) -> PoseSE3:
    """Transform from the keyframe-right camera to the current camera.

    T_C_KR = T_C_K @ (T_KR_K)^-1 where T_KR_K maps keyframe-left points
    into the keyframe-right frame.
    """
    return pose_ck.compose(rig.right_from_left().inverse())


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    w = -((-np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi)
    return float(w) if np.isscalar(a) else w


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues exponential of a rotation vector."""
    w = np.asarray(w, dtype=float).reshape(3)
    angle = np.linalg.norm(w)
    k = skew(w)
    if angle < 1e-10:
        return np.eye(3) + k + 0.5 * (k @ k)
    a = np.sin(angle) / angle
    b = (1.0 - np.cos(angle)) / (angle * angle)
    return np.eye(3) + a * k + b * (k @ k)


def so3_log(r: np.ndarray) -> np.ndarray:
    """Rotation vector of r; inverse of :func:`so3_exp` away from pi."""
    r = np.asarray(r, dtype=float)
    cos_angle = np.clip(0.5 * (np.trace(r) - 1.0), -1.0, 1.0)
    angle = np.arccos(cos_angle)
    v = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if angle < 1e-10:
        return v
    if np.pi - angle < 1e-6:
        # near pi: axis from the symmetric part
        m = 0.5 * (r + np.eye(3))
        axis = np.sqrt(np.maximum(np.diag(m), 0.0))
        idx = int(np.argmax(axis))
        axis = m[:, idx] / max(axis[idx], 1e-12)
        axis /= np.linalg.norm(axis)
        if np.dot(axis, v) < 0:
            axis = -axis
        return axis * angle
    return v * angle / np.sin(angle)
