"""Consistent 2D noise-variance estimation and rectified stereo triangulation.

Triangulation is the direct rectified closed form: depth from horizontal
disparity, X/Y from the left ray.  The reported 3x3 covariance is the
first-order propagation of isotropic 2D noise through the analytic Jacobian
with respect to (z_u, z_v, y_u, y_v).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, NonPositiveDisparityError, UnsupportedRigError
from .geometry import StereoRig

DISPARITY_FLOOR = 1e-6


@dataclass(frozen=True)
class Correspondence:
    """One tracked feature: current-left q, keyframe-left z, keyframe-right y."""

    q: np.ndarray
    z: np.ndarray
    y: np.ndarray
    is_inlier_truth: bool | None = None

    def __post_init__(self):
        for name in ("q", "z", "y"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(2))


@dataclass(frozen=True)
class Correspondences:
    """Column-major batch of correspondences; the shape all estimators consume."""

    q: np.ndarray
    z: np.ndarray
    y: np.ndarray
    inlier_truth: np.ndarray | None = None

    def __post_init__(self):
        for name in ("q", "z", "y"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1, 2))
        if len(self.z) != len(self.q) or len(self.y) != len(self.q):
            raise ValueError("q, z, y must have equal length")
        if self.inlier_truth is not None:
            object.__setattr__(
                self, "inlier_truth", np.asarray(self.inlier_truth, dtype=bool).reshape(-1)
            )

    def __len__(self) -> int:
        return len(self.q)

    def take(self, idx) -> "Correspondences":
        truth = None if self.inlier_truth is None else self.inlier_truth[idx]
        return Correspondences(q=self.q[idx], z=self.z[idx], y=self.y[idx], inlier_truth=truth)

    @classmethod
    def from_items(cls, items) -> "Correspondences":
        items = list(items)
        truth = [c.is_inlier_truth for c in items]
        return cls(
            q=np.array([c.q for c in items]),
            z=np.array([c.z for c in items]),
            y=np.array([c.y for c in items]),
            inlier_truth=None if any(t is None for t in truth) else np.array(truth, dtype=bool),
        )


@dataclass(frozen=True)
class TriPoint:
    """Triangulated point in the keyframe-left frame with its covariance."""

    p: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(3))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float).reshape(3, 3))


def estimate_noise_variance(z: np.ndarray, y: np.ndarray, rig: StereoRig) -> float:
    """Estimate the per-axis 2D noise variance from rectified stereo pairs.

    On a rectified rig corresponding rows are equal, so v_z - v_y is pure
    noise with variance 2 sigma^2 and

        sigma2_hat = (1 / 2n) * sum (v_z - v_y)^2

    is consistent under the i.i.d. isotropic model.
    """
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    y = np.asarray(y, dtype=float).reshape(-1, 2)
    if len(z) != len(y):
        raise ValueError("z and y must pair up")
    if len(z) < 10:
        raise InsufficientDataError(f"need at least 10 pairs, got {len(z)}")
    if not rig.is_rectified():
        raise UnsupportedRigError("noise-variance estimator requires a rectified rig")
    dv = z[:, 1] - y[:, 1]
    return float(np.mean(dv * dv) / 2.0)


def triangulate_batch(
    z: np.ndarray, y: np.ndarray, rig: StereoRig, sigma2: float
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized rectified triangulation.

    Returns (points (n, 3), covariances (n, 3, 3)) in the keyframe-left frame.
    Raises NonPositiveDisparityError if any disparity is at or below the floor.
    """
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    y = np.asarray(y, dtype=float).reshape(-1, 2)
    if not rig.is_rectified():
        raise UnsupportedRigError("triangulation implemented for rectified rigs only")
    b = rig.baseline[0]
    d = z[:, 0] - y[:, 0]
    if np.any(d <= DISPARITY_FLOOR):
        raise NonPositiveDisparityError("disparity at or below the floor")
    depth = b / d
    p = np.column_stack([z[:, 0] * depth, z[:, 1] * depth, depth])
    # Jacobian of p wrt (z_u, z_v, y_u, y_v); y_v does not enter.
    n = len(z)
    jac = np.zeros((n, 3, 4))
    bd2 = b / (d * d)
    jac[:, 0, 0] = -y[:, 0] * bd2
    jac[:, 0, 2] = z[:, 0] * bd2
    jac[:, 1, 0] = -z[:, 1] * bd2
    jac[:, 1, 1] = depth
    jac[:, 1, 2] = z[:, 1] * bd2
    jac[:, 2, 0] = -bd2
    jac[:, 2, 2] = bd2
    cov = sigma2 * np.einsum("nij,nkj->nik", jac, jac)
    return p, cov


def triangulate(z: np.ndarray, y: np.ndarray, rig: StereoRig, sigma2: float) -> TriPoint:
    """Triangulate a single rectified stereo observation pair."""
    p, cov = triangulate_batch(
        np.asarray(z, dtype=float).reshape(1, 2),
        np.asarray(y, dtype=float).reshape(1, 2),
        rig,
        sigma2,
    )
    return TriPoint(p=p[0], cov=cov[0])
