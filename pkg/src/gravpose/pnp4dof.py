"""Core 4-DOF estimators.

Pipeline: pre-rotate triangulated points by the roll-pitch prior, stack the
linearized projection model, solve it by ordinary least squares or by the
bias-eliminated closed form, then refine on the epipolar maximum-likelihood
cost with a (single) Gauss-Newton step.

All normal equations go through orthogonal factorizations (``lstsq``) or
pivoted solves; no explicit inverses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AmbiguousYawError,
    DegenerateGeometryError,
    InsufficientDataError,
)
from .geometry import (
    Pose4,
    StereoRig,
    compose_stereo_pose,
    homogeneous,
    pose4_to_se3,
    relative_rotation,
    rot_rp,
    rot_rp_grads,
    skew,
)
from .stereo import Correspondences

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class StateVec5:
    """Linear lift [cos psi, sin psi, t1, t2, t3] of the 4-DOF state."""

    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(5))


@dataclass(frozen=True)
class LinearSystem:
    """Stacked 2n x 5 system with the per-point rotated covariances."""

    a: np.ndarray
    b: np.ndarray
    cov_rho: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        object.__setattr__(self, "cov_rho", np.asarray(self.cov_rho, dtype=float))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(-1, 2))

    @property
    def n_points(self) -> int:
        return self.a.shape[0] // 2


@dataclass(frozen=True)
class BiasTerms:
    """Noise-expectation corrections for the normal equations."""

    g1: np.ndarray
    g2: np.ndarray


def prerotate(points: np.ndarray, covs: np.ndarray, r_rp: np.ndarray):
    """Rotate triangulated points and their covariances by the roll-pitch prior.

    rho_i = R_rp p_i, cov_rho_i = R_rp cov_i R_rp^T.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    covs = np.asarray(covs, dtype=float).reshape(-1, 3, 3)
    rho = points @ r_rp.T
    cov_rho = np.einsum("ij,njk,lk->nil", r_rp, covs, r_rp)
    return rho, cov_rho


def build_linear_system(rho: np.ndarray, cov_rho: np.ndarray, q: np.ndarray) -> LinearSystem:
    """Stack the per-point linear model A_i x = b_i.

    Row pair for point i (x = [cos psi, sin psi, t1, t2, t3]):

        [rho1, -rho2, 1, 0, -q1] x = rho3 * q1
        [rho2,  rho1, 0, 1, -q2] x = rho3 * q2
    """
    rho = np.asarray(rho, dtype=float).reshape(-1, 3)
    q = np.asarray(q, dtype=float).reshape(-1, 2)
    n = len(rho)
    if n < 3:
        raise InsufficientDataError(f"need at least 3 points, got {n}")
    a = np.zeros((2 * n, 5))
    a[0::2, 0] = rho[:, 0]
    a[0::2, 1] = -rho[:, 1]
    a[0::2, 2] = 1.0
    a[0::2, 4] = -q[:, 0]
    a[1::2, 0] = rho[:, 1]
    a[1::2, 1] = rho[:, 0]
    a[1::2, 3] = 1.0
    a[1::2, 4] = -q[:, 1]
    b = np.empty(2 * n)
    b[0::2] = rho[:, 2] * q[:, 0]
    b[1::2] = rho[:, 2] * q[:, 1]
    return LinearSystem(a=a, b=b, cov_rho=cov_rho, q=q)


def solve_ls(sys: LinearSystem) -> StateVec5:
    """Ordinary least squares; biased because A shares noise with b."""
    sv = np.linalg.svd(sys.a, compute_uv=False)
    if sv[0] <= 0 or (sv[-1] / sv[0]) ** 2 < 1.0 / _COND_LIMIT:
        raise DegenerateGeometryError("normal matrix condition number exceeds limit")
    x, *_ = np.linalg.lstsq(sys.a, sys.b, rcond=None)
    return StateVec5(x=x)


def bias_terms(sys: LinearSystem) -> BiasTerms:
    """Expectations of the noise-noise products in the normal equations.

    G1 = E[dA^T dA] / n touches only the trigonometric block; G2 =
    E[dA^T db] / n has zero last three components.
    """
    cov = sys.cov_rho
    q = sys.q
    sbar = cov.mean(axis=0)
    g1 = np.zeros((5, 5))
    g1[0, 0] = g1[1, 1] = sbar[0, 0] + sbar[1, 1]
    s13 = cov[:, 0, 2]
    s23 = cov[:, 1, 2]
    g2 = np.zeros(5)
    g2[0] = float(np.mean(s13 * q[:, 0] + s23 * q[:, 1]))
    g2[1] = float(np.mean(-s23 * q[:, 0] + s13 * q[:, 1]))
    return BiasTerms(g1=g1, g2=g2)


def solve_be(sys: LinearSystem) -> StateVec5:
    """Bias-eliminated closed-form solve; sqrt(n)-consistent."""
    n = sys.n_points
    terms = bias_terms(sys)
    m = sys.a.T @ sys.a / n - terms.g1
    v = sys.a.T @ sys.b / n - terms.g2
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[0] <= 0 or sv[-1] / sv[0] < 1.0 / _COND_LIMIT:
        raise DegenerateGeometryError("corrected normal matrix is singular")
    return StateVec5(x=np.linalg.solve(m, v))


def normalize_state(state: StateVec5) -> Pose4:
    """Collapse the 5-vector back to (psi, t)."""
    x = state.x
    if np.hypot(x[0], x[1]) < 1e-9:
        raise AmbiguousYawError("trigonometric pair too small")
    return Pose4(psi=float(np.arctan2(x[1], x[0])), t=x[2:5].copy())


# ---------------------------------------------------------------------------
# Epipolar ML cost and Gauss-Newton refinement
# ---------------------------------------------------------------------------

def _rz(psi: float) -> np.ndarray:
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rz_prime(psi: float) -> np.ndarray:
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def _line_distances(qh, zh, lines_mat):
    lines = qh @ lines_mat
    norm = np.hypot(lines[:, 0], lines[:, 1])
    norm = np.maximum(norm, 1e-300)
    d = np.sum(lines * zh, axis=1) / norm
    return lines, norm, d


def epipolar_distances(pose: Pose4, r_rp: np.ndarray, corrs: Correspondences, rig: StereoRig):
    """Signed point-to-epipolar-line distances (d_left, d_right) per point."""
    se3 = pose4_to_se3(pose, r_rp)
    se3_r = compose_stereo_pose(se3, rig)
    qh = homogeneous(corrs.q)
    _, _, d_l = _line_distances(qh, homogeneous(corrs.z), skew(se3.t) @ se3.r)
    _, _, d_r = _line_distances(qh, homogeneous(corrs.y), skew(se3_r.t) @ se3_r.r)
    return d_l, d_r


def ml_cost(pose: Pose4, r_rp: np.ndarray, corrs: Correspondences, rig: StereoRig) -> float:
    """Sum of squared epipolar distances in both keyframe images."""
    d_l, d_r = epipolar_distances(pose, r_rp, corrs, rig)
    return float(np.sum(d_l * d_l) + np.sum(d_r * d_r))


def epipolar_residual_jacobian(
    pose: Pose4,
    r_rp: np.ndarray,
    corrs: Correspondences,
    rig: StereoRig,
    theta: float | None = None,
    phi: float | None = None,
):
    """Residual vector (2n,) and its analytic Jacobian.

    Columns are (psi, t1, t2, t3) and, when ``theta``/``phi`` are given,
    two extra columns for the roll-pitch prior angles (then ``r_rp`` is
    ignored and rebuilt from the angles).
    """
    with_attitude = theta is not None
    if with_attitude:
        r_rp = rot_rp(theta, phi)
    rz = _rz(pose.psi)
    rzp = _rz_prime(pose.psi)
    r = rz @ r_rp
    t = pose.t
    rig_rl = rig.right_from_left()
    rs_t = rig_rl.r.T
    ts = rig_rl.t
    r_right = r @ rs_t
    t_right = t - r_right @ ts

    qh = homogeneous(corrs.q)
    zh = homogeneous(corrs.z)
    yh = homogeneous(corrs.y)

    n = len(corrs)
    ncols = 6 if with_attitude else 4
    jac = np.empty((2 * n, ncols))
    res = np.empty(2 * n)

    dr_dpsi = rzp @ r_rp
    eye = np.eye(3)

    # (d t / d alpha, d R / d alpha) per column for both line stacks
    cols = [(np.zeros(3), dr_dpsi)]
    cols += [(eye[j], np.zeros((3, 3))) for j in range(3)]
    if with_attitude:
        d_th, d_ph = rot_rp_grads(theta, phi)
        cols.append((np.zeros(3), rz @ d_th))
        cols.append((np.zeros(3), rz @ d_ph))

    for block, (zh_blk, r_blk, t_blk) in enumerate(
        ((zh, r, t), (yh, r_right, t_right))
    ):
        lines, norm, d = _line_distances(qh, zh_blk, skew(t_blk) @ r_blk)
        rows = slice(block * n, (block + 1) * n)
        res[rows] = d
        for k, (dt, dr) in enumerate(cols):
            if block == 1:
                dr_blk = dr @ rs_t
                dt_blk = dt - dr_blk @ ts
            else:
                dr_blk, dt_blk = dr, dt
            dlines = qh @ (skew(dt_blk) @ r_blk + skew(t_blk) @ dr_blk)
            num = np.sum(dlines * zh_blk, axis=1)
            dnorm = (lines[:, 0] * dlines[:, 0] + lines[:, 1] * dlines[:, 1]) / norm
            jac[rows, k] = num / norm - d * dnorm / norm
    return res, jac


def gn_refine(
    pose0: Pose4,
    r_rp: np.ndarray,
    corrs: Correspondences,
    rig: StereoRig,
    steps: int = 1,
) -> Pose4:
    """Gauss-Newton step(s) on the epipolar ML cost, starting from pose0.

    With a consistent initialization a single step reaches the accuracy of
    the full ML optimum.
    """
    if len(corrs) < 3:
        raise InsufficientDataError("need at least 3 correspondences")
    pose = pose0
    for _ in range(steps):
        res, jac = epipolar_residual_jacobian(pose, r_rp, corrs, rig)
        if not (np.all(np.isfinite(res)) and np.all(np.isfinite(jac))):
            raise DegenerateGeometryError("non-finite epipolar residuals")
        sv = np.linalg.svd(jac, compute_uv=False)
        if sv[0] <= 0 or (sv[-1] / sv[0]) ** 2 < 1.0 / _COND_LIMIT:
            raise DegenerateGeometryError("singular Gauss-Newton normal matrix")
        delta, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        pose = Pose4(psi=pose.psi + delta[0], t=pose.t + delta[1:4])
    return pose


def gn_refine_with_prior(
    pose0: Pose4,
    r_rp_prior: np.ndarray,
    corrs: Correspondences,
    rig: StereoRig,
    sigma_d: float,
    prior_angle_std: float,
    steps: int = 3,
) -> tuple[Pose4, np.ndarray]:
    """Joint refinement of (psi, t, theta, phi) with a roll-pitch prior.

    Epipolar residuals are whitened by ``sigma_d``; the prior angles enter
    as two pseudo-measurements with standard deviation ``prior_angle_std``.
    Returns the refined pose and the refined roll-pitch factor.  With a
    zero-uncertainty prior this reduces to :func:`gn_refine`.
    """
    if prior_angle_std <= 0:
        return gn_refine(pose0, r_rp_prior, corrs, rig, steps=1), r_rp_prior
    from .geometry import factor_yaw_rollpitch  # local import to avoid cycle noise

    e = factor_yaw_rollpitch(r_rp_prior)
    theta0, phi0 = e.theta, e.phi
    pose, theta, phi = pose0, theta0, phi0
    w_prior = 1.0 / prior_angle_std
    w_d = 1.0 / max(sigma_d, 1e-12)
    for _ in range(steps):
        res, jac = epipolar_residual_jacobian(pose, None, corrs, rig, theta=theta, phi=phi)
        if not (np.all(np.isfinite(res)) and np.all(np.isfinite(jac))):
            raise DegenerateGeometryError("non-finite epipolar residuals")
        rows = np.concatenate([res * w_d, [w_prior * (theta - theta0), w_prior * (phi - phi0)]])
        jfull = np.zeros((len(rows), 6))
        jfull[: len(res)] = jac * w_d
        jfull[len(res), 4] = w_prior
        jfull[len(res) + 1, 5] = w_prior
        sv = np.linalg.svd(jfull, compute_uv=False)
        if sv[0] <= 0 or (sv[-1] / sv[0]) ** 2 < 1.0 / _COND_LIMIT:
            raise DegenerateGeometryError("singular Gauss-Newton normal matrix")
        delta, *_ = np.linalg.lstsq(jfull, -rows, rcond=None)
        pose = Pose4(psi=pose.psi + delta[0], t=pose.t + delta[1:4])
        theta += delta[4]
        phi += delta[5]
    return pose, rot_rp(theta, phi)


def solve_pipeline(
    corrs: Correspondences,
    rig: StereoRig,
    r_rp: np.ndarray,
    sigma2: float,
) -> tuple[Pose4, Pose4, Pose4]:
    """Triangulate, solve LS and BE, refine BE by one GN step.

    Returns (ls_pose, be_pose, gn_pose); the standard single-frame pipeline.
    """
    from .stereo import triangulate_batch

    points, covs = triangulate_batch(corrs.z, corrs.y, rig, sigma2)
    rho, cov_rho = prerotate(points, covs, r_rp)
    sys = build_linear_system(rho, cov_rho, corrs.q)
    ls_pose = normalize_state(solve_ls(sys))
    be_pose = normalize_state(solve_be(sys))
    gn_pose = gn_refine(be_pose, r_rp, corrs, rig, steps=1)
    return ls_pose, be_pose, gn_pose
