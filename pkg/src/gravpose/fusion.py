"""Gravity-prior fusion: attitude propagation, joint residuals, and the
block-coordinate solve alternating pose updates with Wishart-MAP covariance
updates.

Attitude convention: the IMU-to-world rotation factors as

    R_wi = rot_yaw(psi_w) @ rot_rp(theta, phi)

so the gravity direction seen by the accelerometer depends on (theta, phi)
only: g_body = rot_rp(theta, phi).T @ g_world.  The relative camera rotation
between the keyframe instant (k = 1) and the current instant (k = K) is
assembled as

    R_rel(psi) = rot_yaw(psi).T @ rp_factor(rot_rp(K) @ rot_rp(1).T)

matching the 4-DOF solver convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    BehindCameraError,
    FreeFallSampleError,
    InsufficientDataError,
    StreamOrderError,
)
from .geometry import (
    DEPTH_FLOOR,
    StereoRig,
    factor_yaw_rollpitch,
    relative_rotation,
    rot_rp,
    rot_rp_grads,
    rot_yaw,
    rp_factor,
    so3_exp,
)
from .stereo import Correspondences

GRAVITY_MSS = 9.81
_FREE_FALL_FLOOR = 0.1 * GRAVITY_MSS


@dataclass(frozen=True)
class ImuSample:
    """One IMU reading: timestamp (s), angular rate (rad/s), specific force (m/s^2)."""

    t: float
    omega: np.ndarray
    accel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float).reshape(3))
        object.__setattr__(self, "accel", np.asarray(self.accel, dtype=float).reshape(3))


@dataclass(frozen=True)
class GravityVector:
    """Unit gravity direction in the world frame (z points along sensed gravity)."""

    g: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float).reshape(3)
        n = np.linalg.norm(g)
        if abs(n - 1.0) > 1e-12:
            raise ValueError("gravity vector must be unit length")
        object.__setattr__(self, "g", g)


@dataclass(frozen=True)
class WishartPrior:
    """Conjugate inverse-Wishart prior on the gravity-residual covariance."""

    psi: np.ndarray
    nu: float

    def __post_init__(self):
        object.__setattr__(self, "psi", np.asarray(self.psi, dtype=float).reshape(3, 3))
        if self.nu <= 4.0:
            raise ValueError("degrees of freedom must exceed dimension + 1 = 4")

    @property
    def mode(self) -> np.ndarray:
        return self.psi / (self.nu + 4.0)

    @classmethod
    def from_mode(cls, mode: np.ndarray | float, nu: float) -> "WishartPrior":
        mode = np.asarray(mode, dtype=float)
        if mode.ndim == 0:
            mode = float(mode) * np.eye(3)
        return cls(psi=mode * (nu + 4.0), nu=nu)


@dataclass(frozen=True)
class FusionState:
    """Relative 4-DOF pose plus absolute (phi_k, theta_k) per IMU instant."""

    psi: float
    t: np.ndarray
    attitudes: np.ndarray  # (K, 2) rows of (phi_k, theta_k)

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).reshape(3))
        att = np.asarray(self.attitudes, dtype=float).reshape(-1, 2)
        if len(att) < 2:
            raise ValueError("need attitudes at the keyframe and current instants")
        object.__setattr__(self, "attitudes", att)

    @property
    def k_instants(self) -> int:
        return len(self.attitudes)


@dataclass(frozen=True)
class AttitudeTrack:
    """Propagated absolute attitude per IMU sample."""

    times: np.ndarray
    r_wi: np.ndarray  # (K, 3, 3) IMU-to-world rotations
    angles: np.ndarray  # (K, 3) rows of (phi, theta, psi_w)


@dataclass(frozen=True)
class BcdResult:
    state: FusionState
    cov_imu: np.ndarray
    degraded: bool
    rounds: int
    cost: float


def rot_rp_batch(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Stacked rot_rp matrices, shape (k, 3, 3)."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    z = np.zeros_like(ct)
    return np.stack(
        [
            np.stack([ct, -st * sp, st * cp], axis=-1),
            np.stack([z, cp, sp], axis=-1),
            np.stack([-st, -ct * sp, ct * cp], axis=-1),
        ],
        axis=-2,
    )


def relative_rotation_from_state(state: FusionState) -> np.ndarray:
    """Assemble the keyframe-to-current camera rotation from the fusion state."""
    phi1, theta1 = state.attitudes[0]
    phik, thetak = state.attitudes[-1]
    f = rp_factor(rot_rp(thetak, phik) @ rot_rp(theta1, phi1).T)
    return relative_rotation(state.psi, f)


def propagate_attitude(
    start: tuple[float, float, float], samples: Sequence[ImuSample]
) -> AttitudeTrack:
    """Integrate gyro rates from a known start attitude (phi, theta, psi_w).

    The first sample carries the start attitude; each subsequent interval
    applies the earlier sample's rate as a body-frame rotation increment.
    """
    if len(samples) < 1:
        raise InsufficientDataError("need at least one IMU sample")
    phi0, theta0, psi0 = start
    r = rot_yaw(psi0) @ rot_rp(theta0, phi0)
    times = np.array([s.t for s in samples], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise StreamOrderError("IMU timestamps must be strictly increasing")
    k = len(samples)
    r_wi = np.empty((k, 3, 3))
    angles = np.empty((k, 3))
    r_wi[0] = r
    e = factor_yaw_rollpitch(r)
    angles[0] = (e.phi, e.theta, e.psi)
    for i in range(1, k):
        dt = times[i] - times[i - 1]
        r = r @ so3_exp(samples[i - 1].omega * dt)
        r_wi[i] = r
        e = factor_yaw_rollpitch(r)
        angles[i] = (e.phi, e.theta, e.psi)
    return AttitudeTrack(times=times, r_wi=r_wi, angles=angles)


def predicted_gravity_body(attitudes: np.ndarray, g: GravityVector) -> np.ndarray:
    """Per-instant gravity direction in the IMU frame, rows rot_rp.T @ g."""
    att = np.asarray(attitudes, dtype=float).reshape(-1, 2)
    mats = rot_rp_batch(att[:, 1], att[:, 0])
    return np.einsum("kji,j->ki", mats, g.g)


def gravity_residual(phi_k: float, theta_k: float, a_k: np.ndarray, g: GravityVector) -> np.ndarray:
    """Directional gravity residual: normalized accel minus predicted gravity.

    Accepts a raw specific-force sample (normalized internally) or an
    already-unit vector.  Raises FreeFallSampleError if the raw norm cannot
    support a direction.
    """
    a = np.asarray(a_k, dtype=float).reshape(3)
    norm = np.linalg.norm(a)
    if norm < 1.0 - 1e-9 and norm < _FREE_FALL_FLOOR:
        raise FreeFallSampleError(f"accelerometer norm {norm:.3f} below floor")
    if norm == 0.0:
        raise FreeFallSampleError("zero accelerometer sample")
    a_unit = a / norm
    predicted = rot_rp(theta_k, phi_k).T @ g.g
    return a_unit - predicted


def visual_residual(state: FusionState, corr, tri, rig: StereoRig | None = None) -> np.ndarray:
    """2D reprojection residual q - h(R p + t) for one correspondence."""
    r = relative_rotation_from_state(state)
    p = np.asarray(getattr(tri, "p", tri), dtype=float).reshape(3)
    pc = r @ p + state.t
    if pc[2] <= DEPTH_FLOOR:
        raise BehindCameraError("point behind the current camera")
    q = np.asarray(getattr(corr, "q", corr), dtype=float).reshape(2)
    return q - pc[:2] / pc[2]


def sample_covariance(residuals: np.ndarray) -> np.ndarray:
    """(1/K) sum r r^T over the residual list."""
    r = np.asarray(residuals, dtype=float).reshape(-1, 3)
    if len(r) == 0:
        raise InsufficientDataError("no residuals")
    return np.einsum("ki,kj->ij", r, r) / len(r)


def wishart_map_update(prior: WishartPrior, s: np.ndarray, k: int) -> np.ndarray:
    """Posterior-mode blend of the prior scale with the sample covariance.

    Sigma = (Psi + K S) / (nu + K + d + 1), d = 3.
    """
    s = np.asarray(s, dtype=float).reshape(3, 3)
    out = (prior.psi + k * s) / (prior.nu + k + 4.0)
    return 0.5 * (out + out.T)


# ---------------------------------------------------------------------------
# Block-coordinate descent
# ---------------------------------------------------------------------------


def _coupling_pred(attitudes_i: np.ndarray, inc: np.ndarray) -> np.ndarray:
    """Roll/pitch propagated through one gyro increment (yaw factor drops out)."""
    e = factor_yaw_rollpitch(rot_rp(attitudes_i[1], attitudes_i[0]) @ inc)
    return np.array([e.phi, e.theta])


def _rp_factor_grad(attitudes: np.ndarray, h: float = 1e-7):
    """rp factor of the relative attitude and its central-difference gradients
    wrt (phi_1, theta_1, phi_K, theta_K)."""
    phi1, theta1 = attitudes[0]
    phik, thetak = attitudes[-1]

    def f_of(p1, t1, pk, tk):
        return rp_factor(rot_rp(tk, pk) @ rot_rp(t1, p1).T)

    f = f_of(phi1, theta1, phik, thetak)
    args = [phi1, theta1, phik, thetak]
    df = []
    for j in range(4):
        hi = list(args)
        lo = list(args)
        hi[j] += h
        lo[j] -= h
        df.append((f_of(*hi) - f_of(*lo)) / (2.0 * h))
    return f, df


class _JointProblem:
    """Whitened residuals and Jacobian of the joint state-covariance objective."""

    def __init__(self, corrs, points, imu_window, sigma_vis, prior, g, coupling_std):
        self.q = corrs.q
        self.n = len(corrs)
        self.points = points
        self.k = len(imu_window)
        times = np.array([s.t for s in imu_window])
        if np.any(np.diff(times) <= 0):
            raise StreamOrderError("IMU timestamps must be strictly increasing")
        self.dts = np.diff(times)
        gyro = np.array([s.omega for s in imu_window])
        accel = np.array([s.accel for s in imu_window])
        norms = np.linalg.norm(accel, axis=1)
        if np.any(norms < _FREE_FALL_FLOOR):
            raise FreeFallSampleError("window contains a free-fall accelerometer sample")
        self.a_unit = accel / norms[:, None]
        self.incs = [so3_exp(gyro[i] * self.dts[i]) for i in range(self.k - 1)]
        sigma_vis = np.asarray(sigma_vis, dtype=float).reshape(2, 2)
        self.w_vis = 1.0 / np.sqrt(max(float(sigma_vis[0, 0]), 1e-300))
        self.w_cpl = 1.0 / max(coupling_std, 1e-12)
        self.prior = prior
        self.g = g

    def residuals(self, psi, t, attitudes, li):
        f, _ = _rp_factor_grad(attitudes)
        r = relative_rotation(psi, f)
        pc = self.points @ r.T + t
        if np.any(pc[:, 2] <= DEPTH_FLOOR):
            return None
        r_vis = (self.q - pc[:, :2] / pc[:, 2:3]).reshape(-1) * self.w_vis
        r_imu_raw = self.a_unit - predicted_gravity_body(attitudes, self.g)
        r_imu = r_imu_raw @ li.T
        cpl = [
            attitudes[i + 1] - _coupling_pred(attitudes[i], self.incs[i])
            for i in range(self.k - 1)
        ]
        r_cpl = np.asarray(cpl, dtype=float).reshape(-1) * self.w_cpl
        return np.concatenate([r_vis, r_imu.reshape(-1), r_cpl])

    def imu_sample_cov(self, attitudes):
        return sample_covariance(self.a_unit - predicted_gravity_body(attitudes, self.g))

    def cost(self, psi, t, attitudes, cov, li):
        res = self.residuals(psi, t, attitudes, li)
        if res is None:
            return np.inf
        sign, logdet = np.linalg.slogdet(cov)
        if sign <= 0:
            return np.inf
        reg = (self.prior.nu + self.k + 4.0) * logdet + float(
            np.trace(self.prior.psi @ np.linalg.inv(cov))
        )
        return float(res @ res) + reg

    def jacobian(self, psi, t, attitudes, li):
        n, k = self.n, self.k
        dim = 4 + 2 * k
        nrows = 2 * n + 3 * k + 2 * (k - 1)
        jac = np.zeros((nrows, dim))
        f, df = _rp_factor_grad(attitudes)
        rz = rot_yaw(psi).T
        r = rz @ f
        pc = self.points @ r.T + t
        z_inv = 1.0 / pc[:, 2]

        def proj_rows(dpc):
            du = dpc[:, 0] * z_inv - pc[:, 0] * z_inv**2 * dpc[:, 2]
            dv = dpc[:, 1] * z_inv - pc[:, 1] * z_inv**2 * dpc[:, 2]
            return du, dv

        c, s = np.cos(psi), np.sin(psi)
        rz_prime = np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])
        du, dv = proj_rows(self.points @ (rz_prime @ f).T)
        jac[0 : 2 * n : 2, 0] = -du * self.w_vis
        jac[1 : 2 * n : 2, 0] = -dv * self.w_vis
        for j in range(3):
            dpc = np.zeros_like(pc)
            dpc[:, j] = 1.0
            du, dv = proj_rows(dpc)
            jac[0 : 2 * n : 2, 1 + j] = -du * self.w_vis
            jac[1 : 2 * n : 2, 1 + j] = -dv * self.w_vis
        endpoint_cols = (
            (4, df[0]),
            (5, df[1]),
            (4 + 2 * (k - 1), df[2]),
            (4 + 2 * (k - 1) + 1, df[3]),
        )
        for col, dfj in endpoint_cols:
            du, dv = proj_rows(self.points @ (rz @ dfj).T)
            jac[0 : 2 * n : 2, col] += -du * self.w_vis
            jac[1 : 2 * n : 2, col] += -dv * self.w_vis

        # gravity rows: d(-ghat)/d(phi, theta), whitened by li
        for i in range(k):
            d_theta, d_phi = rot_rp_grads(attitudes[i, 1], attitudes[i, 0])
            rows = slice(2 * n + 3 * i, 2 * n + 3 * i + 3)
            jac[rows, 4 + 2 * i] = li @ (-(d_phi.T @ self.g.g))
            jac[rows, 4 + 2 * i + 1] = li @ (-(d_theta.T @ self.g.g))

        # coupling rows
        h = 1e-7
        base = 2 * n + 3 * k
        for i in range(k - 1):
            rows = slice(base + 2 * i, base + 2 * i + 2)
            jac[rows.start, 4 + 2 * (i + 1)] = self.w_cpl
            jac[rows.start + 1, 4 + 2 * (i + 1) + 1] = self.w_cpl
            for jj in range(2):
                hi = attitudes[i].copy()
                lo = attitudes[i].copy()
                hi[jj] += h
                lo[jj] -= h
                dpred = (
                    _coupling_pred(hi, self.incs[i]) - _coupling_pred(lo, self.incs[i])
                ) / (2.0 * h)
                jac[rows, 4 + 2 * i + jj] = -dpred * self.w_cpl
        return jac


def bcd_solve(
    init: FusionState,
    corrs: Correspondences,
    points: np.ndarray,
    imu_window: Sequence[ImuSample],
    sigma_vis: np.ndarray,
    prior: WishartPrior,
    g: GravityVector,
    coupling_std: float = 1e-5,
    max_rounds: int = 20,
    tol: float = 1e-8,
) -> BcdResult:
    """Alternate Gauss-Newton state updates with Wishart-MAP covariance updates.

    The joint objective is the whitened visual/gravity/coupling quadratic plus
    the covariance log-determinant and inverse-Wishart prior terms, so the
    covariance step (its exact minimizer) never increases it; the state step
    backtracks until it does not either.  On a singular or non-finite state
    step the last valid iterate is returned with ``degraded=True``.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(corrs) < 3:
        raise InsufficientDataError("need at least 3 inlier correspondences")
    if len(imu_window) < 2:
        raise InsufficientDataError("need at least 2 IMU instants")
    if init.k_instants != len(imu_window):
        raise ValueError("init attitudes must match the IMU window length")

    prob = _JointProblem(corrs, points, imu_window, sigma_vis, prior, g, coupling_std)

    def whitener(cov):
        return np.linalg.inv(np.linalg.cholesky(cov))

    psi = float(init.psi)
    t = init.t.copy()
    attitudes = init.attitudes.copy()
    cov = prior.mode.copy()
    li = whitener(cov)
    cost = prob.cost(psi, t, attitudes, cov, li)
    degraded = not np.isfinite(cost)
    rounds_done = 0

    for _ in range(max_rounds):
        rounds_done += 1
        res = prob.residuals(psi, t, attitudes, li)
        if res is None:
            degraded = True
            break
        jac = prob.jacobian(psi, t, attitudes, li)
        if not (np.all(np.isfinite(jac)) and np.all(np.isfinite(res))):
            degraded = True
            break
        try:
            delta, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        except np.linalg.LinAlgError:
            degraded = True
            break
        if not np.all(np.isfinite(delta)):
            degraded = True
            break

        step = 1.0
        accepted = False
        for _bt in range(8):
            d = delta * step
            cand = (psi + d[0], t + d[1:4], attitudes + d[4:].reshape(-1, 2))
            cost_n = prob.cost(*cand, cov, li)
            if cost_n <= cost + 1e-15:
                psi, t, attitudes = cand
                cost = cost_n
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break

        cov = wishart_map_update(prior, prob.imu_sample_cov(attitudes), prob.k)
        li = whitener(cov)
        cost = prob.cost(psi, t, attitudes, cov, li)

        if np.max(np.abs(delta * step)) < tol:
            break

    state = FusionState(psi=psi, t=t, attitudes=attitudes)
    return BcdResult(
        state=state, cov_imu=cov, degraded=degraded, rounds=rounds_done, cost=float(cost)
    )
