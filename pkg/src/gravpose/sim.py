"""Synthetic data generation: scenes, stereo observations with outliers,
smooth bounded-acceleration trajectories, and IMU streams.

Everything is driven by a flat :class:`SimConfig` (loadable from a plain
``key = value`` text file) and a caller-supplied seeded generator, so any
experiment is bit-reproducible from (config, seed).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError
from .fusion import GRAVITY_MSS, ImuSample
from .geometry import (
    Pose4,
    PoseSE3,
    StereoRig,
    pose4_to_se3,
    project,
    rot_rp,
    rot_yaw,
    so3_log,
)
from .stereo import Correspondences


@dataclass(frozen=True)
class SimConfig:
    """Camera rig, noise, outlier, and trajectory parameters.

    Noise densities follow datasheet conventions: white-noise densities in
    unit/sqrt(Hz), the gyro bias walk in (rad/s)/sqrt(s).  ``noise_px``
    applies to the keyframe stereo images; ``noise_px_current`` to the
    current-frame track (zero by default: the estimation model treats the
    current-frame match as the noise-free anchor).
    """

    focal_px: float = 1100.0
    image_width_px: float = 800.0
    image_height_px: float = 800.0
    baseline_x: float = 0.2
    baseline_y: float = 0.0
    baseline_z: float = 0.0
    depth_min: float = 1.0
    depth_max: float = 10.0
    noise_px: float = 2.5
    noise_px_current: float = 0.0
    outlier_ratio: float = 0.0
    n_points: int = 200
    seed: int = 42
    yaw_range_deg: float = 20.0
    rp_range_deg: float = 10.0
    t_min_m: float = 0.1
    t_max_m: float = 0.5
    rp_prior_noise_deg: float = 0.0
    fixed_scene: bool = False
    base_speed_ms: float = 0.8
    cam_rate_hz: float = 10.0
    imu_rate_hz: float = 200.0
    gyro_noise_density: float = 1.2e-4
    gyro_bias_walk: float = 3.0e-5
    accel_noise_density: float = 6.0e-4
    accel_bound_mss: float = 1.0
    duration_s: float = 150.0
    wishart_nu: float = 20.0
    fusion_points: int = 100

    def __post_init__(self):
        if self.imu_rate_hz <= 0 or self.cam_rate_hz <= 0:
            raise ValueError("rates must be positive")
        if not (0.0 < self.depth_min < self.depth_max):
            raise ValueError("depth range must be positive and ordered")
        if not 0.0 <= self.outlier_ratio < 1.0:
            raise ValueError("outlier ratio must lie in [0, 1)")

    def rig(self) -> StereoRig:
        return StereoRig(
            baseline=np.array([self.baseline_x, self.baseline_y, self.baseline_z]),
            rotation=np.eye(3),
            focal_px=self.focal_px,
            width_px=self.image_width_px,
            height_px=self.image_height_px,
        )

    @property
    def noise_sigma(self) -> float:
        return self.noise_px / self.focal_px

    @property
    def noise_sigma_current(self) -> float:
        return self.noise_px_current / self.focal_px

    def replace(self, **kw) -> "SimConfig":
        return dataclasses.replace(self, **kw)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "SimConfig":
        values = parse_config_file(path)
        values.update(overrides)
        return cls(**values)


def parse_config_file(path: str | Path) -> dict:
    """Parse a ``key = value`` config file; '#' starts a comment."""
    fields = {f.name: f.type for f in dataclasses.fields(SimConfig)}
    out: dict = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in fields:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _coerce(key, value)
    return out


def _coerce(key: str, value: str):
    f = {f.name: f for f in dataclasses.fields(SimConfig)}[key]
    if f.type in ("int", int):
        return int(value)
    if f.type in ("bool", bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"bad boolean for {key}: {value!r}")
    return float(value)


@dataclass(frozen=True)
class SyntheticFrame:
    """One simulated keyframe/current pair with ground truth attached."""

    corrs: Correspondences
    true_pose_ck: PoseSE3
    true_points: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """Ground-truth motion sampled on the IMU grid."""

    times: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    r_wi: np.ndarray
    angles: np.ndarray  # (N, 3) rows of (phi, theta, psi_w)
    omega: np.ndarray  # (N, 3) body rates, interval-constant, last repeated
    specific_force: np.ndarray  # (N, 3) in the IMU frame


@dataclass(frozen=True)
class ImuStream:
    """Measured IMU samples plus the ground truth they were drawn from."""

    samples: list[ImuSample]
    true_omega: np.ndarray
    true_specific_force: np.ndarray
    true_angles: np.ndarray
    bias: np.ndarray

    def window(self, t0: float, t1: float) -> list[ImuSample]:
        return [s for s in self.samples if t0 - 1e-12 <= s.t <= t1 + 1e-12]


def gen_scene(cfg: SimConfig, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Sample scene points in the keyframe-left frustum, visible in both
    stereo images, with exactly uniform depths."""
    n = cfg.n_points if n is None else n
    if n < 3:
        raise InsufficientDataError("need at least 3 scene points")
    rig = cfg.rig()
    hx, hy = rig.half_extent_u, rig.half_extent_v
    b = rig.baseline[0]
    depth = rng.uniform(cfg.depth_min, cfg.depth_max, n)
    u_lo = -hx + b / depth
    if np.any(u_lo >= hx):
        raise ValueError("depth range too shallow for joint stereo visibility")
    u = rng.uniform(u_lo, hx)
    v = rng.uniform(-hy, hy, n)
    return np.column_stack([u * depth, v * depth, depth])


def sample_relative_pose(cfg: SimConfig, rng: np.random.Generator):
    """Draw (Pose4, roll-pitch factor) for single-frame experiments."""
    psi = rng.uniform(-np.radians(cfg.yaw_range_deg), np.radians(cfg.yaw_range_deg))
    theta = rng.uniform(-np.radians(cfg.rp_range_deg), np.radians(cfg.rp_range_deg))
    phi = rng.uniform(-np.radians(cfg.rp_range_deg), np.radians(cfg.rp_range_deg))
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    t = direction * rng.uniform(cfg.t_min_m, cfg.t_max_m)
    return Pose4(psi=psi, t=t), rot_rp(theta, phi)


def _in_view(uv: np.ndarray, hx: float, hy: float) -> np.ndarray:
    return (np.abs(uv[:, 0]) <= hx) & (np.abs(uv[:, 1]) <= hy)


def synth_observations(
    points: np.ndarray,
    pose_ck: PoseSE3,
    cfg: SimConfig,
    rng: np.random.Generator,
) -> SyntheticFrame:
    """Project points into all three images, add noise, inject outliers.

    ``pose_ck`` maps keyframe-left points into the current camera frame.
    Points that leave any field of view are resampled (count preserved).
    Outliers replace the current-frame match with a uniform in-image point.
    """
    rig = cfg.rig()
    hx, hy = rig.half_extent_u, rig.half_extent_v
    se3 = pose_ck
    t_rl = rig.right_from_left()
    pts = np.asarray(points, dtype=float).reshape(-1, 3).copy()
    n = len(pts)

    for _ in range(10000):
        pc = se3.apply(pts)
        ok = pc[:, 2] > cfg.depth_min * 0.05
        uv = np.zeros((n, 2))
        uv[ok] = pc[ok, :2] / pc[ok, 2:3]
        good = ok.copy()
        good[ok] &= _in_view(uv[ok], hx, hy)
        if good.all():
            break
        k = int((~good).sum())
        pts[~good] = gen_scene(cfg, rng, n=max(k, 3))[:k]
    else:
        raise ValueError("could not keep the scene in view; pose too aggressive")

    z0 = project(pts)
    y0 = project(t_rl.apply(pts))
    q0 = project(se3.apply(pts))
    sig = cfg.noise_sigma
    sig_q = cfg.noise_sigma_current
    z = z0 + rng.normal(0.0, 1.0, (n, 2)) * sig
    y = y0 + rng.normal(0.0, 1.0, (n, 2)) * sig
    q = q0 + (rng.normal(0.0, 1.0, (n, 2)) * sig_q if sig_q > 0 else 0.0)

    labels = np.ones(n, dtype=bool)
    k_out = int(round(cfg.outlier_ratio * n))
    if k_out:
        idx = rng.permutation(n)[:k_out]
        q[idx, 0] = rng.uniform(-hx, hx, k_out)
        q[idx, 1] = rng.uniform(-hy, hy, k_out)
        labels[idx] = False

    corrs = Correspondences(q=q, z=z, y=y, inlier_truth=labels)
    return SyntheticFrame(corrs=corrs, true_pose_ck=se3, true_points=pts)


# ---------------------------------------------------------------------------
# Trajectory and IMU synthesis
# ---------------------------------------------------------------------------


def _acceleration_envelope(times: np.ndarray, cycle_s: float = 14.0) -> np.ndarray:
    """Alternating stationary / quasi-static / burst profile in [0, 1].

    Cycle layout: 5 s at zero, 2.5 s quasi-static (2%), then a raised-cosine
    burst.  Burst heights vary with period 10 cycles so a 150 s run sees a
    wide range of accelerations while its first and last ten seconds share
    the same phase and height (a fair drift comparison).
    """
    env = np.zeros_like(times)
    tc = np.mod(times, cycle_s)
    cyc = np.floor(times / cycle_s).astype(int)
    peak = 0.35 + 0.65 * np.mod(0.3 * cyc, 1.0)
    quasi = (tc >= 5.0) & (tc < 7.5)
    env[quasi] = 0.02
    burst = tc >= 7.5
    phase = (tc[burst] - 7.5) / (cycle_s - 7.5)
    env[burst] = 0.02 + (peak[burst] - 0.02) * 0.5 * (1.0 - np.cos(2.0 * np.pi * phase))
    return env


def gen_trajectory(cfg: SimConfig, rng: np.random.Generator) -> Trajectory:
    """Smooth trajectory with ||acceleration|| <= accel_bound everywhere.

    Velocity is a constant cruise component plus the integral of a
    low-frequency sinusoid mix shaped by the stationary / quasi-static /
    burst envelope, so consecutive frames always carry parallax while
    quasi-static windows stay near constant velocity.  Body rates are
    interval log-increments of the attitude, so integrating them reproduces
    the attitude exactly.
    """
    if cfg.duration_s <= 0:
        raise ValueError("duration must be positive")
    dt = 1.0 / cfg.imu_rate_hz
    n = int(round(cfg.duration_s * cfg.imu_rate_hz))
    times = np.arange(n) * dt

    freqs = rng.uniform(0.05, 0.25, (3, 2))
    phases = rng.uniform(0.0, 2.0 * np.pi, (3, 2))
    weights = rng.uniform(0.5, 1.0, (3, 2))
    raw = np.zeros((n, 3))
    for axis in range(3):
        for j in range(2):
            raw[:, axis] += weights[axis, j] * np.sin(
                2.0 * np.pi * freqs[axis, j] * times + phases[axis, j]
            )
    scale = np.max(np.linalg.norm(raw, axis=1))
    raw *= 0.95 / max(scale, 1e-12)
    acc = raw * (_acceleration_envelope(times) * cfg.accel_bound_mss)[:, None]

    cruise_dir = rng.normal(size=3)
    cruise_dir /= np.linalg.norm(cruise_dir)
    vel = np.zeros((n, 3))
    pos = np.zeros((n, 3))
    vel[1:] = np.cumsum(0.5 * (acc[1:] + acc[:-1]) * dt, axis=0)
    vel += cfg.base_speed_ms * cruise_dir
    pos[1:] = np.cumsum(0.5 * (vel[1:] + vel[:-1]) * dt, axis=0)

    rp_amp = np.radians(cfg.rp_range_deg) * 0.6
    yaw_amp = np.radians(cfg.yaw_range_deg)
    f_att = rng.uniform(0.02, 0.08, 3)
    ph_att = rng.uniform(0.0, 2.0 * np.pi, 3)
    phi = rp_amp * np.sin(2.0 * np.pi * f_att[0] * times + ph_att[0])
    theta = rp_amp * np.sin(2.0 * np.pi * f_att[1] * times + ph_att[1])
    psi_w = yaw_amp * np.sin(2.0 * np.pi * f_att[2] * times + ph_att[2])

    r_wi = np.empty((n, 3, 3))
    for i in range(n):
        r_wi[i] = rot_yaw(psi_w[i]) @ rot_rp(theta[i], phi[i])

    omega = np.empty((n, 3))
    for i in range(n - 1):
        omega[i] = so3_log(r_wi[i].T @ r_wi[i + 1]) / dt
    omega[-1] = omega[-2]

    g_up = np.array([0.0, 0.0, GRAVITY_MSS])
    specific_force = np.einsum("nij,nj->ni", r_wi.transpose(0, 2, 1), acc + g_up)

    angles = np.column_stack([phi, theta, psi_w])
    return Trajectory(
        times=times,
        pos=pos,
        vel=vel,
        acc=acc,
        r_wi=r_wi,
        angles=angles,
        omega=omega,
        specific_force=specific_force,
    )


def synth_imu(traj: Trajectory, cfg: SimConfig, rng: np.random.Generator) -> ImuStream:
    """Corrupt the trajectory's gyro/accel truth with white noise and a
    slowly drifting gyro bias (random walk from zero)."""
    n = len(traj.times)
    dt = float(traj.times[1] - traj.times[0]) if n > 1 else 1.0 / cfg.imu_rate_hz
    sig_g = cfg.gyro_noise_density * np.sqrt(cfg.imu_rate_hz)
    sig_a = cfg.accel_noise_density * np.sqrt(cfg.imu_rate_hz)
    steps = rng.normal(0.0, 1.0, (n, 3)) * (cfg.gyro_bias_walk * np.sqrt(dt))
    steps[0] = 0.0
    bias = np.cumsum(steps, axis=0)
    gyro = traj.omega + bias + (rng.normal(0.0, 1.0, (n, 3)) * sig_g if sig_g > 0 else 0.0)
    accel = traj.specific_force + (
        rng.normal(0.0, 1.0, (n, 3)) * sig_a if sig_a > 0 else 0.0
    )
    samples = [
        ImuSample(t=float(traj.times[i]), omega=gyro[i], accel=accel[i]) for i in range(n)
    ]
    return ImuStream(
        samples=samples,
        true_omega=traj.omega,
        true_specific_force=traj.specific_force,
        true_angles=traj.angles,
        bias=bias,
    )
