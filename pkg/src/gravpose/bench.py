"""Monte Carlo harness: CRLB oracle, estimator benchmarks, the 5-point
baseline fixture, the drift experiment, and CSV emission.

Seeding: every trial owns a generator built from ``SeedSequence((seed,
tag, trial))`` with integer tags, so each command is bit-reproducible and
trials are independent.

The 5-point essential-matrix baseline is a comparison fixture only.  Its
minimal kernel and final polish are delegated to OpenCV; sampling, scoring
and the adaptive iteration bound share the same Python harness as the
3-point pipeline so wall-clock differences reflect algorithmic cost.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .consensus import RansacParams, classify_inliers, ransac_4dof, required_iterations
from .errors import (
    CsvWriteError,
    DegenerateGeometryError,
    GravposeError,
)
from .fusion import (
    GRAVITY_MSS,
    FusionState,
    GravityVector,
    WishartPrior,
    bcd_solve,
    propagate_attitude,
    relative_rotation_from_state,
)
from .geometry import (
    Pose4,
    PoseSE3,
    StereoRig,
    factor_yaw_rollpitch,
    pose4_to_se3,
    project,
    rot_rp,
    rot_yaw,
    rp_factor,
    wrap_angle,
)
from .pnp4dof import epipolar_residual_jacobian, solve_pipeline
from .sim import (
    SimConfig,
    SyntheticFrame,
    gen_scene,
    gen_trajectory,
    sample_relative_pose,
    synth_imu,
    synth_observations,
)
from .stereo import Correspondences, estimate_noise_variance


@dataclass(frozen=True)
class McResult:
    """Tabular experiment output: a stable column tuple plus one row per record."""

    columns: tuple[str, ...]
    rows: list[tuple]
    meta: dict = field(default_factory=dict)


def _rng(*tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(tuple(int(t) for t in tag)))


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".12g")


def emit_csv(result: McResult, path) -> None:
    """Write header plus one row per record; floats at 12 significant digits."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(result.columns)
            for row in result.rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as err:
        raise CsvWriteError(f"{path}: {err}") from err


# ---------------------------------------------------------------------------
# CRLB oracle
# ---------------------------------------------------------------------------


def crlb_4dof(
    points: np.ndarray,
    pose: Pose4,
    r_rp: np.ndarray,
    rig: StereoRig,
    sigma2: float,
) -> np.ndarray:
    """4x4 lower bound sigma^2 (J^T J)^-1 of the epipolar residual model.

    J stacks the derivatives of every point-to-line distance (both keyframe
    images) with respect to (psi, t) at the true pose on noise-free data.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    se3 = pose4_to_se3(pose, r_rp)
    corrs = Correspondences(
        q=project(se3.apply(points)),
        z=project(points),
        y=project(rig.right_from_left().apply(points)),
    )
    _, jac = epipolar_residual_jacobian(pose, r_rp, corrs, rig)
    info = jac.T @ jac
    sv = np.linalg.svd(info, compute_uv=False)
    if sv[0] <= 0 or sv[-1] / sv[0] < 1e-14:
        raise DegenerateGeometryError("singular information matrix")
    return sigma2 * np.linalg.inv(info)


# ---------------------------------------------------------------------------
# Consistency / CRLB-attainment experiment
# ---------------------------------------------------------------------------

MC_PNP_COLUMNS = (
    "n",
    "runs",
    "failures",
    "rmse_yaw_ls",
    "rmse_t_ls",
    "rmse_yaw_be",
    "rmse_t_be",
    "rmse_yaw_gn",
    "rmse_t_gn",
    "rmse_tx_gn",
    "rmse_ty_gn",
    "rmse_tz_gn",
    "bias_yaw_ls",
    "bias_t_ls",
    "bias_yaw_be",
    "bias_t_be",
    "crlb_yaw",
    "crlb_tx",
    "crlb_ty",
    "crlb_tz",
)


def _clean_frame(points, pose, r_rp, cfg) -> tuple[np.ndarray, ...]:
    """Noise-free projections of a kept-in-view scene."""
    rig = cfg.rig()
    se3 = pose4_to_se3(pose, r_rp)
    return (
        project(se3.apply(points)),
        project(points),
        project(rig.right_from_left().apply(points)),
    )


def run_mc_pnp(cfg: SimConfig, n_grid: tuple[int, ...], runs: int = 700) -> McResult:
    """RMSE/bias of LS, BE, one-step GN per point count, plus the CRLB.

    With ``cfg.fixed_scene`` one scene and pose are drawn per grid entry
    (noise-only Monte Carlo; the CRLB column is that scene's bound, which is
    the comparison the bound licenses).  Otherwise scene and pose are
    redrawn per trial and the CRLB column averages the per-trial bounds.
    """
    rig = cfg.rig()
    sigma_rp = np.radians(cfg.rp_prior_noise_deg)
    rows = []
    for gi, n in enumerate(n_grid):
        cfg_n = cfg.replace(n_points=int(n))
        fixed = None
        if cfg.fixed_scene:
            if cfg.outlier_ratio > 0:
                raise ValueError("fixed-scene protocol is noise-only; set outlier_ratio = 0")
            rng = _rng(cfg.seed, 11, gi)
            pose, r_rp = sample_relative_pose(cfg_n, rng)
            clean = cfg_n.replace(noise_px=0.0, noise_px_current=0.0, outlier_ratio=0.0)
            frame = synth_observations(gen_scene(cfg_n, rng), pose4_to_se3(pose, r_rp), clean, rng)
            fixed = (frame.true_points, pose, r_rp)
        errs = {k: [] for k in ("ls", "be", "gn")}
        crlb_diags = []
        failures = 0
        for i in range(runs):
            rng = _rng(cfg.seed, 12, gi, i)
            try:
                if fixed is not None:
                    points, pose, r_rp = fixed
                    q0, z0, y0 = _clean_frame(points, pose, r_rp, cfg_n)
                    sig = cfg_n.noise_sigma
                    corrs = Correspondences(
                        q=q0,
                        z=z0 + rng.normal(0.0, 1.0, z0.shape) * sig,
                        y=y0 + rng.normal(0.0, 1.0, y0.shape) * sig,
                    )
                else:
                    pose, r_rp = sample_relative_pose(cfg_n, rng)
                    frame = synth_observations(
                        gen_scene(cfg_n, rng), pose4_to_se3(pose, r_rp), cfg_n, rng
                    )
                    corrs = frame.corrs
                    points = frame.true_points
                    crlb_diags.append(
                        np.diag(crlb_4dof(points, pose, r_rp, rig, cfg_n.noise_sigma**2))
                    )
                rp_used = r_rp
                if sigma_rp > 0:
                    e = factor_yaw_rollpitch(r_rp)
                    rp_used = rot_rp(
                        e.theta + rng.normal(0.0, sigma_rp), e.phi + rng.normal(0.0, sigma_rp)
                    )
                sigma2_hat = estimate_noise_variance(corrs.z, corrs.y, rig)
                ls, be, gn = solve_pipeline(corrs, rig, rp_used, sigma2_hat)
                for tag, est in (("ls", ls), ("be", be), ("gn", gn)):
                    errs[tag].append(
                        [wrap_angle(est.psi - pose.psi), *(est.t - pose.t)]
                    )
            except GravposeError:
                failures += 1
        if fixed is not None:
            points, pose, r_rp = fixed
            crlb_diags = [np.diag(crlb_4dof(points, pose, r_rp, rig, cfg_n.noise_sigma**2))]
        crlb_diag = np.mean(np.asarray(crlb_diags), axis=0)
        stats = {}
        for tag, v in errs.items():
            e = np.asarray(v)
            stats[tag] = dict(
                rmse_yaw=np.sqrt(np.mean(e[:, 0] ** 2)),
                rmse_t=np.sqrt(np.mean(np.sum(e[:, 1:] ** 2, axis=1))),
                rmse_axes=np.sqrt(np.mean(e[:, 1:] ** 2, axis=0)),
                bias_yaw=abs(np.mean(e[:, 0])),
                bias_t=np.linalg.norm(np.mean(e[:, 1:], axis=0)),
            )
        rows.append(
            (
                int(n),
                runs,
                failures,
                stats["ls"]["rmse_yaw"],
                stats["ls"]["rmse_t"],
                stats["be"]["rmse_yaw"],
                stats["be"]["rmse_t"],
                stats["gn"]["rmse_yaw"],
                stats["gn"]["rmse_t"],
                *stats["gn"]["rmse_axes"],
                stats["ls"]["bias_yaw"],
                stats["ls"]["bias_t"],
                stats["be"]["bias_yaw"],
                stats["be"]["bias_t"],
                np.sqrt(crlb_diag[0]),
                np.sqrt(crlb_diag[1]),
                np.sqrt(crlb_diag[2]),
                np.sqrt(crlb_diag[3]),
            )
        )
    return McResult(columns=MC_PNP_COLUMNS, rows=rows, meta={"seed": cfg.seed, "runs": runs})


# ---------------------------------------------------------------------------
# Five-point essential-matrix baseline fixture
# ---------------------------------------------------------------------------


def _epi_dists_essential(e_mat: np.ndarray, z: np.ndarray, q: np.ndarray):
    zh = np.column_stack([z, np.ones(len(z))])
    qh = np.column_stack([q, np.ones(len(q))])
    l_key = qh @ e_mat  # line in the keyframe image per current point
    l_cur = zh @ e_mat.T
    alg = np.sum(l_key * zh, axis=1)
    n1 = np.maximum(np.hypot(l_key[:, 0], l_key[:, 1]), 1e-300)
    n2 = np.maximum(np.hypot(l_cur[:, 0], l_cur[:, 1]), 1e-300)
    return np.abs(alg) / n1, np.abs(alg) / n2


def five_point_baseline(
    corrs: Correspondences,
    tau: float,
    seed: int,
    confidence: float = 0.99,
    max_iters: int = 2000,
):
    """RANSAC around OpenCV's 5-point kernel on (keyframe-left, current) pairs.

    Returns (rotation, unit translation, inlier mask, iterations).  Scoring
    uses symmetric point-to-epipolar-line distances with the same threshold
    semantics as the 3-point pipeline.
    """
    import cv2

    cv2.setRNGSeed(int(seed) & 0x7FFFFFFF)
    z, q = corrs.z, corrs.q
    n = len(corrs)
    rng = _rng(seed, 77)
    best = None
    bound = max_iters
    iters = 0
    while iters < min(bound, max_iters):
        iters += 1
        sel = rng.choice(n, size=5, replace=False)
        cands = cv2.findEssentialMat(
            z[sel], q[sel], np.eye(3), method=cv2.RANSAC, prob=0.999, threshold=1e-3
        )[0]
        if cands is None:
            continue
        for j in range(cands.shape[0] // 3):
            e_mat = cands[3 * j : 3 * j + 3]
            d1, d2 = _epi_dists_essential(e_mat, z, q)
            mask = (d1 <= tau) & (d2 <= tau)
            count = int(mask.sum())
            if best is None or count > best[0]:
                best = (count, e_mat, mask)
                bound = required_iterations(confidence, count / n, 5)
    if best is None or best[0] < 5:
        raise DegenerateGeometryError("five-point baseline found no consensus")
    count, e_mat, mask = best
    refit = cv2.findEssentialMat(z[mask], q[mask], np.eye(3), method=cv2.LMEDS)[0]
    if refit is not None and refit.shape[0] >= 3:
        e_mat = refit[:3]
        d1, d2 = _epi_dists_essential(e_mat, z, q)
        mask = (d1 <= tau) & (d2 <= tau)
        if int(mask.sum()) < 5:
            mask = best[2]
    _, r, t, _ = cv2.recoverPose(e_mat, z[mask], q[mask], np.eye(3), 1e9)
    return r, t.ravel(), mask, iters


def yaw_of_rotation(r: np.ndarray) -> float:
    """Yaw of a relative rotation under the rot_yaw(psi).T assembly."""
    return -factor_yaw_rollpitch(r).psi


# ---------------------------------------------------------------------------
# Minimal-set consensus experiment
# ---------------------------------------------------------------------------

MC_RANSAC_COLUMNS = (
    "outlier_rate",
    "runs",
    "failures_3pt",
    "failures_5pt",
    "rmse_yaw_3pt_deg",
    "rmse_tdir_3pt_deg",
    "rmse_yaw_5pt_deg",
    "rmse_tdir_5pt_deg",
    "rmse_t_3pt_m",
    "recall_mean",
    "precision_mean",
    "iters_median_3pt",
    "iters_median_5pt",
)

TIMING_COLUMNS = (
    "outlier_rate",
    "median_ms_3pt",
    "median_ms_5pt",
    "reduction_pct",
)


def _direction_error_deg(t_est: np.ndarray, t_true: np.ndarray) -> float:
    nt = np.linalg.norm(t_est) * np.linalg.norm(t_true)
    if nt == 0:
        return 180.0
    c = np.clip(float(np.dot(t_est, t_true)) / nt, -1.0, 1.0)
    return float(np.degrees(np.arccos(c)))


def run_mc_ransac(
    cfg: SimConfig, outlier_grid: tuple[float, ...], runs: int = 400
) -> tuple[McResult, McResult]:
    """Paired 3-point vs 5-point comparison per outlier rate.

    Returns (results, timing); timing stays out of the primary CSV because
    wall-clock is not reproducible byte-for-byte.
    """
    import cv2

    cv2.setNumThreads(1)
    rig = cfg.rig()
    sigma_rp = np.radians(cfg.rp_prior_noise_deg)
    rows = []
    timing_rows = []
    for gi, rate in enumerate(outlier_grid):
        cfg_r = cfg.replace(outlier_ratio=float(rate))
        rec = {k: [] for k in ("y3", "y5", "d3", "d5", "t3err", "rec", "prec", "i3", "i5")}
        times3, times5 = [], []
        fail3 = fail5 = 0
        for i in range(runs):
            rng = _rng(cfg.seed, 21, gi, i)
            pose, r_rp = sample_relative_pose(cfg_r, rng)
            frame = synth_observations(
                gen_scene(cfg_r, rng), pose4_to_se3(pose, r_rp), cfg_r, rng
            )
            corrs = frame.corrs
            rp_prior = r_rp
            if sigma_rp > 0:
                e = factor_yaw_rollpitch(r_rp)
                rp_prior = rot_rp(
                    e.theta + rng.normal(0.0, sigma_rp), e.phi + rng.normal(0.0, sigma_rp)
                )
            params = RansacParams(
                confidence=0.99,
                sample_size=3,
                max_iters=1000,
                seed=int(_rng(cfg.seed, 22, gi, i).integers(0, 2**63 - 1)),
                prior_angle_std=float(sigma_rp),
            )
            t0 = time.perf_counter()
            try:
                res3 = ransac_4dof(corrs, rp_prior, rig, params)
                t1 = time.perf_counter()
                times3.append(t1 - t0)
                rec["y3"].append(np.degrees(wrap_angle(res3.pose.psi - pose.psi)))
                rec["d3"].append(_direction_error_deg(res3.pose.t, pose.t))
                rec["t3err"].append(float(np.linalg.norm(res3.pose.t - pose.t)))
                truth = corrs.inlier_truth
                hits = res3.inlier_mask & truth
                rec["rec"].append(hits.sum() / max(truth.sum(), 1))
                rec["prec"].append(hits.sum() / max(res3.inlier_mask.sum(), 1))
                rec["i3"].append(res3.iterations)
            except GravposeError:
                fail3 += 1
            sigma2_hat = estimate_noise_variance(corrs.z, corrs.y, rig)
            tau = 3.0 * float(np.sqrt(sigma2_hat))
            t2 = time.perf_counter()
            try:
                r5, t5, _, i5 = five_point_baseline(
                    corrs, tau, seed=int(_rng(cfg.seed, 23, gi, i).integers(0, 2**31 - 1))
                )
                t3 = time.perf_counter()
                times5.append(t3 - t2)
                rec["y5"].append(np.degrees(wrap_angle(yaw_of_rotation(r5) - pose.psi)))
                rec["d5"].append(_direction_error_deg(t5, pose.t))
                rec["i5"].append(i5)
            except (GravposeError, cv2.error):
                fail5 += 1
        rms = lambda v: float(np.sqrt(np.mean(np.square(np.asarray(v, dtype=float))))) if v else float("nan")
        med = lambda v: float(np.median(v)) if v else float("nan")
        rows.append(
            (
                float(rate),
                runs,
                fail3,
                fail5,
                rms(rec["y3"]),
                rms(rec["d3"]),
                rms(rec["y5"]),
                rms(rec["d5"]),
                rms(rec["t3err"]),
                float(np.mean(rec["rec"])) if rec["rec"] else float("nan"),
                float(np.mean(rec["prec"])) if rec["prec"] else float("nan"),
                med(rec["i3"]),
                med(rec["i5"]),
            )
        )
        m3, m5 = med(times3) * 1e3, med(times5) * 1e3
        timing_rows.append((float(rate), m3, m5, 100.0 * (1.0 - m3 / m5) if m5 else float("nan")))
    results = McResult(columns=MC_RANSAC_COLUMNS, rows=rows, meta={"seed": cfg.seed})
    timing = McResult(columns=TIMING_COLUMNS, rows=timing_rows, meta={"seed": cfg.seed})
    return results, timing


# ---------------------------------------------------------------------------
# Drift experiment
# ---------------------------------------------------------------------------

DRIFT_COLUMNS = (
    "t_s",
    "err_roll_rad",
    "err_pitch_rad",
    "err_yaw_rad",
    "err_pos_m",
    "trace_sigma_imu",
    "acc_mag_mss",
    "degraded",
)


def run_drift(cfg: SimConfig) -> McResult:
    """Full-pipeline drift run over the simulated trajectory.

    Per camera-frame pair: propagate attitude through the gyro window, run
    the 4-DOF solve, then the joint state-covariance refinement; accumulate
    the absolute pose estimate and record errors against ground truth.

    Yaw accumulation follows the complementary split: the gyro-propagated
    relative yaw is corrected by the visual estimate with a gain set by the
    two information contents, roll/pitch come from the gravity-anchored
    refinement, and translation is purely visual.
    """
    rig = cfg.rig()
    rng_traj = _rng(cfg.seed, 31)
    traj = gen_trajectory(cfg, rng_traj)
    imu = synth_imu(traj, cfg, _rng(cfg.seed, 32))
    stride = int(round(cfg.imu_rate_hz / cfg.cam_rate_hz))
    frame_idx = np.arange(0, len(traj.times), stride)
    g = GravityVector()
    sig_a_sample = cfg.accel_noise_density * np.sqrt(cfg.imu_rate_hz)
    prior = WishartPrior.from_mode((max(sig_a_sample, 1e-6) / GRAVITY_MSS) ** 2, cfg.wishart_nu)
    # per-interval gyro rate uncertainty: white noise plus the bias-walk
    # envelope over the run
    rate_noise = float(
        np.hypot(cfg.gyro_noise_density, cfg.gyro_bias_walk * np.sqrt(cfg.duration_s))
    )
    coupling_std = max(rate_noise, 1e-7) * np.sqrt(1.0 / cfg.imu_rate_hz)
    frame_dt = stride / cfg.imu_rate_hz
    sigma_gyro_yaw2 = max(rate_noise, 1e-9) ** 2 * frame_dt

    r_wi_est = traj.r_wi[0].copy()
    pos_est = traj.pos[0].copy()
    rows = []
    for j in range(1, len(frame_idx)):
        k0, k1 = int(frame_idx[j - 1]), int(frame_idx[j])
        rng = _rng(cfg.seed, 33, j)
        window = imu.samples[k0 : k1 + 1]
        e0 = factor_yaw_rollpitch(r_wi_est)
        track = propagate_attitude((e0.phi, e0.theta, e0.psi), window)
        rel_pred = track.r_wi[-1].T @ track.r_wi[0]
        rp_prior = rp_factor(rel_pred)

        r_rel_true = traj.r_wi[k1].T @ traj.r_wi[k0]
        t_rel_true = traj.r_wi[k1].T @ (traj.pos[k0] - traj.pos[k1])
        pose_true = PoseSE3(r_rel_true, t_rel_true)
        points = gen_scene(cfg, rng, n=cfg.fusion_points)
        frame = synth_observations(points, pose_true, cfg, rng)
        corrs = frame.corrs

        degraded = True
        trace_sigma = float("nan")
        try:
            sigma2_hat = estimate_noise_variance(corrs.z, corrs.y, rig)
            if cfg.outlier_ratio > 0:
                params = RansacParams(
                    seed=int(rng.integers(0, 2**63 - 1)),
                    prior_angle_std=np.radians(max(cfg.rp_prior_noise_deg, 0.05)),
                )
                cres = ransac_4dof(corrs, rp_prior, rig, params, sigma2=sigma2_hat)
                corrs_in = corrs.take(cres.inlier_mask)
                pose4_init = cres.pose
            else:
                corrs_in = corrs
                _, _, pose4_init = solve_pipeline(corrs, rig, rp_prior, sigma2_hat)
            from .stereo import triangulate_batch

            pts_tri, _ = triangulate_batch(corrs_in.z, corrs_in.y, rig, sigma2_hat)
            init = FusionState(
                psi=pose4_init.psi, t=pose4_init.t, attitudes=track.angles[:, :2]
            )
            res = bcd_solve(
                init,
                corrs_in,
                pts_tri,
                window,
                sigma_vis=sigma2_hat * np.eye(2),
                prior=prior,
                g=g,
                coupling_std=float(coupling_std),
            )
            degraded = res.degraded
            trace_sigma = float(np.trace(res.cov_imu))

            # Absolute attitude: keep the gyro-propagated yaw (corrected by
            # the information-weighted visual innovation) and re-anchor
            # roll/pitch at the refined current-instant values.
            psi_vis = res.state.psi
            psi_gyro = yaw_of_rotation(rel_pred)
            phi1, theta1 = res.state.attitudes[0]
            phi_k, theta_k = res.state.attitudes[-1]
            f_att = rp_factor(rot_rp(theta_k, phi_k) @ rot_rp(theta1, phi1).T)
            try:
                _, jac = epipolar_residual_jacobian(
                    Pose4(psi=psi_vis, t=res.state.t), f_att, corrs_in, rig
                )
                sigma_vis_yaw2 = sigma2_hat * float(np.linalg.inv(jac.T @ jac)[0, 0])
            except np.linalg.LinAlgError:
                sigma_vis_yaw2 = np.inf
            gain = sigma_gyro_yaw2 / (sigma_gyro_yaw2 + sigma_vis_yaw2)
            e_prop = factor_yaw_rollpitch(track.r_wi[-1])
            psi_w = e_prop.psi + gain * wrap_angle(psi_vis - psi_gyro)
            r_wi_new = rot_yaw(psi_w) @ rot_rp(theta_k, phi_k)
            pos_est = pos_est - r_wi_new @ res.state.t
            r_wi_est = r_wi_new
        except GravposeError:
            # keep the propagated attitude; position holds its last value
            r_wi_est = track.r_wi[-1]

        e_est = factor_yaw_rollpitch(r_wi_est)
        phi_t, theta_t, psi_t = traj.angles[k1]
        acc_window = float(np.mean(np.linalg.norm(traj.acc[k0 : k1 + 1], axis=1)))
        rows.append(
            (
                float(traj.times[k1]),
                wrap_angle(e_est.phi - phi_t),
                wrap_angle(e_est.theta - theta_t),
                wrap_angle(e_est.psi - psi_t),
                float(np.linalg.norm(pos_est - traj.pos[k1])),
                trace_sigma,
                acc_window,
                bool(degraded),
            )
        )
    return McResult(columns=DRIFT_COLUMNS, rows=rows, meta={"seed": cfg.seed})


# ---------------------------------------------------------------------------
# Noise-variance and CRLB sweep experiments
# ---------------------------------------------------------------------------

NOISE_EST_COLUMNS = (
    "sigma_px",
    "pairs",
    "runs",
    "sigma2_true",
    "sigma2_hat_mean",
    "sigma2_hat_std",
    "rel_err_of_mean",
)


def run_noise_est(cfg: SimConfig, sigma_px_grid: tuple[float, ...], runs: int = 20) -> McResult:
    """Monte Carlo check of the noise-variance estimator per pixel-noise level."""
    rig = cfg.rig()
    rows = []
    for gi, sigma_px in enumerate(sigma_px_grid):
        cfg_s = cfg.replace(noise_px=float(sigma_px))
        sigma2_true = cfg_s.noise_sigma**2
        estimates = []
        for i in range(runs):
            rng = _rng(cfg.seed, 41, gi, i)
            points = gen_scene(cfg_s, rng)
            z0 = project(points)
            y0 = project(rig.right_from_left().apply(points))
            sig = cfg_s.noise_sigma
            z = z0 + rng.normal(0.0, 1.0, z0.shape) * sig
            y = y0 + rng.normal(0.0, 1.0, y0.shape) * sig
            estimates.append(estimate_noise_variance(z, y, rig))
        est = np.asarray(estimates)
        mean = float(est.mean())
        rel = abs(mean - sigma2_true) / sigma2_true if sigma2_true > 0 else abs(mean)
        rows.append(
            (
                float(sigma_px),
                cfg_s.n_points,
                runs,
                sigma2_true,
                mean,
                float(est.std(ddof=1)) if runs > 1 else 0.0,
                rel,
            )
        )
    return McResult(columns=NOISE_EST_COLUMNS, rows=rows, meta={"seed": cfg.seed})


CRLB_COLUMNS = ("n", "runs", "crlb_yaw", "crlb_tx", "crlb_ty", "crlb_tz")


def run_crlb(cfg: SimConfig, n_grid: tuple[int, ...], runs: int = 50) -> McResult:
    """Average CRLB standard deviations over scene draws per point count."""
    rig = cfg.rig()
    rows = []
    for gi, n in enumerate(n_grid):
        cfg_n = cfg.replace(n_points=int(n))
        diags = []
        for i in range(runs):
            rng = _rng(cfg.seed, 51, gi, i)
            pose, r_rp = sample_relative_pose(cfg_n, rng)
            frame = synth_observations(
                gen_scene(cfg_n, rng), pose4_to_se3(pose, r_rp), cfg_n.replace(noise_px=0.0), rng
            )
            diags.append(
                np.diag(crlb_4dof(frame.true_points, pose, r_rp, rig, cfg_n.noise_sigma**2))
            )
        mean_diag = np.mean(np.asarray(diags), axis=0)
        rows.append((int(n), runs, *np.sqrt(mean_diag)))
    return McResult(columns=CRLB_COLUMNS, rows=rows, meta={"seed": cfg.seed})
