"""4-DOF minimal-set consensus filter.

Three correspondences give six equations for the five-dimensional linear
state, so s = 3 is the minimal sample.  Hypotheses are scored by the number
of points whose epipolar distances in both keyframe images stay inside the
threshold; the iteration budget adapts to the best inlier ratio seen so far.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AmbiguousYawError,
    ConsensusFailureError,
    DegenerateGeometryError,
    DegenerateSampleError,
    InsufficientDataError,
)
from .geometry import Pose4, StereoRig
from .pnp4dof import (
    StateVec5,
    build_linear_system,
    epipolar_distances,
    gn_refine,
    gn_refine_with_prior,
    ml_cost,
    normalize_state,
    solve_be,
)
from .stereo import Correspondences, estimate_noise_variance, triangulate_batch


@dataclass(frozen=True)
class RansacParams:
    confidence: float = 0.99
    sample_size: int = 3
    tau: float | None = None  # None: 3 * sigma_hat
    max_iters: int = 1000
    seed: int = 0
    # 1-sigma uncertainty of the roll/pitch prior (rad); enables the joint
    # attitude polish in the final refit and widens the final gate.
    prior_angle_std: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")
        if self.sample_size < 3:
            raise ValueError("sample size must be at least 3")
        if self.tau is not None and self.tau <= 0:
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class ConsensusResult:
    inlier_mask: np.ndarray
    pose: Pose4
    iterations: int
    elapsed_s: float
    # support of the best raw hypothesis; drives the adaptive bound
    hypothesis_inliers: int = 0
    best_found_at: int = 0


def required_iterations(confidence: float, inlier_ratio: float, sample_size: int,
                        cap: int = 1_000_000) -> int:
    """ceil(log(1-p) / log(1-w^s)), capped; 1 when w = 1, cap when w = 0."""
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    if inlier_ratio <= 0.0:
        return cap
    if inlier_ratio >= 1.0:
        return 1
    denom = np.log1p(-float(inlier_ratio) ** sample_size)
    if denom == 0.0:
        return 1
    n = np.ceil(np.log1p(-confidence) / denom)
    return int(min(n, cap))


def minimal_solve(rho: np.ndarray, cov_rho: np.ndarray, q: np.ndarray) -> StateVec5:
    """Least-squares solve of the 6x5 system from exactly three points."""
    rho = np.asarray(rho, dtype=float).reshape(-1, 3)
    if len(rho) != 3:
        raise InsufficientDataError("minimal solve takes exactly 3 correspondences")
    sys = build_linear_system(rho, cov_rho, q)
    sv = np.linalg.svd(sys.a, compute_uv=False)
    if sv[0] <= 0 or sv[-1] / sv[0] < 1e-9:
        raise DegenerateSampleError("rank-deficient minimal sample")
    x, *_ = np.linalg.lstsq(sys.a, sys.b, rcond=None)
    return StateVec5(x=x)


def classify_inliers(
    pose: Pose4,
    r_rp: np.ndarray,
    corrs: Correspondences,
    rig: StereoRig,
    tau: float,
) -> np.ndarray:
    """Inlier iff max(|d_left|, |d_right|) <= tau."""
    d_l, d_r = epipolar_distances(pose, r_rp, corrs, rig)
    return (np.abs(d_l) <= tau) & (np.abs(d_r) <= tau)


def ransac_4dof(
    corrs: Correspondences,
    r_rp: np.ndarray,
    rig: StereoRig,
    params: RansacParams,
    sigma2: float | None = None,
) -> ConsensusResult:
    """Adaptive RANSAC around the 3-point solver with a BE + GN final refit.

    The final inlier gate re-estimates the residual scale from the refit
    distances over the winning support set, which keeps recall high when the
    roll-pitch prior itself is noisy.
    """
    t_start = time.perf_counter()
    n = len(corrs)
    if n < params.sample_size:
        raise InsufficientDataError(f"need at least {params.sample_size} correspondences")
    if sigma2 is None:
        sigma2 = estimate_noise_variance(corrs.z, corrs.y, rig)
    sigma = float(np.sqrt(max(sigma2, 0.0)))
    tau = params.tau if params.tau is not None else 3.0 * sigma

    points, covs = triangulate_batch(corrs.z, corrs.y, rig, sigma2)
    from .pnp4dof import prerotate

    rho, cov_rho = prerotate(points, covs, r_rp)

    rng = np.random.default_rng(params.seed)
    best_mask = None
    best_count = 0
    best_cost = np.inf
    best_pose = None
    best_found_at = 0
    bound = params.max_iters
    iterations = 0
    while iterations < min(bound, params.max_iters):
        iterations += 1
        sel = rng.choice(n, size=params.sample_size, replace=False)
        try:
            if params.sample_size == 3:
                state = minimal_solve(rho[sel], cov_rho[sel], corrs.q[sel])
            else:
                sys_h = build_linear_system(rho[sel], cov_rho[sel], corrs.q[sel])
                sv = np.linalg.svd(sys_h.a, compute_uv=False)
                if sv[0] <= 0 or sv[-1] / sv[0] < 1e-9:
                    raise DegenerateSampleError("rank-deficient sample")
                x, *_ = np.linalg.lstsq(sys_h.a, sys_h.b, rcond=None)
                state = StateVec5(x=x)
            pose = normalize_state(state)
        except (DegenerateSampleError, AmbiguousYawError):
            continue
        mask = classify_inliers(pose, r_rp, corrs, rig, tau)
        count = int(mask.sum())
        if count < best_count:
            continue
        if count == best_count and best_pose is not None:
            cost = ml_cost(pose, r_rp, corrs.take(mask), rig) if count else np.inf
            if cost >= best_cost:
                continue
            best_cost = cost
        else:
            best_cost = ml_cost(pose, r_rp, corrs.take(mask), rig) if count else np.inf
        best_mask, best_count, best_pose = mask, count, pose
        best_found_at = iterations
        bound = required_iterations(params.confidence, count / n, params.sample_size)

    if best_pose is None or best_count < params.sample_size:
        raise ConsensusFailureError(
            f"no hypothesis with >= {params.sample_size} inliers in {iterations} iterations"
        )

    # Final refit on the winning support: BE solve then GN polish.
    pose_final = best_pose
    rp_final = r_rp
    try:
        sub = corrs.take(best_mask)
        sys = build_linear_system(rho[best_mask], cov_rho[best_mask], sub.q)
        pose_be = normalize_state(solve_be(sys))
        if params.prior_angle_std > 0:
            pose_final, rp_final = gn_refine_with_prior(
                pose_be, r_rp, sub, rig, sigma, params.prior_angle_std
            )
        else:
            pose_final = gn_refine(pose_be, r_rp, sub, rig, steps=1)
    except (DegenerateGeometryError, AmbiguousYawError, InsufficientDataError):
        pose_final = best_pose

    # Residual scale over the support set under the refit pose; guards the
    # final gate against prior-induced line shifts.
    d_l, d_r = epipolar_distances(pose_final, rp_final, corrs.take(best_mask), rig)
    sigma_eff = float(np.sqrt(np.mean(np.concatenate([d_l, d_r]) ** 2)))
    tau_final = max(tau, 3.0 * sigma_eff)
    final_mask = classify_inliers(pose_final, rp_final, corrs, rig, tau_final)
    if int(final_mask.sum()) < params.sample_size:
        final_mask = best_mask
    return ConsensusResult(
        inlier_mask=final_mask,
        pose=pose_final,
        iterations=iterations,
        elapsed_s=time.perf_counter() - t_start,
        hypothesis_inliers=best_count,
        best_found_at=best_found_at,
    )
