"""Gravity-aided 4-DOF stereo relative pose estimation.

Splits the relative camera rotation into a gravity-anchored roll-pitch
factor (supplied by an IMU prior) and a yaw angle, estimates (yaw,
translation) by a bias-eliminated closed-form solve refined with one
epipolar Gauss-Newton step, rejects outliers with a 3-point consensus
filter, and fuses the gravity prior with adaptive covariance estimation.
"""

from .consensus import ConsensusResult, RansacParams, ransac_4dof, required_iterations
from .errors import GravposeError
from .fusion import (
    FusionState,
    GravityVector,
    ImuSample,
    WishartPrior,
    bcd_solve,
    gravity_residual,
    propagate_attitude,
    sample_covariance,
    visual_residual,
    wishart_map_update,
)
from .geometry import (
    EulerYRP,
    Pose4,
    PoseSE3,
    StereoRig,
    compose_stereo_pose,
    epipolar_distance,
    epipolar_line,
    factor_yaw_rollpitch,
    project,
    relative_rotation,
    rot_rp,
    rot_yaw,
)
from .pnp4dof import (
    BiasTerms,
    LinearSystem,
    StateVec5,
    bias_terms,
    build_linear_system,
    gn_refine,
    ml_cost,
    normalize_state,
    prerotate,
    solve_be,
    solve_ls,
)
from .sim import SimConfig, gen_scene, gen_trajectory, synth_imu, synth_observations
from .stereo import (
    Correspondence,
    Correspondences,
    TriPoint,
    estimate_noise_variance,
    triangulate,
    triangulate_batch,
)

__version__ = "0.1.0"

__all__ = [
    "BiasTerms",
    "ConsensusResult",
    "Correspondence",
    "Correspondences",
    "EulerYRP",
    "FusionState",
    "GravityVector",
    "GravposeError",
    "ImuSample",
    "LinearSystem",
    "Pose4",
    "PoseSE3",
    "RansacParams",
    "SimConfig",
    "StateVec5",
    "StereoRig",
    "TriPoint",
    "WishartPrior",
    "bcd_solve",
    "bias_terms",
    "build_linear_system",
    "compose_stereo_pose",
    "epipolar_distance",
    "epipolar_line",
    "estimate_noise_variance",
    "factor_yaw_rollpitch",
    "gen_scene",
    "gen_trajectory",
    "gn_refine",
    "gravity_residual",
    "ml_cost",
    "normalize_state",
    "prerotate",
    "project",
    "propagate_attitude",
    "ransac_4dof",
    "relative_rotation",
    "required_iterations",
    "rot_rp",
    "rot_yaw",
    "sample_covariance",
    "solve_be",
    "solve_ls",
    "synth_imu",
    "synth_observations",
    "triangulate",
    "triangulate_batch",
    "visual_residual",
    "wishart_map_update",
]
