"""Typed error hierarchy.

Robust layers (RANSAC, benchmarks) catch these by type to resample or skip a
trial instead of parsing messages.
"""

from __future__ import annotations


class GravposeError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateFactorizationError(GravposeError):
    """Rotation is gimbal-degenerate; yaw/roll-pitch split is not unique."""


class BehindCameraError(GravposeError):
    """Point has non-positive depth in the camera frame."""


class DegenerateEpipolarError(GravposeError):
    """Zero relative translation; epipolar geometry is undefined."""


class DegenerateLineError(GravposeError):
    """Line at infinity; point-to-line distance is undefined."""


class UnsupportedRigError(GravposeError):
    """Operation requires a rectified stereo rig."""


class NonPositiveDisparityError(GravposeError):
    """Stereo disparity at or below the floor; rays parallel or crossed."""


class InsufficientDataError(GravposeError):
    """Fewer observations than the operation requires."""


class DegenerateGeometryError(GravposeError):
    """Normal equations are rank deficient for this point configuration."""


class AmbiguousYawError(GravposeError):
    """Trigonometric pair of the state vector is too small to define yaw."""


class DegenerateSampleError(GravposeError):
    """Minimal sample is rank deficient; caller should resample."""


class ConsensusFailureError(GravposeError):
    """No hypothesis reached the minimum inlier support within the budget."""


class StreamOrderError(GravposeError):
    """IMU timestamps are not strictly increasing."""


class FreeFallSampleError(GravposeError):
    """Accelerometer norm too small to define a gravity direction."""


class CsvWriteError(GravposeError):
    """Failed to write a result file; message carries the path."""
