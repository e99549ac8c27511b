"""Fitting-error metrics for the rigid alignment studies."""

from __future__ import annotations

import numpy as np

from ..kinematics import rotation_matrix

_X_AXIS = np.array([1.0, 0.0, 0.0])


def angle_between(u: np.ndarray, v: np.ndarray) -> float:
    """Angle in radians, stable near 0 and pi."""
    return float(np.arctan2(np.linalg.norm(np.cross(u, v)), float(u @ v)))


def rotation_error_deg(theta_fit: np.ndarray, theta_gt: np.ndarray) -> float:
    """Symmetric rotation error: the fitted and true rotations applied to the
    x-axis, taking the smaller angle against either +x or -x to absorb the
    model's 180-degree symmetry."""
    rf = rotation_matrix(np.asarray(theta_fit, dtype=np.float64)[3:6])
    rg = rotation_matrix(np.asarray(theta_gt, dtype=np.float64)[3:6])
    target = rg @ _X_AXIS
    a1 = angle_between(rf @ _X_AXIS, target)
    a2 = angle_between(-(rf @ _X_AXIS), target)
    return np.degrees(min(a1, a2))


def rotation_error_trace(theta_trace, theta_gt: np.ndarray) -> np.ndarray:
    return np.array([rotation_error_deg(t, theta_gt) for t in theta_trace])
