"""Pure control-law kernels used around the flight phase: yaw handling and
leg/landing reorientation, thrust-leg alignment, the landing impedance law,
contact-force-to-torque mapping and the lateral-manoeuvring Jacobian.

These operate on caller-supplied rigid-body quantities; the full-body
simulation that would consume their outputs is out of scope, so tests
exercise them against geometric and finite-difference oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REORIENTATION_RANGE = 0.6      # rad, mechanism limit for yaw correction


@dataclass(frozen=True)
class RigidBodyPose:
    """World-frame orientation of the base link."""

    rotation: np.ndarray          # (3,3) orthonormal, det +1

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        object.__setattr__(self, "rotation", R)
        if R.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9):
            raise ValueError("rotation must be orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("rotation must be proper (det +1)")

    @property
    def x_axis(self) -> np.ndarray:
        return self.rotation[:, 0]

    @property
    def y_axis(self) -> np.ndarray:
        return self.rotation[:, 1]


def yaw_from_rotation(R) -> float:
    """Yaw of a Z-Y-X Euler decomposition: atan2(R21, R11)."""
    R = np.asarray(R, dtype=float)
    return float(np.arctan2(R[1, 0], R[0, 0]))


def reorientation_setpoints(q0_left: float, q0_right: float,
                            yaw_desired: float, yaw_actual: float,
                            warn=None) -> tuple[float, float]:
    """Landing-link set-points shifting both joints by the yaw error.

    Errors beyond the mechanism range trigger the warn callback (the links
    would hit their stops) but the shifted set-points are still returned.
    """
    err = yaw_desired - yaw_actual
    if abs(err) > REORIENTATION_RANGE and warn is not None:
        warn(f"yaw error {err:.3f} rad exceeds the {REORIENTATION_RANGE} rad "
             "reorientation range")
    return q0_left + err, q0_right + err


def hip_alignment(f_leg) -> tuple[float, float]:
    """Hip roll/pitch set-points aligning the prismatic leg with the thrust.

    q_HR = atan2(f_y, f_x); q_HP = -pi + atan2(f_z, f_x).  The -pi offset
    encodes the mechanism zero of the hip pitch joint.
    """
    f = np.asarray(f_leg, dtype=float)
    if np.linalg.norm(f) < 1e-12:
        raise ValueError("cannot align the leg to a zero force")
    q_hr = float(np.arctan2(f[1], f[0]))
    q_hp = float(-np.pi + np.arctan2(f[2], f[0]))
    return q_hr, q_hp


def landing_torque(q, q_dot, q_desired, stiffness: float, damping: float):
    """Joint impedance law tau = K (q_d - q) - D q_dot (elementwise)."""
    if stiffness < 0.0 or damping < 0.0:
        raise ValueError("impedance gains must be non-negative")
    q = np.asarray(q, dtype=float)
    return stiffness * (np.asarray(q_desired, dtype=float) - q) \
        - damping * np.asarray(q_dot, dtype=float)


def critically_damped_gain(stiffness: float, reflected_mass: float) -> float:
    """D = 2 sqrt(K m): no step-response overshoot at the landing joint."""
    if stiffness <= 0.0 or reflected_mass <= 0.0:
        raise ValueError("stiffness and reflected mass must be positive")
    return 2.0 * float(np.sqrt(stiffness * reflected_mass))


def force_to_leg_torques(jacobian, bias, contact_force):
    """Feed-forward leg torques realising a contact force: tau = h - J^T f."""
    J = np.asarray(jacobian, dtype=float)
    return np.asarray(bias, dtype=float) - J.T @ np.asarray(contact_force, float)


def _skew(v):
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def lateral_jacobian(pose: RigidBodyPose, wheel_left, wheel_right,
                     hoist_left, hoist_right, axis_left, axis_right) -> np.ndarray:
    """4x6 map from the base twist (p_dot, omega) to wheel speeds along the
    base Y axis and rope speeds along the rope axes.

    Row structure: [d^T, d^T [-p]_x] for direction d and attachment p, so a
    row times the twist is d . (p_dot + omega x p).
    """
    rows = []
    y_b = pose.y_axis
    for d, p in ((y_b, wheel_left), (y_b, wheel_right),
                 (np.asarray(axis_left, float), hoist_left),
                 (np.asarray(axis_right, float), hoist_right)):
        p = np.asarray(p, dtype=float)
        rows.append(np.concatenate([d, d @ _skew(-p)]))
    return np.array(rows)


def lateral_setpoints(p_dot_desired, omega_desired, J_lm: np.ndarray,
                      wheel_radius: float) -> np.ndarray:
    """Wheel angular speeds (rows 0-1, divided by the wheel radius) and rope
    speed set-points (rows 2-3) for a desired base twist."""
    if wheel_radius <= 0.0:
        raise ValueError("wheel radius must be positive")
    twist = np.concatenate([np.asarray(p_dot_desired, float),
                            np.asarray(omega_desired, float)])
    speeds = J_lm @ twist
    speeds[0] /= wheel_radius
    speeds[1] /= wheel_radius
    return speeds
