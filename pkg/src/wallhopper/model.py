"""Reduced 3-DoF model of a point mass hanging on two ropes.

The robot body is collapsed to a point mass suspended from two anchors by
ropes of lengths l1 (left) and l2 (right).  The minimal coordinates are

    q = (psi, l1, l2)

where psi is the rotation of the plane containing both ropes about the
anchor line, measured from the vertical (psi = 0 means the mass lies in
the wall plane).  The inertial frame sits at the left anchor with Y along
the anchor line and Z up, so the right anchor is at (0, d_a, 0).

Writing C = (d_a^2 + l1^2 - l2^2) / (2 d_a) for the coordinate along the
anchor line and r = sqrt(l1^2 - C^2) for the distance from that line, the
forward kinematics is

    p(q) = (r sin(psi), C, -r cos(psi)).

Accelerations follow from Newton's equation m (p_dd - g) = f_tot via

    p_dd = A_d(q) @ q_dd + b_d(q, q_dot),

with A_d the Jacobian dp/dq and b_d quadratic in the rates.  Both are
implemented in closed form below and cross-checked against finite
differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

# Configurations with |sin(psi)| below this are treated as singular.
SINGULARITY_EPS = 1e-6

# Relative slack on the triangle inequality l1^2 > C^2 before the forward
# kinematics is declared out of domain.
_DOMAIN_TOL = 1e-12


class KinematicsError(ValueError):
    """Rope lengths inconsistent with the anchor distance, or p on the anchor line."""


class SingularityError(ValueError):
    """Raised when |sin(psi)| falls below the singularity threshold."""


@dataclass(frozen=True)
class Ellipsoid:
    """Axis-aligned ellipsoidal bump on the wall, in standard form."""

    center: np.ndarray          # (3,) m
    semi_axes: np.ndarray       # (3,) m, all > 0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "semi_axes", np.asarray(self.semi_axes, dtype=float))
        if self.center.shape != (3,) or self.semi_axes.shape != (3,):
            raise ValueError("Ellipsoid center and semi_axes must be 3-vectors")
        if np.any(self.semi_axes <= 0.0):
            raise ValueError("Ellipsoid semi-axes must be strictly positive")


@dataclass(frozen=True)
class Scenario:
    """Wall geometry, robot constants and actuation limits.

    The inertial frame is pinned to the left anchor: anchor_left = (0,0,0)
    and anchor_right = (0, d_a, 0) by construction.
    """

    d_a: float = 5.0                   # anchor distance (m)
    mass: float = 5.0                  # kg
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    wall_normal: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    wall_offset: float = 0.05          # wall kept at n.p >= wall_offset (m)
    contact_normal: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    mu: float = 0.8                    # friction coefficient at the wheels/foot
    f_leg_max: float = 300.0           # max normal leg force (N)
    f_r_max: float = 90.0              # max rope tension magnitude (N)
    f_p_max: float = 50.0              # max propeller force, bilateral (N)
    t_th: float = 0.05                 # thrust impulse duration (s)
    d_b: float = 0.8                   # landing wheel spacing (m)
    d_w: float = 0.4                   # wall clearance of the CoM at contact (m)
    d_h: float = 0.4                   # hoist (rope attachment) spacing on the base (m)
    wheel_z_offset: float = 0.0        # vertical wheel offset w.r.t. the CoM (m)
    obstacle: Ellipsoid | None = None

    def __post_init__(self):
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float))
        object.__setattr__(self, "wall_normal", _unit(self.wall_normal, "wall_normal"))
        object.__setattr__(self, "contact_normal", _unit(self.contact_normal, "contact_normal"))
        if self.d_a <= 0.0:
            raise ValueError("anchor distance d_a must be positive")
        if self.mass < 0.0:
            raise ValueError("mass must be non-negative")
        if self.mu <= 0.0:
            raise ValueError("friction coefficient mu must be positive")
        for name in ("f_leg_max", "f_r_max", "t_th"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.f_p_max < 0.0:
            raise ValueError("f_p_max must be non-negative")

    @property
    def anchor_left(self) -> np.ndarray:
        return np.zeros(3)

    @property
    def anchor_right(self) -> np.ndarray:
        return np.array([0.0, self.d_a, 0.0])

    def with_(self, **kwargs) -> "Scenario":
        return replace(self, **kwargs)


def _unit(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if v.shape != (3,) or n < 1e-12:
        raise ValueError(f"{name} must be a nonzero 3-vector")
    return v / n


@dataclass(frozen=True)
class ReducedState:
    """Minimal coordinates (psi, l1, l2) and their rates."""

    psi: float
    l1: float
    l2: float
    psi_dot: float = 0.0
    l1_dot: float = 0.0
    l2_dot: float = 0.0

    def __post_init__(self):
        if self.l1 <= 0.0 or self.l2 <= 0.0:
            raise ValueError("rope lengths must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.psi, self.l1, self.l2,
                         self.psi_dot, self.l1_dot, self.l2_dot])

    @classmethod
    def from_array(cls, x: np.ndarray) -> "ReducedState":
        x = np.asarray(x, dtype=float)
        return cls(*x[:6])


@dataclass(frozen=True)
class ControlInput:
    """Forces applied to the point mass.

    Rope magnitudes are stored non-positive: forces act along the rope axis
    a_hat (anchor -> mass), so a negative magnitude pulls toward the anchor.
    """

    f_rope_left: float = 0.0
    f_rope_right: float = 0.0
    f_leg: np.ndarray = field(default_factory=lambda: np.zeros(3))
    f_prop: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "f_leg", np.asarray(self.f_leg, dtype=float))
        if self.f_rope_left > 0.0 or self.f_rope_right > 0.0:
            raise ValueError("rope forces are unilateral: magnitudes must be <= 0")
        if self.f_leg.shape != (3,):
            raise ValueError("f_leg must be a 3-vector")

    def as_array(self) -> np.ndarray:
        return np.array([self.f_rope_left, self.f_rope_right,
                         self.f_leg[0], self.f_leg[1], self.f_leg[2],
                         self.f_prop])

    @classmethod
    def from_array(cls, u: np.ndarray) -> "ControlInput":
        u = np.asarray(u, dtype=float)
        return cls(u[0], u[1], u[2:5].copy(), u[5])


ZERO_INPUT = ControlInput()


# ---------------------------------------------------------------------------
# Array kernels.  All accept broadcastable leading dimensions; the batched
# variants never raise and mark bad configurations with NaN so optimiser
# line searches can probe freely.
# ---------------------------------------------------------------------------

def _chord_and_radius(l1, l2, d_a):
    """Coordinate C along the anchor line and squared distance r^2 from it."""
    C = (d_a * d_a + l1 * l1 - l2 * l2) / (2.0 * d_a)
    r2 = l1 * l1 - C * C
    return C, r2


def position_arrays(psi, l1, l2, d_a):
    """Cartesian position for broadcastable coordinate arrays (NaN out of domain)."""
    C, r2 = _chord_and_radius(l1, l2, d_a)
    with np.errstate(invalid="ignore"):
        r = np.sqrt(np.where(r2 > 0.0, r2, np.nan))
    px = r * np.sin(psi)
    py = C + np.zeros_like(px)
    pz = -r * np.cos(psi)
    return np.stack([px, py, pz], axis=-1)


def jacobian_arrays(psi, l1, l2, d_a):
    """A_d = dp/d(psi, l1, l2), shape (..., 3, 3)."""
    C, r2 = _chord_and_radius(l1, l2, d_a)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.sqrt(np.where(r2 > 0.0, r2, np.nan))
        r_l1 = l1 * (d_a - C) / (d_a * r)
        r_l2 = C * l2 / (d_a * r)
    s, c = np.sin(psi), np.cos(psi)
    zero = np.zeros_like(r)
    row_x = np.stack([r * c, s * r_l1, s * r_l2], axis=-1)
    row_y = np.stack([zero, l1 / d_a + zero, -l2 / d_a + zero], axis=-1)
    row_z = np.stack([r * s, -c * r_l1, -c * r_l2], axis=-1)
    return np.stack([row_x, row_y, row_z], axis=-2)


def bias_arrays(psi, l1, l2, psi_dot, l1_dot, l2_dot, d_a):
    """b_d = (d/dt dp/dq) q_dot, the rate-quadratic part of p_dd, shape (..., 3)."""
    C, r2 = _chord_and_radius(l1, l2, d_a)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.sqrt(np.where(r2 > 0.0, r2, np.nan))
        C_dot = (l1 * l1_dot - l2 * l2_dot) / d_a
        r_dot = (l1 * l1_dot - C * C_dot) / r
        C_dd0 = (l1_dot * l1_dot - l2_dot * l2_dot) / d_a
        r_dd0 = (l1_dot * l1_dot - C_dot * C_dot - C * C_dd0 - r_dot * r_dot) / r
    s, c = np.sin(psi), np.cos(psi)
    bx = r_dd0 * s + 2.0 * r_dot * c * psi_dot - r * s * psi_dot * psi_dot
    by = C_dd0 + np.zeros_like(bx)
    bz = -r_dd0 * c + 2.0 * r_dot * s * psi_dot + r * c * psi_dot * psi_dot
    return np.stack([bx, by, bz], axis=-1)


def total_force_arrays(x, u, scenario: Scenario, extra_force=None):
    """Newton-equation right-hand side m*g + f_leg + a_l f_rl + a_r f_rr + x_b f_p."""
    psi, l1, l2 = x[..., 0], x[..., 1], x[..., 2]
    p = position_arrays(psi, l1, l2, scenario.d_a)
    a_left = p / l1[..., None]
    p_rel = p - scenario.anchor_right
    a_right = p_rel / l2[..., None]
    x_b = np.stack([np.cos(psi), np.zeros_like(psi), np.sin(psi)], axis=-1)
    f = scenario.mass * scenario.gravity + u[..., 2:5]
    f = f + a_left * u[..., 0:1] + a_right * u[..., 1:2] + x_b * u[..., 5:6]
    if extra_force is not None:
        f = f + extra_force
    return f


def state_derivative_arrays(x, u, scenario: Scenario, extra_force=None):
    """Time derivative of the stacked state (psi, l1, l2, rates), batched, NaN-safe.

    Exploits the cylindrical structure to invert A_d in closed form: the
    rotated (c*vx + s*vz, vy, s*vx - c*vz) components decouple psi_dd from
    a 2x2 system in (l1_dd, l2_dd).
    """
    d_a = scenario.d_a
    psi, l1, l2 = x[..., 0], x[..., 1], x[..., 2]
    psi_dot, l1_dot, l2_dot = x[..., 3], x[..., 4], x[..., 5]
    C = (d_a * d_a + l1 * l1 - l2 * l2) / (2.0 * d_a)
    r2 = l1 * l1 - C * C
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.sqrt(np.where(r2 > 0.0, r2, np.nan))
        s, c = np.sin(psi), np.cos(psi)
        px, py, pz = r * s, C, -r * c
        # Newton RHS components: gravity, leg, ropes along their axes, propeller.
        m = scenario.mass
        gx, gy, gz = scenario.gravity
        fx = m * gx + u[..., 2] + px / l1 * u[..., 0] + px / l2 * u[..., 1] + c * u[..., 5]
        fy = m * gy + u[..., 3] + py / l1 * u[..., 0] + (py - d_a) / l2 * u[..., 1]
        fz = m * gz + u[..., 4] + pz / l1 * u[..., 0] + pz / l2 * u[..., 1] + s * u[..., 5]
        if extra_force is not None:
            fx = fx + extra_force[..., 0]
            fy = fy + extra_force[..., 1]
            fz = fz + extra_force[..., 2]
        # Rate-quadratic bias b_d (p_dd with q_dd = 0).
        C_dot = (l1 * l1_dot - l2 * l2_dot) / d_a
        r_dot = (l1 * l1_dot - C * C_dot) / r
        C_dd0 = (l1_dot * l1_dot - l2_dot * l2_dot) / d_a
        r_dd0 = (l1_dot * l1_dot - C_dot * C_dot - C * C_dd0 - r_dot * r_dot) / r
        w = psi_dot
        bx = r_dd0 * s + 2.0 * r_dot * c * w - r * s * w * w
        by = C_dd0
        bz = -r_dd0 * c + 2.0 * r_dot * s * w + r * c * w * w
        vx, vy, vz = fx / m - bx, fy / m - by, fz / m - bz
        # Closed-form A_d^{-1}: radial/tangential rotation plus 2x2 solve.
        psi_dd = (c * vx + s * vz) / r
        w_r = s * vx - c * vz
        r_l1 = l1 * (d_a - C) / (d_a * r)
        r_l2 = C * l2 / (d_a * r)
        denom = l1 * l2 / (d_a * r)
        l1_dd = ((l2 / d_a) * w_r + r_l2 * vy) / denom
        l2_dd = ((l1 / d_a) * w_r - r_l1 * vy) / denom
    return np.stack([psi_dot, l1_dot, l2_dot, psi_dd, l1_dd, l2_dd], axis=-1)


# ---------------------------------------------------------------------------
# Public single-state operations with full checking.
# ---------------------------------------------------------------------------

def check_reachable(l1: float, l2: float, d_a: float) -> None:
    """Raise unless (l1, l2, d_a) satisfy the triangle inequality strictly."""
    if l1 <= 0.0 or l2 <= 0.0:
        raise KinematicsError("rope lengths must be positive")
    C, r2 = _chord_and_radius(l1, l2, d_a)
    if r2 <= _DOMAIN_TOL * l1 * l1:
        raise KinematicsError(
            f"rope lengths (l1={l1:.6g}, l2={l2:.6g}) inconsistent with anchor "
            f"distance d_a={d_a:.6g}: point would lie on or beyond the anchor line")


def forward_kinematics(q: ReducedState, scenario: Scenario) -> np.ndarray:
    """Cartesian position of the mass in the left-anchor frame."""
    check_reachable(q.l1, q.l2, scenario.d_a)
    return position_arrays(q.psi, q.l1, q.l2, scenario.d_a)


def inverse_kinematics(p, scenario: Scenario) -> tuple[float, float, float]:
    """Recover (psi, l1, l2) from a Cartesian position.

    psi = atan2(p_x, -p_z), consistent with p_x = r sin(psi), p_z = -r cos(psi).
    """
    p = np.asarray(p, dtype=float)
    l1 = float(np.linalg.norm(p - scenario.anchor_left))
    l2 = float(np.linalg.norm(p - scenario.anchor_right))
    r = float(np.hypot(p[0], p[2]))
    if r < 1e-9:
        raise KinematicsError("point lies on the anchor line; psi is undefined")
    psi = float(np.arctan2(p[0], -p[2]))
    return psi, l1, l2


def propeller_axis(q: ReducedState) -> np.ndarray:
    """Unit axis perpendicular to the plane of the ropes (base X axis)."""
    return np.array([np.cos(q.psi), 0.0, np.sin(q.psi)])


def mass_matrix_terms(q: ReducedState, scenario: Scenario,
                      eps: float = SINGULARITY_EPS) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form A_d and b_d with singularity and reachability checks."""
    if abs(np.sin(q.psi)) < eps:
        raise SingularityError(f"|sin(psi)| = {abs(np.sin(q.psi)):.3g} below {eps:.3g}")
    check_reachable(q.l1, q.l2, scenario.d_a)
    A_d = jacobian_arrays(q.psi, q.l1, q.l2, scenario.d_a)
    b_d = bias_arrays(q.psi, q.l1, q.l2, q.psi_dot, q.l1_dot, q.l2_dot, scenario.d_a)
    return A_d, b_d


def dynamics(q: ReducedState, u: ControlInput, scenario: Scenario,
             extra_force=None) -> np.ndarray:
    """Coordinate accelerations (psi_dd, l1_dd, l2_dd)."""
    if scenario.mass <= 0.0:
        raise ValueError("dynamics requires a positive mass")
    A_d, b_d = mass_matrix_terms(q, scenario)
    f_tot = total_force_arrays(q.as_array(), u.as_array(), scenario, extra_force)
    return np.linalg.solve(A_d, f_tot / scenario.mass - b_d)


def cartesian_velocity(q: ReducedState, scenario: Scenario) -> np.ndarray:
    """p_dot = A_d @ q_dot_r."""
    A_d = jacobian_arrays(q.psi, q.l1, q.l2, scenario.d_a)
    return A_d @ np.array([q.psi_dot, q.l1_dot, q.l2_dot])
