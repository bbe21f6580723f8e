"""Static on-wall stability via feasible wrench polytopes.

The robot resting on the wall is modelled as a rigid body with four
unilateral contacts: two landing wheels (point contacts with friction,
bounded normal force) and two rope attachments (forces along the rope
axes, bounded tension).  Per-contact force polytopes are lifted to 6D
wrenches about the CoM, Minkowski-summed into the feasible wrench
polytope (FWP), and static feasibility and operating-force margins are
read off its H-representation.

All quantities in this module live in a frame attached to the CoM (axes
parallel to the world frame); referencing wrenches about the CoM keeps
the 6D polytopes full-dimensional.

Sign conventions: gravitational_wrench returns the wrench gravity applies
to the body, (m g, 0).  Membership and margin queries are posed on the
load wrench -w_G that the contacts must realise for static balance; with
the literal gravity wrench the test would be vacuously infeasible at
every position (contacts between wall anchors can never reproduce a net
downward pull with zero moment).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Scenario
from .polytopes import (
    DegeneracyError,
    HPolytope,
    MarginResult,
    VPolytope,
    contains,
    convex_hull,
    directional_margin,
    v_to_h,
)
from .solvers import STATUS_OPTIMAL, LpProblem, solve_lp


def tangent_frame(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic tangent pair (t1, t2): Gram-Schmidt of world Y against
    the normal (world X fallback when nearly parallel), t2 = n x t1."""
    n = np.asarray(normal, dtype=float)
    seed = np.array([0.0, 1.0, 0.0])
    if abs(seed @ n) > 0.99:
        seed = np.array([1.0, 0.0, 0.0])
    t1 = seed - (seed @ n) * n
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


@dataclass(frozen=True)
class Wrench:
    force: np.ndarray
    moment: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.force, self.moment])


@dataclass(frozen=True)
class ContactSet:
    """Contact geometry in the CoM frame."""

    wheel_left: np.ndarray
    wheel_right: np.ndarray
    hoist_left: np.ndarray
    hoist_right: np.ndarray
    axis_left: np.ndarray          # unit, anchor -> attachment
    axis_right: np.ndarray
    contact_normal: np.ndarray
    mu: float
    f_leg_max: float
    f_r_max: float


def contact_geometry(p, scenario: Scenario) -> ContactSet:
    """Wheel and rope-attachment placement for a CoM at p (anchor frame)."""
    p = np.asarray(p, dtype=float)
    n_c = scenario.contact_normal
    t1, t2 = tangent_frame(n_c)
    half_b = 0.5 * scenario.d_b * t1
    z_off = scenario.wheel_z_offset * t2
    wheel_l = -scenario.d_w * n_c - half_b + z_off
    wheel_r = -scenario.d_w * n_c + half_b + z_off
    hoist_l = -0.5 * scenario.d_h * t1
    hoist_r = +0.5 * scenario.d_h * t1
    anchors = (scenario.anchor_left - p, scenario.anchor_right - p)
    axes = []
    for anchor, hoist in zip(anchors, (hoist_l, hoist_r)):
        v = hoist - anchor
        norm = np.linalg.norm(v)
        if norm < 1e-9:
            raise ValueError("rope attachment coincides with its anchor")
        axes.append(v / norm)
    return ContactSet(wheel_l, wheel_r, hoist_l, hoist_r, axes[0], axes[1],
                      n_c, scenario.mu, scenario.f_leg_max, scenario.f_r_max)


def wheel_force_polytope(contact_normal, mu: float, f_leg_max: float) -> VPolytope:
    """Friction-pyramid force polytope of one wheel: apex plus 4 corners.

    Columns are expressed in the contact frame (t1, t2, n) and rotated to
    the world; the pyramid implicitly encodes the unilateral constraint.
    """
    n = np.asarray(contact_normal, dtype=float)
    t1, t2 = tangent_frame(n)
    R_c = np.column_stack([t1, t2, n])
    local = np.array([[0.0, mu, -mu, -mu, mu],
                      [0.0, mu, mu, -mu, -mu],
                      [0.0, 1.0, 1.0, 1.0, 1.0]]) * f_leg_max
    # canonicalise: collapses to a normal segment when mu == 0
    return convex_hull((R_c @ local).T)


def rope_force_polytope(axis, f_r_max: float) -> VPolytope:
    """Tension segment of one rope: zero and full pull toward the anchor."""
    a = np.asarray(axis, dtype=float)
    return convex_hull(np.vstack([-a * f_r_max, np.zeros(3)]))


def lift_to_wrench(force_vertices: np.ndarray, application_point) -> np.ndarray:
    """Map force vertices f to 6D wrench vertices (f, p x f) about the CoM."""
    p = np.asarray(application_point, dtype=float)
    f = np.atleast_2d(np.asarray(force_vertices, dtype=float))
    return np.hstack([f, np.cross(np.broadcast_to(p, f.shape), f)])


@dataclass(frozen=True)
class FwpResult:
    h_polytope: HPolytope
    v_polytope: VPolytope
    raw_vertex_count: int
    contact_wrenches: tuple


def contact_wrench_polytopes(cs: ContactSet) -> tuple[VPolytope, ...]:
    """Per-contact wrench polytopes (two wheels, two ropes)."""
    parts = []
    for wheel in (cs.wheel_left, cs.wheel_right):
        forces = wheel_force_polytope(cs.contact_normal, cs.mu, cs.f_leg_max)
        parts.append(convex_hull(lift_to_wrench(forces.vertices, wheel)))
    for axis, hoist in ((cs.axis_left, cs.hoist_left), (cs.axis_right, cs.hoist_right)):
        forces = rope_force_polytope(axis, cs.f_r_max)
        parts.append(convex_hull(lift_to_wrench(forces.vertices, hoist)))
    return tuple(parts)


def build_fwp(cs: ContactSet) -> FwpResult:
    """Minkowski sum of the four contact wrench polytopes, with H-rep."""
    parts = contact_wrench_polytopes(cs)
    combo = parts[0].vertices
    for part in parts[1:]:
        combo = (combo[:, None, :] + part.vertices[None, :, :]).reshape(-1, 6)
    raw_count = combo.shape[0]
    hull = convex_hull(combo)
    if hull.degenerate:
        raise DegeneracyError("contact geometry produced a flat wrench polytope")
    return FwpResult(v_to_h(hull), hull, raw_count, parts)


def gravitational_wrench(scenario: Scenario) -> Wrench:
    """Wrench of gravity about the CoM: pure force m*g, zero moment."""
    return Wrench(scenario.mass * scenario.gravity, np.zeros(3))


def load_wrench(scenario: Scenario) -> np.ndarray:
    """Wrench the contacts must realise for static balance: -w_G."""
    return -gravitational_wrench(scenario).as_array()


def equilibrium_lp(cs: ContactSet, w, with_limits: bool) -> bool:
    """Existence of admissible contact forces realising the wrench w.

    Decision variables: 4 pyramid-corner weights per wheel (>= 0, summing
    to at most 1 when limits are on) and one tension scale per rope.  With
    limits off the scales are unbounded and the test reduces to membership
    in the contact wrench cone.
    """
    w = np.asarray(w, dtype=float)
    cols = []
    for wheel in (cs.wheel_left, cs.wheel_right):
        corners = wheel_force_polytope(cs.contact_normal, cs.mu, cs.f_leg_max).vertices[1:]
        cols.append(lift_to_wrench(corners, wheel).T)          # (6, 4)
    for axis, hoist in ((cs.axis_left, cs.hoist_left), (cs.axis_right, cs.hoist_right)):
        pull = -axis * cs.f_r_max
        cols.append(lift_to_wrench(pull, hoist).T)             # (6, 1)
    A_eq = np.hstack(cols)
    hi = 1.0 if with_limits else None
    bounds = [(0.0, hi)] * A_eq.shape[1]
    A_ub = b_ub = None
    if with_limits:
        # Pyramid-corner weights of one wheel may sum to at most 1.
        rows = np.zeros((2, A_eq.shape[1]))
        rows[0, 0:4] = 1.0
        rows[1, 4:8] = 1.0
        A_ub, b_ub = rows, np.ones(2)
    lp = LpProblem(c=np.zeros(A_eq.shape[1]),
                   A_ub=A_ub if A_ub is not None else None,
                   b_ub=b_ub, bounds=bounds)
    res = solve_lp(lp, A_eq=A_eq, b_eq=w)
    return res.status == STATUS_OPTIMAL


def feasibility(p, scenario: Scenario, with_limits: bool = True) -> bool:
    """Static feasibility of CoM position p.

    With limits on, membership of the load wrench in the FWP H-rep; with
    limits off, a force-existence LP over the contact wrench cone.
    """
    cs = contact_geometry(p, scenario)
    w = load_wrench(scenario)
    if with_limits:
        return contains(build_fwp(cs).h_polytope, w)
    return equilibrium_lp(cs, w, with_limits=False)


def margin_at(p, v_hat, scenario: Scenario) -> MarginResult:
    """Directional feasibility margin of the load wrench at CoM position p."""
    cs = contact_geometry(p, scenario)
    fwp = build_fwp(cs)
    return directional_margin(fwp.h_polytope, load_wrench(scenario), np.asarray(v_hat, float))


@dataclass(frozen=True)
class HeatmapGrid:
    """Y/Z grid of CoM positions at constant wall-consistent X."""

    y_values: np.ndarray
    z_values: np.ndarray
    x: float

    @classmethod
    def regular(cls, y_range=(0.0, 5.0), z_range=(-10.0, -2.0), ny=20, nz=20,
                x=1.5) -> "HeatmapGrid":
        return cls(np.linspace(*y_range, ny), np.linspace(*z_range, nz), x)


@dataclass
class HeatmapResult:
    grid: HeatmapGrid
    direction: np.ndarray
    gamma: np.ndarray              # (ny, nz); 0 where statically infeasible
    feasible: np.ndarray           # (ny, nz) bool
    errors: list


def margin_heatmap(grid: HeatmapGrid, v_hat, scenario: Scenario) -> HeatmapResult:
    """Directional margin over a wall grid; infeasible cells report zero."""
    v_hat = np.asarray(v_hat, dtype=float)
    ny, nz = grid.y_values.size, grid.z_values.size
    gamma = np.zeros((ny, nz))
    feasible = np.zeros((ny, nz), dtype=bool)
    errors = []
    for i, y in enumerate(grid.y_values):
        for j, z in enumerate(grid.z_values):
            p = np.array([grid.x, y, z])
            try:
                res = margin_at(p, v_hat, scenario)
            except (DegeneracyError, ValueError, RuntimeError) as exc:
                errors.append((i, j, str(exc)))
                continue
            if res.status == "infeasible_origin":
                gamma[i, j] = 0.0
            elif res.status == "unbounded":
                gamma[i, j] = np.inf
                feasible[i, j] = True
            else:
                gamma[i, j] = res.gamma
                feasible[i, j] = True
    return HeatmapResult(grid, v_hat, gamma, feasible, errors)
