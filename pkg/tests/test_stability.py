"""Wrench-polytope construction and static feasibility, cross-checked by an
independent force-existence LP that works on raw contact force components
rather than polytope vertices."""

import numpy as np
import pytest
from scipy import optimize

from wallhopper.model import Scenario
from wallhopper.polytopes import contains, directional_margin
from wallhopper.stability import (
    HeatmapGrid,
    build_fwp,
    contact_geometry,
    equilibrium_lp,
    feasibility,
    gravitational_wrench,
    lift_to_wrench,
    load_wrench,
    margin_at,
    margin_heatmap,
    rope_force_polytope,
    tangent_frame,
    wheel_force_polytope,
)

LAND = Scenario(mass=15.0, f_leg_max=600.0, f_r_max=300.0)


def force_existence_oracle(cs, w, with_limits=True, tol=1e-6):
    """Brute-force oracle: solve for raw contact forces reproducing w.

    Variables are the two 3D wheel forces and the two rope tension
    magnitudes; friction pyramid and actuation bounds are posed directly
    on the force components.  Deliberately a different encoding from the
    package's vertex-weight LP.
    """
    n = cs.contact_normal
    t1, t2 = tangent_frame(n)
    n_vars = 8                                  # f_wl (3), f_wr (3), s_l, s_r
    rows, rhs = [], []
    for base in (0, 3):
        for t in (t1, t2):
            for sign in (1.0, -1.0):
                row = np.zeros(n_vars)
                row[base:base + 3] = sign * t - cs.mu * n
                rows.append(row)
                rhs.append(0.0)
        row = np.zeros(n_vars)                  # unilaterality: n.f >= 0
        row[base:base + 3] = -n
        rows.append(row)
        rhs.append(0.0)
        if with_limits:
            row = np.zeros(n_vars)              # actuation: n.f <= f_leg_max
            row[base:base + 3] = n
            rows.append(row)
            rhs.append(cs.f_leg_max)
    A_ub, b_ub = np.array(rows), np.array(rhs)
    # Wrench balance: wheel wrenches plus rope wrenches equal w.
    A_eq = np.zeros((6, n_vars))
    for base, point in ((0, cs.wheel_left), (3, cs.wheel_right)):
        for j in range(3):
            e = np.zeros(3)
            e[j] = 1.0
            A_eq[:3, base + j] = e
            A_eq[3:, base + j] = np.cross(point, e)
    for col, (axis, hoist) in enumerate(((cs.axis_left, cs.hoist_left),
                                         (cs.axis_right, cs.hoist_right))):
        A_eq[:3, 6 + col] = -axis
        A_eq[3:, 6 + col] = np.cross(hoist, -axis)
    s_hi = cs.f_r_max if with_limits else None
    bounds = [(None, None)] * 6 + [(0.0, s_hi)] * 2
    res = optimize.linprog(np.zeros(n_vars), A_ub=A_ub, b_ub=b_ub + tol,
                           A_eq=A_eq, b_eq=w, bounds=bounds, method="highs")
    return res.status == 0


class TestWheelForcePolytope:
    def test_vertical_wall_pyramid(self):
        P = wheel_force_polytope(np.array([1.0, 0.0, 0.0]), 0.8, 600.0)
        assert P.n_vertices == 5
        norms = P.vertices @ np.array([1.0, 0.0, 0.0])
        assert sorted(np.round(norms, 9)) == [0.0, 600.0, 600.0, 600.0, 600.0]
        tangentials = P.vertices[:, 1:]
        assert np.all(np.abs(tangentials[np.abs(norms) > 1] ) == pytest.approx(480.0))

    def test_frictionless_degenerates_to_segment(self):
        P = wheel_force_polytope(np.array([1.0, 0.0, 0.0]), 0.0, 600.0)
        assert P.degenerate
        assert P.n_vertices == 2

    def test_vertices_inside_friction_pyramid(self):
        rng = np.random.default_rng(40)
        for _ in range(10):
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            mu = rng.uniform(0.2, 1.0)
            P = wheel_force_polytope(n, mu, 500.0)
            t1, t2 = tangent_frame(n)
            for f in P.vertices:
                fn = n @ f
                assert fn >= -1e-9
                assert abs(t1 @ f) <= mu * fn + 1e-9
                assert abs(t2 @ f) <= mu * fn + 1e-9


class TestRopeForcePolytope:
    def test_downward_axis(self):
        P = rope_force_polytope(np.array([0.0, 0.0, -1.0]), 300.0)
        verts = {tuple(np.round(v, 9)) for v in P.vertices}
        assert verts == {(0.0, 0.0, 300.0), (0.0, 0.0, 0.0)}

    def test_zero_vertex_always_present(self):
        rng = np.random.default_rng(41)
        a = rng.normal(size=3)
        a /= np.linalg.norm(a)
        P = rope_force_polytope(a, 90.0)
        assert np.any(np.all(np.abs(P.vertices) < 1e-12, axis=1))

    def test_unilateral_sign(self):
        rng = np.random.default_rng(42)
        a = rng.normal(size=3)
        a /= np.linalg.norm(a)
        P = rope_force_polytope(a, 90.0)
        # Force along the axis must be a pull (magnitude <= 0 along a_hat).
        assert np.all(P.vertices @ a <= 1e-12)


class TestLiftToWrench:
    def test_zero_application_point(self):
        W = lift_to_wrench(np.eye(3), np.zeros(3))
        np.testing.assert_allclose(W[:, 3:], 0.0)

    def test_parallel_force_zero_moment(self):
        p = np.array([1.0, 2.0, -3.0])
        W = lift_to_wrench(2.5 * p, p)
        np.testing.assert_allclose(W[0, 3:], 0.0, atol=1e-12)

    def test_matches_cross_product(self):
        rng = np.random.default_rng(43)
        p = rng.normal(size=3)
        F = rng.normal(size=(7, 3))
        W = lift_to_wrench(F, p)
        for i in range(7):
            np.testing.assert_allclose(W[i, 3:], np.cross(p, F[i]), atol=1e-12)


class TestContactGeometry:
    P0 = np.array([1.5, 2.5, -6.5])

    def test_wheel_lateral_offsets(self):
        cs = contact_geometry(self.P0, LAND)
        assert cs.wheel_left[1] == pytest.approx(-0.4)
        assert cs.wheel_right[1] == pytest.approx(0.4)
        assert cs.wheel_left[0] == pytest.approx(-LAND.d_w)

    def test_symmetric_position_mirrors(self):
        cs = contact_geometry(np.array([1.5, 2.5, -6.5]), LAND)
        flip = np.array([1.0, -1.0, 1.0])
        np.testing.assert_allclose(cs.axis_left * flip, cs.axis_right, atol=1e-12)
        np.testing.assert_allclose(cs.hoist_left * flip, cs.hoist_right, atol=1e-12)

    def test_rope_lengths_recompute(self):
        cs = contact_geometry(self.P0, LAND)
        for anchor, hoist, axis in ((LAND.anchor_left, cs.hoist_left, cs.axis_left),
                                    (LAND.anchor_right, cs.hoist_right, cs.axis_right)):
            length = np.linalg.norm(anchor - (self.P0 + hoist))
            attach_world = self.P0 + hoist
            np.testing.assert_allclose(
                anchor + axis * length, attach_world, atol=1e-9)


class TestBuildFwp:
    def test_raw_vertex_combinations(self):
        fwp = build_fwp(contact_geometry(np.array([1.5, 2.5, -6.5]), LAND))
        assert fwp.raw_vertex_count == 100

    def test_contains_zero_wrench(self):
        fwp = build_fwp(contact_geometry(np.array([1.5, 2.5, -6.5]), LAND))
        assert contains(fwp.h_polytope, np.zeros(6))

    def test_membership_matches_force_existence_oracle(self):
        rng = np.random.default_rng(44)
        cs = contact_geometry(np.array([1.5, 2.5, -6.5]), LAND)
        fwp = build_fwp(cs)
        lo = fwp.v_polytope.vertices.min(axis=0)
        hi = fwp.v_polytope.vertices.max(axis=0)
        checked = 0
        for _ in range(200):
            w = rng.uniform(1.3 * lo - 0.15 * hi, 1.3 * hi - 0.15 * lo)
            inside_h = contains(fwp.h_polytope, w, tol=1e-7)
            inside_lp = force_existence_oracle(cs, w)
            margin = np.max(fwp.h_polytope.A @ w - fwp.h_polytope.b)
            if abs(margin) < 1e-5:
                continue            # boundary band: either answer acceptable
            assert inside_h == inside_lp, f"disagreement at {w}, margin {margin}"
            checked += 1
        assert checked > 150


class TestGravitationalWrench:
    def test_paper_mass_value(self):
        w = gravitational_wrench(LAND)
        np.testing.assert_allclose(w.force, [0.0, 0.0, -147.15])
        np.testing.assert_allclose(w.moment, 0.0)

    def test_zero_mass(self):
        w = gravitational_wrench(Scenario(mass=0.0))
        np.testing.assert_allclose(w.as_array(), 0.0)

    def test_moment_zero_in_com_frame(self):
        np.testing.assert_allclose(gravitational_wrench(Scenario()).moment, 0.0)


class TestFeasibility:
    def test_between_anchors_feasible(self):
        assert feasibility(np.array([1.5, 2.5, -6.5]), LAND)

    def test_far_outside_span_infeasible(self):
        assert not feasibility(np.array([1.5, 9.0, -6.5]), LAND)
        assert not feasibility(np.array([1.5, -4.0, -6.5]), LAND)

    def test_verdict_matches_oracle_on_grid(self):
        for y in np.linspace(0.5, 4.5, 5):
            for z in np.linspace(-9.0, -3.0, 5):
                p = np.array([1.5, y, z])
                cs = contact_geometry(p, LAND)
                ours = feasibility(p, LAND)
                oracle = force_existence_oracle(cs, load_wrench(LAND))
                assert ours == oracle, f"mismatch at {p}"

    def test_limits_off_matches_cone_oracle(self):
        for y in (0.5, 2.5, 4.5):
            p = np.array([1.5, y, -6.0])
            cs = contact_geometry(p, LAND)
            ours = feasibility(p, LAND, with_limits=False)
            oracle = force_existence_oracle(cs, load_wrench(LAND), with_limits=False)
            assert ours == oracle

    def test_equilibrium_lp_consistent_with_hrep(self):
        p = np.array([1.5, 2.5, -6.5])
        cs = contact_geometry(p, LAND)
        assert equilibrium_lp(cs, load_wrench(LAND), with_limits=True)


class TestMargins:
    def test_vertical_margin_equals_weight(self):
        res = margin_at(np.array([1.5, 2.5, -6.5]),
                        np.array([0, 0, -1.0, 0, 0, 0]), LAND)
        assert res.status == "ok"
        assert res.gamma == pytest.approx(147.15, rel=1e-6)

    def test_margin_decreases_with_depth(self):
        v = np.array([-1.0, 0, 0, 0, 0, 0])
        g_near = margin_at(np.array([1.5, 2.5, -4.0]), v, LAND).gamma
        g_far = margin_at(np.array([1.5, 2.5, -9.0]), v, LAND).gamma
        assert g_far < g_near

    def test_margin_matches_bisection(self):
        p = np.array([1.5, 2.5, -6.5])
        fwp = build_fwp(contact_geometry(p, LAND))
        w0 = load_wrench(LAND)
        v = np.array([-1.0, 0, 0, 0, 0, 0])
        lo, hi = 0.0, 1e4
        while hi - lo > 1e-7:
            mid = 0.5 * (lo + hi)
            if contains(fwp.h_polytope, w0 + mid * v):
                lo = mid
            else:
                hi = mid
        assert margin_at(p, v, LAND).gamma == pytest.approx(lo, abs=1e-6)

    def test_scaling_limits_scales_polytope(self):
        p = np.array([1.5, 2.5, -6.5])
        cs1 = contact_geometry(p, LAND)
        cs2 = contact_geometry(p, LAND.with_(f_leg_max=1200.0, f_r_max=600.0))
        v1 = build_fwp(cs1).v_polytope.vertices
        v2 = build_fwp(cs2).v_polytope.vertices
        np.testing.assert_allclose(v2, 2.0 * v1, atol=1e-8)
        for v_hat in (np.array([-1.0, 0, 0, 0, 0, 0]), np.array([0, 0, -1.0, 0, 0, 0])):
            g1 = margin_at(p, v_hat, LAND).gamma
            g2 = margin_at(p, v_hat, LAND.with_(f_leg_max=1200.0, f_r_max=600.0)).gamma
            assert g2 >= g1 - 1e-9

    def test_mirror_symmetry(self):
        # Reflecting p about the anchor midplane mirrors the FWP: margins in
        # y-mirrored directions coincide.
        p = np.array([1.5, 1.5, -6.0])
        p_mirror = np.array([1.5, 5.0 - 1.5, -6.0])
        v = np.array([0.3, 0.5, -0.8, 0.0, 0.0, 0.0])
        v /= np.linalg.norm(v)
        v_mirror = v * np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
        g = margin_at(p, v, LAND).gamma
        g_m = margin_at(p_mirror, v_mirror, LAND).gamma
        assert g == pytest.approx(g_m, rel=1e-6)

    def test_friction_monotonicity(self):
        feas_sets = []
        for mu in (0.4, 0.6, 0.8):
            scen = LAND.with_(mu=mu)
            cells = set()
            for y in np.linspace(0.0, 5.0, 6):
                for z in np.linspace(-10.0, -2.0, 6):
                    if feasibility(np.array([1.5, y, z]), scen):
                        cells.add((y, z))
            feas_sets.append(cells)
        assert feas_sets[0] <= feas_sets[1] <= feas_sets[2]


class TestHeatmap:
    def test_single_cell_equals_direct_call(self):
        grid = HeatmapGrid(np.array([2.5]), np.array([-6.5]), x=1.5)
        v = np.array([0, 0, -1.0, 0, 0, 0])
        hm = margin_heatmap(grid, v, LAND)
        direct = margin_at(np.array([1.5, 2.5, -6.5]), v, LAND)
        assert hm.gamma[0, 0] == pytest.approx(direct.gamma)

    def test_two_valued_vertical_map(self):
        grid = HeatmapGrid.regular(ny=6, nz=6, x=1.5)
        hm = margin_heatmap(grid, np.array([0, 0, -1.0, 0, 0, 0]), LAND)
        assert len(hm.errors) == 0
        vals = hm.gamma[hm.feasible]
        assert vals.size > 0
        np.testing.assert_allclose(vals, 147.15, rtol=0.01)
        np.testing.assert_allclose(hm.gamma[~hm.feasible], 0.0)
