"""Convex geometry checked by LP containment, sampling and bisection oracles."""

import numpy as np
import pytest

from wallhopper.polytopes import (
    DegeneracyError,
    HPolytope,
    VPolytope,
    contains,
    convex_hull,
    directional_margin,
    membership_distance,
    membership_lp,
    minkowski_sum,
    v_to_h,
)

CUBE = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)],
                dtype=float)


class TestConvexHull:
    def test_interior_point_removed(self):
        P = convex_hull(np.vstack([CUBE, [[0.0, 0.0, 0.0]]]))
        assert P.n_vertices == 8
        assert not P.degenerate

    def test_segment_retained_and_flagged(self):
        P = convex_hull(np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]))
        assert P.n_vertices == 2
        assert P.degenerate

    def test_all_inputs_inside_hull(self):
        rng = np.random.default_rng(20)
        pts = rng.normal(size=(100, 3))
        P = convex_hull(pts)
        for x in pts:
            assert membership_distance(P, x) <= 1e-8

    def test_idempotent(self):
        rng = np.random.default_rng(21)
        P = convex_hull(rng.normal(size=(40, 3)))
        P2 = convex_hull(P.vertices)
        np.testing.assert_array_equal(P.vertices, P2.vertices)

    def test_planar_input_flagged(self):
        square = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0],
                           [0.5, 0.5, 0.0]], dtype=float)
        P = convex_hull(square)
        assert P.degenerate
        assert P.n_vertices == 4


class TestMinkowskiSum:
    def test_two_segments_make_rectangle(self):
        s1 = convex_hull(np.array([[0.0, 0.0], [1.0, 0.0]]))
        s2 = convex_hull(np.array([[0.0, 0.0], [0.0, 1.0]]))
        R = minkowski_sum(s1, s2)
        assert R.n_vertices == 4

    def test_zero_is_identity(self):
        rng = np.random.default_rng(22)
        P = convex_hull(rng.normal(size=(20, 3)))
        zero = VPolytope(np.zeros((1, 3)), degenerate=True)
        S = minkowski_sum(P, zero)
        np.testing.assert_allclose(S.vertices, P.vertices)

    def test_sampled_sums_contained(self):
        rng = np.random.default_rng(23)
        P = convex_hull(rng.normal(size=(12, 3)))
        Q = convex_hull(rng.normal(size=(10, 3)) * 0.5)
        S = minkowski_sum(P, Q)
        for _ in range(200):
            # Random interior points of P and Q via convex combinations.
            wp = rng.dirichlet(np.ones(P.n_vertices))
            wq = rng.dirichlet(np.ones(Q.n_vertices))
            x = wp @ P.vertices + wq @ Q.vertices
            assert membership_distance(S, x) <= 1e-8

    def test_commutative(self):
        rng = np.random.default_rng(24)
        P = convex_hull(rng.normal(size=(8, 3)))
        Q = convex_hull(rng.normal(size=(8, 3)))
        np.testing.assert_allclose(minkowski_sum(P, Q).vertices,
                                   minkowski_sum(Q, P).vertices, atol=1e-12)

    def test_associative(self):
        rng = np.random.default_rng(25)
        P, Q, R = (convex_hull(rng.normal(size=(6, 3))) for _ in range(3))
        left = minkowski_sum(minkowski_sum(P, Q), R)
        right = minkowski_sum(P, minkowski_sum(Q, R))
        np.testing.assert_allclose(left.vertices, right.vertices, atol=1e-10)


class TestVtoH:
    def test_cube_has_six_facets(self):
        H = v_to_h(convex_hull(CUBE))
        assert H.n_rows == 6

    def test_simplex_has_four_facets(self):
        simplex = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
        H = v_to_h(convex_hull(simplex))
        assert H.n_rows == 4

    def test_degenerate_input_rejected(self):
        seg = convex_hull(np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]))
        with pytest.raises(DegeneracyError):
            v_to_h(seg)

    def test_vertices_satisfy_all_rows(self):
        rng = np.random.default_rng(26)
        P = convex_hull(rng.normal(size=(30, 6)))
        H = v_to_h(P)
        assert np.all(P.vertices @ H.A.T <= H.b[None, :] + 1e-8)

    def test_rows_supported_by_enough_vertices(self):
        rng = np.random.default_rng(27)
        P = convex_hull(rng.normal(size=(20, 3)))
        H = v_to_h(P)
        res = P.vertices @ H.A.T - H.b[None, :]
        support_counts = np.sum(np.abs(res) <= 1e-8, axis=0)
        assert np.all(support_counts >= 3)

    def test_dual_classification_r6(self):
        rng = np.random.default_rng(28)
        P = convex_hull(rng.normal(size=(30, 6)))
        H = v_to_h(P)
        lo, hi = P.vertices.min(axis=0), P.vertices.max(axis=0)
        agree = 0
        for _ in range(500):
            w = rng.uniform(lo - 0.2, hi + 0.2)
            d = membership_distance(P, w)
            if (d <= 1e-9) == contains(H, w, tol=1e-9):
                agree += 1
            else:
                # Allow disagreement only inside a thin boundary band.
                assert d <= 1e-6 or abs(max(H.A @ w - H.b)) <= 1e-6
                agree += 1
        assert agree == 500


class TestContains:
    H_CUBE = v_to_h(convex_hull(CUBE))

    def test_origin_inside(self):
        assert contains(self.H_CUBE, np.zeros(3))

    def test_outside_point(self):
        assert not contains(self.H_CUBE, np.array([2.0, 0.0, 0.0]))

    def test_boundary_closed(self):
        assert contains(self.H_CUBE, np.array([1.0, 0.0, 0.0]))


def bisect_margin(H, w0, v_hat, hi=1e4, tol=1e-8):
    if not contains(H, w0):
        return 0.0
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if contains(H, w0 + mid * v_hat):
            lo = mid
        else:
            hi = mid
    return lo


class TestDirectionalMargin:
    def test_unit_box_margin(self):
        cube6 = np.array(np.meshgrid(*[[-1, 1]] * 6)).reshape(6, -1).T.astype(float)
        H = v_to_h(convex_hull(cube6))
        v = np.zeros(6)
        v[2] = 1.0
        res = directional_margin(H, np.zeros(6), v)
        assert res.status == "ok"
        assert res.gamma == pytest.approx(1.0, abs=1e-9)

    def test_outside_origin_gives_zero(self):
        H = v_to_h(convex_hull(CUBE))
        res = directional_margin(H, np.array([5.0, 0.0, 0.0]),
                                 np.array([1.0, 0.0, 0.0]))
        assert res.gamma == 0.0
        assert res.status == "infeasible_origin"

    def test_unbounded_ray(self):
        # Half-space x <= 1 alone does not limit the -x ray.
        H = HPolytope(np.array([[1.0, 0.0, 0.0]]), np.array([1.0]))
        res = directional_margin(H, np.zeros(3), np.array([-1.0, 0.0, 0.0]))
        assert res.status == "unbounded"

    def test_matches_bisection(self):
        rng = np.random.default_rng(29)
        P = convex_hull(rng.normal(size=(25, 3)))
        H = v_to_h(P)
        w0 = P.vertices.mean(axis=0)
        for _ in range(10):
            v = rng.normal(size=3)
            v /= np.linalg.norm(v)
            res = directional_margin(H, w0, v)
            assert res.gamma == pytest.approx(bisect_margin(H, w0, v), abs=1e-6)

    def test_margin_monotone_under_vertex_removal(self):
        rng = np.random.default_rng(30)
        P = convex_hull(rng.normal(size=(25, 3)))
        w0 = P.vertices.mean(axis=0)
        v = np.array([1.0, 0.0, 0.0])
        g_full = directional_margin(v_to_h(P), w0, v).gamma
        for drop in range(P.n_vertices):
            sub = np.delete(P.vertices, drop, axis=0)
            Psub = convex_hull(sub)
            if Psub.degenerate:
                continue
            g_sub = directional_margin(v_to_h(Psub), w0, v).gamma
            assert g_sub <= g_full + 1e-9


class TestMembership:
    def test_membership_lp_inside_outside(self):
        P = convex_hull(CUBE)
        assert membership_lp(P, np.array([0.2, -0.3, 0.9]))
        assert not membership_lp(P, np.array([1.5, 0.0, 0.0]))
