import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import critical_set, scenario
from critfield.critical import (
    classify_index,
    cloud_critical_points,
    cloud_critical_points_bruteforce,
    manifold_critical_points,
)
from critfield.distfield import PointCloud, generalized_gradient
from critfield.experiments import farthest_point_sampling

SQUARE = [(0, 0), (1, 0), (1, 1), (0, 1)]


def keyed(cs):
    return sorted((tuple(np.round(p.z, 8)), round(p.r, 8), p.s) for p in cs)


def same(a, b, tol=1e-9):
    A = sorted(a, key=lambda p: tuple(np.round(p.z, 7)))
    B = sorted(b, key=lambda p: tuple(np.round(p.z, 7)))
    return len(A) == len(B) and all(
        np.allclose(p.z, q.z, atol=tol) and abs(p.r - q.r) <= tol and p.s == q.s for p, q in zip(A, B))


class TestCloudFixtures:
    @pytest.mark.parametrize("enumerate_", [cloud_critical_points, cloud_critical_points_bruteforce])
    def test_square(self, enumerate_):
        assert keyed(enumerate_(SQUARE)) == sorted(
            [((0.0, 0.5), 0.5, 2), ((0.5, 0.0), 0.5, 2), ((0.5, 0.5), round(math.sqrt(0.5), 8), 4),
             ((0.5, 1.0), 0.5, 2), ((1.0, 0.5), 0.5, 2)])

    def test_collinear(self):
        cs = cloud_critical_points([(0, 0), (1, 0), (2, 0)])
        assert keyed(cs) == [((0.5, 0.0), 0.5, 2), ((1.5, 0.0), 0.5, 2)]

    def test_single_point_has_none(self):
        assert len(cloud_critical_points([(1, 2)])) == 0

    def test_duplicates_are_merged(self):
        assert keyed(cloud_critical_points([(-1, 0), (1, 0), (1, 0)])) == [((0.0, 0.0), 1.0, 2)]

    def test_gradient_vanishes_at_every_point(self):
        rng = np.random.default_rng(8)
        P = rng.random((30, 2))
        cloud = PointCloud(P)
        for cp in cloud_critical_points(P):
            assert generalized_gradient(cloud, cp.z).norm <= 1e-9
            np.testing.assert_allclose(cp.weights @ cp.projections, cp.z, atol=1e-12)
            assert cp.weights.min() >= -1e-12

    def test_fps_ellipse_sample(self):
        sc = scenario("ellipse:2,1")
        dense = sc.discretize(4096)[0]
        S = farthest_point_sampling(dense, 0.2).points[:64]
        cs = cloud_critical_points(S)
        near = cs.within((0, 0), 0.1)
        assert near and any(abs(p.r - 1) < 0.05 for p in near)

    def test_bruteforce_guard(self):
        with pytest.raises(ValueError, match="size guard"):
            cloud_critical_points_bruteforce(np.random.default_rng(0).random((41, 2)))

    def test_production_size_guard(self):
        with pytest.raises(ValueError):
            cloud_critical_points(np.random.default_rng(0).random((20, 2)), max_n=10)


class TestOracleEquivalence:
    @settings(max_examples=80, deadline=None)
    @given(st.integers(2, 14), st.integers(2, 3), st.integers(0, 2**32 - 1))
    def test_random(self, n, D, seed):
        P = np.random.default_rng(seed).random((n, D))
        assert same(cloud_critical_points(P), cloud_critical_points_bruteforce(P))

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=2, max_size=12, unique=True))
    def test_lattice_degenerate(self, pts):
        # cocircular and collinear configurations everywhere
        P = np.array(pts, float)
        assert same(cloud_critical_points(P), cloud_critical_points_bruteforce(P))

    def test_regular_polygon(self):
        t = np.linspace(0, 2 * np.pi, 9, endpoint=False)
        P = np.column_stack([np.cos(t), np.sin(t)])
        a, b = cloud_critical_points(P), cloud_critical_points_bruteforce(P)
        assert same(a, b)
        # the centre sees all nine points, more than D + 1
        assert max(p.s for p in a) == 9

    def test_cube_corners(self):
        P = np.array([(x, y, z) for x in (0, 1) for y in (0, 1) for z in (0, 1)], float)
        a = cloud_critical_points(P)
        assert same(a, cloud_critical_points_bruteforce(P))
        assert sorted(p.s for p in a) == [2] * 12 + [4] * 6 + [8]


class TestManifold:
    def test_ellipse(self):
        cs = critical_set("ellipse:2,1")
        assert len(cs) == 1
        cp = cs[0]
        np.testing.assert_allclose(cp.z, 0, atol=1e-9)
        np.testing.assert_allclose(cp.weights, [0.5, 0.5], atol=1e-9)
        assert cp.source == "manifold_newton"
        assert not cs.complete

    def test_circle_is_a_continuum(self):
        cs = critical_set("circle:1")
        assert len(cs) == 0
        assert any(r["reason"] == "continuum suspected" for r in cs.rejected)

    def test_ellipsoid(self):
        cs = critical_set("ellipsoid:3,2,1")
        assert len(cs) == 1
        np.testing.assert_allclose(cs[0].z, 0, atol=1e-9)
        np.testing.assert_allclose(np.sort(cs[0].projections[:, 2]), [-1, 1], atol=1e-9)

    def test_matches_densest_cloud(self):
        # refinement moves the cloud estimate by O(spacing^2) at most
        sc = scenario("ellipse:2,1")
        P = sc.discretize(2048)[0]
        coarse = cloud_critical_points(P).within((0, 0), 0.05)
        assert coarse and min(np.linalg.norm(p.z) for p in coarse) < 1e-3

    def test_deterministic(self):
        a = manifold_critical_points(scenario("ellipse:2,1"))
        b = manifold_critical_points(scenario("ellipse:2,1"))
        assert keyed(a) == keyed(b)


class TestClassifyIndex:
    def test_ellipse(self):
        assert classify_index(critical_set("ellipse:2,1")[0], scenario("ellipse:2,1")) == (1, 1)

    def test_two_point_cloud(self):
        cp = cloud_critical_points([(-1, 0), (1, 0)])[0]
        assert sum(classify_index(cp)) == 1

    def test_triangle_circumcentre_is_a_maximum(self):
        cp = [p for p in cloud_critical_points([(0, 0), (1, 0), (0.5, 0.9)]) if p.s == 3][0]
        assert classify_index(cp) == (2, 0)

    def test_square_centre_refused(self):
        cp = [p for p in cloud_critical_points(SQUARE) if p.s == 4][0]
        with pytest.raises(ValueError, match="requires P1"):
            classify_index(cp)

    def test_degenerate_cubic_refused(self):
        with pytest.raises(ValueError, match="requires P1"):
            classify_index(critical_set("paper_cubic").within((0, 0), 0.5)[0], scenario("paper_cubic"))
