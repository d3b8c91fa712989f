import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import scenario
from critfield.distfield import (
    PointCloud,
    distances,
    generalized_gradient,
    gradient_norms,
    hausdorff_distance,
    mu_classify,
    project,
)
from critfield.experiments import farthest_point_sampling

PAIR = [(-1, 0), (1, 0)]


def test_cloud_projection_tie():
    ps = project(PAIR, (0, 1))
    assert ps.distance == pytest.approx(math.sqrt(2))
    np.testing.assert_allclose(ps.points, PAIR)


def test_circle_projection():
    ps = project(scenario("circle:1"), (0.5, 0))
    assert ps.distance == pytest.approx(0.5, abs=1e-10)
    np.testing.assert_allclose(ps.points, [[1, 0]], atol=1e-9)


def test_ellipse_centre_projection():
    ps = project(scenario("ellipse:2,1"), (0, 0))
    assert ps.distance == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(np.sort(ps.points[:, 1]), [-1, 1], atol=1e-8)
    np.testing.assert_allclose(ps.points[:, 0], 0, atol=1e-8)


def test_ellipse_projection_against_fine_grid():
    # parameter grid then golden-section polish as the independent route
    from scipy.optimize import minimize_scalar

    sc = scenario("ellipse:2,1")
    rng = np.random.default_rng(5)
    t = np.linspace(0, 2 * np.pi, 20001)
    for z in rng.uniform(-2.5, 2.5, (20, 2)):
        d2 = (2 * np.cos(t) - z[0]) ** 2 + (np.sin(t) - z[1]) ** 2
        k = int(np.argmin(d2))
        res = minimize_scalar(lambda s: (2 * np.cos(s) - z[0]) ** 2 + (np.sin(s) - z[1]) ** 2,
                              bracket=(t[k - 1], t[k], t[(k + 1) % len(t)]), tol=1e-12)
        assert project(sc, z).distance == pytest.approx(math.sqrt(res.fun), abs=1e-8)


def test_gradient_examples():
    assert generalized_gradient(PAIR, (0, 0)).norm == pytest.approx(0.0, abs=1e-15)
    g = generalized_gradient(PAIR, (0, 1))
    np.testing.assert_allclose(g.meb_center, [0, 0], atol=1e-15)
    assert g.norm == pytest.approx(1 / math.sqrt(2))
    assert generalized_gradient(scenario("circle:1"), (0.5, 0)).norm == pytest.approx(1.0)


def test_gradient_zero_on_set():
    g = generalized_gradient(PAIR, (1, 0))
    assert g.norm == 0.0


@pytest.mark.parametrize("z, mu, expected", [((0, 0), 0.0, "mu_critical"), ((0, 1), 0.5, "regular"),
                                             ((0, 1), 0.8, "mu_critical"), ((1, 0), 1.0, "regular")])
def test_mu_classify(z, mu, expected):
    assert mu_classify(PAIR, z, mu) == expected


def test_mu_out_of_range():
    with pytest.raises(ValueError):
        mu_classify(PAIR, (0, 0), 1.5)


def test_hausdorff_points():
    assert float(hausdorff_distance([(0, 0)], [(3, 4)])) == pytest.approx(5.0)
    P = np.random.default_rng(0).random((30, 2))
    assert float(hausdorff_distance(P, P)) == 0.0


def test_hausdorff_fps_circle_bruteforce():
    t = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    dense = np.column_stack([np.cos(t), np.sin(t)])
    A = dense[farthest_point_sampling(dense, 0.1).indices][:64]
    D = np.linalg.norm(A[:, None] - dense[None], axis=-1)
    brute = max(D.min(0).max(), D.min(1).max())
    assert float(hausdorff_distance(A, dense)) == pytest.approx(brute, rel=1e-12)


def test_manifold_hausdorff_records_density():
    res = hausdorff_distance(scenario("circle:1"), [(0, 0)], n_per_chart=512)
    assert res.value == pytest.approx(1.0, abs=1e-9)
    assert res.density == 512


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (12, 2), elements=st.floats(-3, 3, width=32)),
       arrays(np.float64, (2, 2), elements=st.floats(-4, 4, width=32)))
def test_cloud_lipschitz_and_norm_bound(P, Z):
    cloud = PointCloud(P)
    d = distances(cloud, Z)
    assert abs(d[0] - d[1]) <= np.linalg.norm(Z[0] - Z[1]) + 1e-12
    assert np.all(gradient_norms(cloud, Z) <= 1 + 1e-9)


def test_manifold_lipschitz_and_norm_bound():
    sc = scenario("ellipse:2,1")
    rng = np.random.default_rng(2)
    Z = rng.uniform(-2.5, 2.5, (60, 2))
    d = distances(sc, Z)
    for i in range(0, 60, 2):
        assert abs(d[i] - d[i + 1]) <= np.linalg.norm(Z[i] - Z[i + 1]) + 1e-9
    assert np.all(gradient_norms(sc, Z) <= 1 + 1e-9)


def test_sphere_centre_flags_continuum():
    ps = project(scenario("sphere:1"), (0, 0, 0))
    assert ps.continuum_suspected
