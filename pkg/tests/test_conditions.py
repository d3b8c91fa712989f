import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from conftest import critical_set, scenario
from critfield.conditions import (
    assemble_B_form,
    check_P1,
    check_P2,
    check_P3,
    check_P4,
    check_point,
    condition_report,
    estimate_eta,
    frames,
    mu_scan,
    slope_class,
    trace_core,
)
from critfield.critical import CriticalPoint, cloud_critical_points, manifold_critical_points
from critfield.manifold import locate
from critfield.scenarios import generic_perturbation


@pytest.fixture(scope="module")
def bumped_cubic():
    sc = generic_perturbation(scenario("paper_cubic"), 0.05)
    return sc, manifold_critical_points(sc)


class TestP1:
    def test_ellipse(self, ellipse_cs):
        v = check_P1(ellipse_cs[0])
        assert v["pass"]
        assert v["simplex_volume"] == pytest.approx(2.0, abs=1e-9)
        assert v["min_barycentric"] == pytest.approx(0.5, abs=1e-9)

    def test_square_centre(self):
        cp = [p for p in cloud_critical_points([(0, 0), (1, 0), (1, 1), (0, 1)]) if p.s == 4][0]
        v = check_P1(cp)
        assert not v["pass"] and "exceeds" in v["reason"]

    def test_sphere_continuum(self):
        rep = condition_report(scenario("sphere:1"), critical_set("sphere:1"), scan=False)
        assert not rep["overall"]
        assert "P1" in rep["failed"]
        centre = [p for p in rep["critical_points"] if np.linalg.norm(p["z"]) < 1e-6]
        assert centre and centre[0]["P1"]["reason"] == "continuum suspected"
        assert centre[0]["P3"]["evaluated"] is False

    def test_boundary_of_hull(self):
        cp = CriticalPoint(np.array([0.0, 0.0]), 1.0, np.array([[0.0, 0.0], [2.0, 0.0]]), np.array([1.0, 0.0]),
                           0.0, "cloud_exact")
        assert check_P1(cp)["reason"] == "not in relative interior"


class TestP2:
    def test_ellipse(self, ellipse_cs):
        v = check_P2(ellipse_cs)
        assert v["pass"] and v["count"] == 1

    def test_circle(self):
        v = check_P2(critical_set("circle:1"))
        assert not v["pass"]
        assert "continuum" in v["reasons"][0]

    def test_cubic_isolated(self, cubic_cs):
        assert check_P2(cubic_cs)["pass"]

    def test_separation(self):
        cs = cloud_critical_points([(0, 0), (1, 0), (2, 0)])
        assert check_P2(cs)["pass"]
        assert not check_P2(cs, sep_tol=2.0)["pass"]


class TestP3:
    def test_ellipse(self, ellipse, ellipse_cs):
        v = check_P3(ellipse, ellipse_cs[0])
        assert v["pass"]
        assert v["alpha"] == pytest.approx(0.75, abs=1e-9)
        np.testing.assert_allclose(v["lambda_max"], [0.25, 0.25], atol=1e-9)

    def test_cubic(self, cubic, cubic_z0):
        v = check_P3(cubic, cubic_z0)
        assert v["pass"] and v["alpha"] == pytest.approx(1.0, abs=1e-4)  # z0 sits ~1e-6 off the origin

    def test_circle_centre(self):
        sc = scenario("circle:1")
        params = (locate(sc, (1, 0)), locate(sc, (-1, 0)))
        cp = CriticalPoint(np.zeros(2), 1.0, np.array([[1.0, 0], [-1.0, 0]]), np.array([0.5, 0.5]), 0.0,
                           "manifold_newton", params)
        v = check_P3(sc, cp)
        assert not v["pass"] and v["reason"] == "osculating"


def ellipse_local_projection(z, upper):
    t0 = math.pi / 2 if upper else -math.pi / 2
    res = minimize_scalar(lambda t: (2 * math.cos(t) - z[0]) ** 2 + (math.sin(t) - z[1]) ** 2,
                          bounds=(t0 - 1, t0 + 1), method="bounded", options={"xatol": 1e-14})
    return np.array([2 * math.cos(res.x), math.sin(res.x)])


class TestBForm:
    def test_ellipse_matrix(self, ellipse, ellipse_cs):
        form = assemble_B_form(ellipse, ellipse_cs[0])
        np.testing.assert_allclose(form.matrix, [[4 / 9]], atol=1e-9)
        assert form.value((0.5, 0.0)) == pytest.approx(4 / 9 * 0.25, rel=1e-9)
        # E^perp is the x-axis: the y-component of h is projected away
        assert form.value((0.5, 3.0)) == pytest.approx(form.value((0.5, 0.0)), rel=1e-9)

    def test_ellipse_against_triangle_area(self, ellipse, ellipse_cs):
        # (2! * area)^2 / t^2 of the triangle (z, p_up(z), p_down(z)) with z = (t, 0)
        form = assemble_B_form(ellipse, ellipse_cs[0])
        t = 1e-4
        z = np.array([t, 0.0])
        a, b = ellipse_local_projection(z, True) - z, ellipse_local_projection(z, False) - z
        area = 0.5 * abs(a[0] * b[1] - a[1] * b[0])
        assert (2 * area) ** 2 / t**2 == pytest.approx(form.value((1.0, 0.0)), rel=1e-4)
        assert form.volume_oracle((1.0, 0.0), t) == pytest.approx(4 / 9, rel=1e-4)

    def test_cubic_vanishes(self, cubic, cubic_z0):
        assert np.abs(assemble_B_form(cubic, cubic_z0).matrix).max() <= 1e-9

    def test_cloud_point_refused(self):
        cp = cloud_critical_points([(-1, 0), (1, 0)])[0]
        with pytest.raises(ValueError, match="intrinsic dim 0"):
            assemble_B_form(scenario("circle:1"), cp)

    def test_L_estimate(self, ellipse, ellipse_cs):
        form = assemble_B_form(ellipse, ellipse_cs[0])
        assert form.L_estimate == pytest.approx(math.sqrt(4 / 9) / 2 * 0.9)
        assert form.to_dict()["B_matrix"] == form.matrix.tolist()


class TestP4:
    def test_ellipse(self, ellipse, ellipse_cs):
        v = check_P4(ellipse, ellipse_cs[0])
        assert v["pass"] and v["min_abs_eigenvalue"] == pytest.approx(4 / 9, abs=1e-9)

    def test_cubic(self, cubic, cubic_z0):
        v = check_P4(cubic, cubic_z0)
        assert not v["pass"] and v["reason"] == "B-form degenerate on E^perp"

    def test_bump_restores(self, bumped_cubic):
        sc, cs = bumped_cubic
        near = [cp for cp in cs if cp.s == 2 and np.linalg.norm(cp.z) < 0.5]
        assert near
        rep = check_point(sc, near[0], scan=True)
        assert rep["P4"]["pass"]
        assert rep["P4"]["slope_class"] == "linear"
        assert rep["P4"]["consistent_with_scan"]

    def test_trivial_perp_space(self):
        sc = scenario("paper_cubic")
        full = [cp for cp in critical_set("paper_cubic") if cp.s == 3]
        if not full:
            pytest.skip("no s = 3 critical point")
        assert check_P4(sc, full[0])["reason"] == "E^perp is trivial"


class TestCoreAxis:
    def test_trace_stays_equidistant(self, ellipse, ellipse_cs):
        cp = ellipse_cs[0]
        tr = trace_core(ellipse, cp, (0.3, 0.0))
        d = np.linalg.norm(tr.projections - tr.z, axis=1)
        assert np.ptp(d) <= 1e-10
        assert tr.z[0] == pytest.approx(0.3, abs=1e-12)
        np.testing.assert_allclose(tr.z[1], 0, atol=1e-10)  # symmetry

    def test_ellipse_radius_along_axis(self, ellipse, ellipse_cs):
        # along the x-axis the two nearest points give r(t)^2 = 1 - t^2/3
        for t in (0.05, 0.2, 0.5):
            tr = trace_core(ellipse, ellipse_cs[0], (t, 0.0))
            assert tr.r == pytest.approx(math.sqrt(1 - t**2 / 3), abs=1e-10)

    def test_warm_start_equivalent(self, ellipse, ellipse_cs):
        cp = ellipse_cs[0]
        a = trace_core(ellipse, cp, (0.2, 0))
        b = trace_core(ellipse, cp, (0.4, 0), x0=a._state)
        c = trace_core(ellipse, cp, (0.4, 0))
        np.testing.assert_allclose(b.z, c.z, atol=1e-12)


class TestMuScan:
    def test_ellipse_linear(self, ellipse, ellipse_cs):
        ms = mu_scan(ellipse, ellipse_cs[0])
        assert 0.9 <= ms.fit.slope <= 1.1
        assert slope_class(ms.fit) == "linear"
        assert ms.truncated_at is None

    def test_cubic_quadratic(self, cubic, cubic_z0):
        ms = mu_scan(cubic, cubic_z0)
        assert 1.9 <= ms.fit.slope <= 2.1
        assert slope_class(ms.fit) == "superlinear"
        # |grad| ~ 3 x^2 with x the distance
        ratio = np.array(ms.gradient_norms) / (3 * np.array(ms.distances) ** 2)
        assert ratio[0] == pytest.approx(1.0, abs=0.05)

    def test_zero_offset(self, ellipse, ellipse_cs):
        ms = mu_scan(ellipse, ellipse_cs[0], h_values=[0.0, 0.01, 0.02])
        assert ms.distances[0] == 0.0 and ms.gradient_norms[0] == 0.0


class TestEta:
    def test_ellipse_linear(self, ellipse, ellipse_cs):
        tab = estimate_eta(ellipse, [0.02, 0.05, 0.1, 1.0], ellipse_cs)
        ratios = np.array(tab.eta[:3]) / np.array(tab.mu[:3])
        assert ratios.max() < 5
        assert all(np.diff(tab.eta) >= 0)
        assert tab.unbounded[-1] and not tab.unbounded[0]

    def test_cubic_superlinear(self, cubic, cubic_cs):
        mus = [1e-4, 1e-3, 1e-2]
        tab = estimate_eta(cubic, mus, cubic_cs)
        ratios = np.array(tab.eta) / np.array(mus)
        assert ratios[0] > 3 * ratios[-1]
        # eta ~ sqrt(mu / 3) at the smallest mu
        assert tab.eta[0] == pytest.approx(math.sqrt(mus[0] / 3), rel=0.25)


class TestReport:
    def test_ellipse(self, ellipse, ellipse_cs):
        rep = condition_report(ellipse, ellipse_cs)
        assert rep["overall"] and rep["failed"] == []
        assert rep["critical_points"][0]["P4"]["consistent_with_scan"]

    def test_cubic_fails_only_p4_at_origin(self, cubic, cubic_cs):
        rep = condition_report(cubic, cubic_cs, scan=False)
        assert not rep["overall"]
        origin = [p for p in rep["critical_points"] if np.linalg.norm(p["z"]) < 1e-3][0]
        assert origin["P1"]["pass"] and origin["P3"]["pass"] and not origin["P4"]["pass"]
        assert "P4" in rep["failed"]

    def test_frames(self, ellipse_cs):
        E, Ep = frames(ellipse_cs[0])
        np.testing.assert_allclose(np.abs(E[:, 0]), [0, 1], atol=1e-9)
        np.testing.assert_allclose(np.abs(Ep[:, 0]), [1, 0], atol=1e-9)
