import json
import math

import numpy as np
import pytest

from conftest import critical_set, scenario
from critfield.critical import manifold_critical_points
from critfield.manifold import locate
from critfield.schemas import SchemaError
from critfield.scenarios import generic_perturbation, get_scenario, parse_shorthand

ELLIPSE_JSON = {
    "name": "json-ellipse",
    "m": 1,
    "D": 2,
    "reach": 0.5,
    "charts": [{
        "kind": "polynomial_trig",
        "domain": {"lo": 0.0, "hi": 2 * math.pi, "periodic": True},
        "terms": [{"coord": 0, "c": 2.0, "p": 0, "omega": 1.0, "phi": 0.0},
                  {"coord": 1, "c": 1.0, "p": 0, "omega": 1.0, "phi": -math.pi / 2}],
    }],
}


def test_json_ellipse_matches_builtin():
    js = get_scenario(ELLIPSE_JSON)
    bi = scenario("ellipse:2,1")
    U = np.linspace(0, 2 * np.pi, 37)[:, None]
    np.testing.assert_allclose(js.charts[0].eval(U), bi.charts[0].eval(U), atol=1e-14)
    np.testing.assert_allclose(js.charts[0].jac(U), bi.charts[0].jac(U), atol=1e-14)
    np.testing.assert_allclose(js.charts[0].hess(U), bi.charts[0].hess(U), atol=1e-14)
    cs = manifold_critical_points(js)
    assert len(cs) == 1
    np.testing.assert_allclose(cs[0].z, critical_set("ellipse:2,1")[0].z, atol=1e-9)


def test_json_file_and_builtin_chart(tmp_path):
    path = tmp_path / "circle.json"
    path.write_text(json.dumps({"name": "c", "m": 1, "D": 2,
                                "charts": [{"kind": "builtin", "builtin": "circle:2"}]}))
    sc = get_scenario(str(path))
    assert sc.diameter == pytest.approx(4.0, rel=1e-6)


def test_directory_named_like_a_shorthand_is_not_a_file(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "circle:1").mkdir()
    assert get_scenario("circle:1").name == "circle:1"


@pytest.mark.parametrize("bad", [{"name": "x", "m": 1, "D": 2, "charts": []},
                                 {"name": "x", "m": 1, "D": 5, "charts": [{"kind": "builtin", "builtin": "circle"}]},
                                 {"name": "x", "m": 1, "D": 2, "charts": [{"kind": "polynomial_trig"}]}])
def test_invalid_json(bad):
    with pytest.raises(SchemaError):
        get_scenario(bad)


def test_unknown_shorthand():
    with pytest.raises(KeyError, match="unknown scenario"):
        parse_shorthand("klein_bottle")


@pytest.mark.parametrize("shape, D, diam", [("circle:1", 2, 2.0), ("ellipse:2,1", 2, 4.0), ("sphere:1", 3, 2.0),
                                           ("ellipsoid:3,2,1", 3, 6.0), ("torus:2,0.5", 3, 5.0)])
def test_registry_dimensions(shape, D, diam):
    sc = scenario(shape)
    assert sc.D == D
    assert sc.diameter == pytest.approx(diam, rel=1e-3)


def test_cubic_exact_on_window():
    sc = scenario("paper_cubic")
    for x in np.linspace(-0.3, 0.3, 13):
        for sign in (1, -1):
            p = np.array([x, sign * (1 + x**3)])
            c, u = locate(sc, p)
            np.testing.assert_allclose(sc.point(c, u), p, atol=1e-10)


def test_cubic_perturbed_exact_on_window():
    a = 0.1
    sc = scenario("paper_cubic_perturbed:0.1")
    from critfield.distfield import distances

    X = np.linspace(-0.3, 0.3, 7)
    P = np.vstack([np.column_stack([X, 1 + a * X + X**3]), np.column_stack([X, -(1 + a * X + X**3)])])
    np.testing.assert_allclose(distances(sc, P), 0, atol=1e-9)


def test_cubic_closure_is_a_simple_closed_curve():
    # a thin offset of an embedded closed curve is an annulus: one component, one hole
    from critfield.experiments import offset_betti_scan

    scan = offset_betti_scan(scenario("paper_cubic"), grid_step=0.01, offsets=[0.03, 0.1], dense_per_chart=4096)
    assert scan.betti0 == [1, 1]
    assert scan.betti1 == [1, 1]


def test_cubic_single_critical_point_near_origin():
    cs = critical_set("paper_cubic")
    near = cs.within((0, 0), 1.0)
    assert len(near) == 1
    assert np.linalg.norm(near[0].z) < 1e-5
    assert near[0].r == pytest.approx(1.0, abs=1e-9)


def test_perturbed_cubic_has_none_near_origin():
    assert not critical_set("paper_cubic_perturbed:0.1").within((0, 0), 1.0)


def test_generic_perturbation_is_local():
    base = scenario("ellipse:2,1")
    bumped = generic_perturbation(base, 0.05)
    bump = bumped.metadata["bump"]
    U = base.charts[0].grid(400)
    P, Q = base.charts[0].eval(U), bumped.charts[0].eval(U)
    far = np.linalg.norm(P - bump["center"], axis=1) >= bump["radius"]
    np.testing.assert_array_equal(P[far], Q[far])
    assert 0.045 < np.abs(P - Q).max() <= 0.05 + 1e-15
    assert np.array_equal(generic_perturbation(base, 0.0).charts[0].eval(U), P)


def test_perturbed_family():
    assert scenario("paper_cubic").perturbed(0.1).name == "paper_cubic_perturbed:0.1"
    assert "bump" in scenario("ellipse:2,1").perturbed(0.01).metadata
