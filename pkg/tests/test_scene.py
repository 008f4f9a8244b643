import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from gaugetomo.scene import (
    Circle,
    Polygon,
    Scene,
    SceneError,
    boundary_point,
    concentric_scene,
    first_hit,
    project_to_arclength,
    validate,
)


def test_concentric_scene_is_valid(annulus):
    assert validate(annulus) == []


def test_obstacle_exiting_outer_boundary():
    sc = Scene(Circle((0, 0), 2.0), (Circle((1.5, 0), 1.0),))
    assert any("obstacle touches/exits outer boundary" in m for m in validate(sc))


def test_overlapping_obstacles():
    sc = Scene(Circle((0, 0), 2.0), (Circle((0.4, 0), 0.5), Circle((-0.4, 0), 0.5)))
    assert any("obstacles overlap" in m for m in validate(sc))


def test_nonconvex_polygon_rejected():
    sq = Polygon(((0, 0), (1, 0), (0.5, 0.2), (1, 1), (0, 1)))
    assert not sq.is_strictly_convex()
    assert validate(Scene(Circle((0, 0), 5.0), (sq,)))


@pytest.mark.parametrize(
    "comp,s,point,normal",
    [
        (0, 0.0, (2, 0), (-1, 0)),
        (0, math.pi, (0, 2), (0, -1)),
        (1, 0.0, (1, 0), (1, 0)),
    ],
)
def test_boundary_point_examples(annulus, comp, s, point, normal):
    p, n, _ = boundary_point(annulus, comp, s)
    np.testing.assert_allclose(p, point, atol=1e-12)
    np.testing.assert_allclose(n, normal, atol=1e-12)


def test_first_hit_examples(annulus):
    h = first_hit(annulus, (2.0, 0.0), (-1.0, 0.0))
    assert h.component == 1
    np.testing.assert_allclose(h.point, (1, 0), atol=1e-12)
    np.testing.assert_allclose(h.inward_normal, (1, 0), atol=1e-12)
    assert h.distance == pytest.approx(1.0, abs=1e-12)

    h = first_hit(annulus, (0.0, 2.0), (0.0, -1.0))
    assert h.component == 1 and h.distance == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(h.point, (0, 1), atol=1e-12)

    d = np.array([-2.0, 2.0]) / math.sqrt(8.0)
    h = first_hit(annulus, (2.0, 0.0), d)
    assert h.component == 0
    np.testing.assert_allclose(h.point, (0, 2), atol=1e-12)
    assert h.distance == pytest.approx(2 * math.sqrt(2), abs=1e-12)


def test_first_hit_outside_domain_is_an_error(annulus):
    with pytest.raises(SceneError):
        first_hit(annulus, (0.0, 0.0), (1.0, 0.0))
    with pytest.raises(SceneError):
        first_hit(annulus, (1.5, 0.0), (2.0, 0.0))


def test_polygon_obstacle_hit():
    sq = Polygon(((-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)))
    sc = Scene(Circle((0, 0), 2.0), (sq,))
    assert validate(sc) == []
    h = first_hit(sc, (1.9, 0.1), (-1.0, 0.0))
    assert h.component == 1
    np.testing.assert_allclose(h.point, (0.5, 0.1), atol=1e-12)
    np.testing.assert_allclose(h.inward_normal, (1, 0), atol=1e-12)


def test_polygon_vertex_hit_is_flagged():
    sq = Polygon(((-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)))
    sc = Scene(Circle((0, 0), 2.0), (sq,))
    d = np.array([-1.0, -1.0]) / math.sqrt(2)
    h = first_hit(sc, (1.2, 1.2), d)
    assert h.at_vertex


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 4 * math.pi), st.floats(-1.5, 1.5))
def test_first_hit_matches_bisection_oracle(s0, off):
    sc = concentric_scene()
    p, n, _ = boundary_point(sc, 0, s0)
    ang = math.atan2(n[1], n[0]) + off
    d = np.array([math.cos(ang), math.sin(ang)])
    h = first_hit(sc, p, d)
    t, k = O.bisect_hit(p, d, [((0, 0), 2.0, True), ((0, 0), 1.0, False)])
    assert h.component == k
    np.testing.assert_allclose(h.point, p + t * d, atol=1e-9)
    assert float(np.dot(h.inward_normal, d)) < 0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 1), st.floats(0, 100))
def test_arclength_round_trip(comp, s):
    sc = concentric_scene()
    shape = sc.shape(comp)
    p, n, _ = boundary_point(sc, comp, s)
    back = project_to_arclength(sc, comp, p)
    per = shape.arclength
    gap = abs((back - s) % per)
    assert min(gap, per - gap) < 1e-10
    assert abs(np.linalg.norm(n) - 1) < 1e-12
    assert abs(shape.signed_distance(p)) < 1e-12 * sc.diameter


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 20))
def test_polygon_arclength_round_trip(s):
    tri = Polygon(((0.0, 0.0), (3.0, 0.0), (1.0, 2.0)))
    sc = Scene(tri)
    p, n, _ = boundary_point(sc, 0, s)
    back = project_to_arclength(sc, 0, p)
    per = tri.arclength
    gap = abs((back - s) % per)
    assert min(gap, per - gap) < 1e-10
    assert abs(np.linalg.norm(n) - 1) < 1e-12


def test_scene_dict_round_trip(annulus):
    again = Scene.from_dict(annulus.to_dict())
    assert again == annulus
    assert again.digest() == annulus.digest()
