import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from quadfield.errors import GeometryError
from quadfield.geometry import (Arc, BoundaryLoop, Line, Naca4, Spline,
                                boundary_field, boundary_zero_count,
                                boundary_zero_positions, domain_from_json,
                                load_fixture, tangent_angle)

from conftest import square_domain


def test_tangent_angle_horizontal_line():
    seg = Line((0.0, 0.0), (2.0, 0.0))
    for t in (0.0, 0.3, 1.0):
        assert tangent_angle(seg, t) == pytest.approx(0.0, abs=1e-15)


def test_tangent_angle_ccw_arc_top():
    seg = Arc((0.0, 0.0), 1.0, 0.0, math.pi)
    assert tangent_angle(seg, 0.5) == pytest.approx(math.pi, abs=1e-12)


def test_tangent_angle_naca_trailing_edge_against_finite_differences():
    foil = Naca4("0012")
    # upper surface near the trailing edge: t slightly below 1
    for t in (0.92, 0.96, 0.99):
        ang = tangent_angle(foil, t)
        assert -math.pi / 2 < ang < 0.0
        eps = 1e-7
        p0 = foil.point(t - eps)
        p1 = foil.point(t + eps)
        fd = math.atan2(p1[1] - p0[1], p1[0] - p0[0])
        assert ang == pytest.approx(fd, abs=1e-5)


def test_naca_closed_trailing_edge():
    foil = Naca4("0012", chord=2.0, origin=(0.5, -0.25))
    assert np.allclose(foil.point(0.0), foil.point(1.0), atol=1e-14)
    assert np.allclose(foil.point(0.0), [2.5, -0.25], atol=1e-12)


def test_degenerate_segment_raises():
    seg = Line((1.0, 1.0), (1.0, 1.0))
    with pytest.raises(GeometryError, match="singular"):
        tangent_angle(seg, 0.5)


def test_boundary_field_trivials():
    assert boundary_field(0.0) == pytest.approx((1.0, 0.0))
    u, v = boundary_field(math.pi / 8)
    assert u == pytest.approx(0.0, abs=1e-15)
    assert v == pytest.approx(1.0)
    u, v = boundary_field(math.pi / 4)
    assert u == pytest.approx(-1.0)
    assert v == pytest.approx(0.0, abs=1e-15)


@given(st.floats(-10.0, 10.0), st.integers(-8, 8))
def test_boundary_field_quarter_turn_symmetry(theta, k):
    u1, v1 = boundary_field(theta)
    u2, v2 = boundary_field(theta + k * math.pi / 2)
    assert u1 == pytest.approx(u2, abs=1e-9)
    assert v1 == pytest.approx(v2, abs=1e-9)


def test_boundary_field_symmetry_bulk():
    rng = np.random.default_rng(0)
    thetas = rng.uniform(-20, 20, 1000)
    u1, v1 = boundary_field(thetas)
    u2, v2 = boundary_field(thetas + math.pi / 2)
    assert np.abs(u1 - u2).max() < 1e-12
    assert np.abs(v1 - v2).max() < 1e-12


@pytest.mark.parametrize("radius", [1.0, 0.3, 7.5])
@pytest.mark.parametrize("component", ["u", "v"])
def test_circle_zero_count(radius, component):
    loop = BoundaryLoop([Arc((0, 0), radius, 0.0, 2 * math.pi)], "outer")
    assert boundary_zero_count(loop, component) == 8


def test_circle_zeros_interlace():
    loop = BoundaryLoop([Arc((0, 0), 1.0, 0.0, 2 * math.pi)], "outer")
    zu = boundary_zero_positions(loop, "u")
    zv = boundary_zero_positions(loop, "v")
    assert len(zu) == len(zv) == 8
    merged = sorted([(s, "u") for s in zu] + [(s, "v") for s in zv])
    kinds = [k for _, k in merged]
    assert all(kinds[i] != kinds[(i + 1) % 16] for i in range(16))


def _rounded_rectangle_loop(w=3.0, h=1.6, r=0.5, rot=0.3):
    """Smooth closed generic loop: rotated lines joined by tangent arcs.

    Rotation keeps every straight run away from the special tangent angles
    where one field component vanishes identically.
    """
    c, s = math.cos(rot), math.sin(rot)

    def R(p):
        return (c * p[0] - s * p[1], s * p[0] + c * p[1])

    segs = [
        Line(R((r, 0.0)), R((w - r, 0.0))),
        Arc(R((w - r, r)), r, -math.pi / 2 + rot, 0.0 + rot),
        Line(R((w, r)), R((w, h - r))),
        Arc(R((w - r, h - r)), r, 0.0 + rot, math.pi / 2 + rot),
        Line(R((w - r, h)), R((r, h))),
        Arc(R((r, h - r)), r, math.pi / 2 + rot, math.pi + rot),
        Line(R((0.0, h - r)), R((0.0, r))),
        Arc(R((r, r)), r, math.pi + rot, 1.5 * math.pi + rot),
    ]
    return BoundaryLoop(segs, "outer")


def test_smooth_noncircular_loop_zeros_interlace():
    loop = _rounded_rectangle_loop()
    assert not loop.corners()
    assert boundary_zero_count(loop, "u") == 8
    assert boundary_zero_count(loop, "v") == 8
    zu = boundary_zero_positions(loop, "u")
    zv = boundary_zero_positions(loop, "v")
    merged = sorted([(s, "u") for s in zu] + [(s, "v") for s in zv])
    kinds = [k for _, k in merged]
    assert all(kinds[i] != kinds[(i + 1) % 16] for i in range(16))


def test_zero_count_requires_smooth_loop(half_disc):
    with pytest.raises(GeometryError, match="smooth"):
        boundary_zero_count(half_disc.outer, "u")


def test_half_disc_corners(half_disc):
    corners = half_disc.corner_inventory()
    assert len(corners) == 2
    for c in corners:
        assert c.delta_theta == pytest.approx(math.pi / 2, abs=1e-9)
        assert c.bc_continuous
    assert sorted(round(c.position[0]) for c in corners) == [-1, 1]


def test_square_corners():
    corners = square_domain().corner_inventory()
    assert len(corners) == 4
    assert all(c.bc_continuous for c in corners)


def test_polygon_iii_has_discontinuous_corner(polygon_iii):
    corners = polygon_iii.corner_inventory()
    assert any(not c.bc_continuous for c in corners)


def test_corner_inventory_rotation_invariant(half_disc):
    segs = half_disc.outer.segments
    rotated = BoundaryLoop(segs[1:] + segs[:1], "outer")
    base = {tuple(np.round(c.position, 9)): round(c.delta_theta, 9)
            for c in half_disc.outer.corners()}
    rot = {tuple(np.round(c.position, 9)): round(c.delta_theta, 9)
           for c in rotated.corners()}
    assert base == rot


def test_smooth_loop_tangent_continuity():
    loop = BoundaryLoop([Arc((0, 0), 1.0, 0.0, 2 * math.pi)], "outer")
    _, thetas, _, _ = loop.sample_arclength(2048)
    jumps = np.abs(np.remainder(np.diff(thetas) + math.pi, 2 * math.pi) - math.pi)
    assert jumps.max() < 1e-2


def test_spline_segment_interpolates_points():
    pts = [(0, 0), (1, 0.5), (2, 0.2), (3, 1.0)]
    seg = Spline(pts)
    assert np.allclose(seg.point(0.0), pts[0], atol=1e-12)
    assert np.allclose(seg.point(1.0), pts[-1], atol=1e-12)


def test_domain_json_roundtrip(tmp_path, half_disc):
    doc = half_disc.to_json()
    again = domain_from_json(doc)
    assert again.to_json() == doc
    assert again.area() == pytest.approx(half_disc.area())


def test_orientation_validation():
    cw = [Line((0, 0), (0, 1)), Line((0, 1), (1, 1)), Line((1, 1), (1, 0)),
          Line((1, 0), (0, 0))]
    with pytest.raises(GeometryError, match="counter-clockwise"):
        domain_from_json({"name": "bad", "loops": [
            {"orientation": "outer",
             "segments": [s.to_json() for s in cw]}]})


def test_hole_must_be_inside():
    doc = square_domain().to_json()
    doc["loops"].append({"orientation": "hole", "segments": [
        {"kind": "arc", "center": [5.0, 5.0], "radius": 0.3,
         "a0": 2 * math.pi, "a1": 0.0}]})
    with pytest.raises(GeometryError, match="inside"):
        domain_from_json(doc)


def test_fixture_files_load():
    for name in ("half_disc", "geometry_I", "polygon_III", "naca_IV",
                 "nautilus", "holed_nautilus"):
        dom = load_fixture(name)
        assert dom.area() > 0


def test_domain_contains(half_disc):
    assert half_disc.contains((0.0, 0.5))
    assert not half_disc.contains((0.0, -0.5))
    assert not half_disc.contains((5.0, 5.0))
