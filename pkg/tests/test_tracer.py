import math

import numpy as np
import pytest

from quadfield.errors import TracingError
from quadfield.field import AnalyticProbe
from quadfield.tracer import (Anchor, Streamline, advance_all, detect_meeting,
                              initial_directions, merge, refine_direction,
                              trace_all)

UNIFORM = AnalyticProbe(lambda x, y: (1.0, 0.0))


def circular_probe():
    return AnalyticProbe(lambda x, y: (
        math.cos(4 * (math.atan2(y, x) + math.pi / 2)),
        math.sin(4 * (math.atan2(y, x) + math.pi / 2))))


def test_refine_direction_uniform_field():
    assert refine_direction(np.zeros(2), 0.1, UNIFORM, 0.05) == \
        pytest.approx(0.0, abs=1e-9)
    assert refine_direction(np.zeros(2), 1.5, UNIFORM, 0.05) == \
        pytest.approx(math.pi / 2, abs=1e-9)


def test_initial_directions_distinct():
    dirs = initial_directions(np.zeros(2), 4, UNIFORM, 0.05, first_guess=0.2)
    assert len(dirs) == 4
    gaps = sorted(d % (2 * math.pi) for d in dirs)
    assert np.allclose(np.diff(gaps), math.pi / 2, atol=1e-8)


def test_half_disc_node_directions(half_disc_topology, half_disc_probe):
    cps, _ = half_disc_topology
    cp = cps[0]
    dirs = initial_directions(cp.position, cp.valence, half_disc_probe, cp.radius)
    assert len(dirs) == 3
    angles = np.sort(np.mod(dirs, 2 * math.pi))
    gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * math.pi]]))
    assert np.abs(gaps - 2 * math.pi / 3).max() < math.radians(15)


def test_uniform_field_straight_polyline():
    sl = Streamline(Anchor("critical", 0, np.zeros(2)), 0, [np.zeros(2)], [0.0])
    h = 0.01
    for _ in range(10):
        advance_all([sl], UNIFORM, h)
    assert np.abs(sl.front() - np.array([10 * h, 0.0])).max() < 1e-12


def test_ab4_order_on_circle():
    drifts = []
    for n in (300, 600, 1200):
        h = 2 * math.pi / n
        sl = Streamline(Anchor("critical", 0, np.array([1.0, 0.0])), 0,
                        [np.array([1.0, 0.0])], [math.pi / 2])
        probe = circular_probe()
        for _ in range(n):
            advance_all([sl], probe, h)
        drifts.append(float(np.hypot(*(sl.front() - np.array([1.0, 0.0])))))
    orders = [math.log2(drifts[i] / drifts[i + 1]) for i in range(2)]
    for o in orders:
        assert 3.5 <= o <= 4.5


def test_branch_continuity_along_streamlines(half_disc_traced):
    _, streamlines, _ = half_disc_traced
    for sl in streamlines:
        alphas = np.asarray(sl.alphas)
        if len(alphas) > 1:
            assert np.abs(np.diff(alphas)).max() < math.pi / 4


def test_detect_meeting_antiparallel():
    a = Streamline(Anchor("critical", 0, np.zeros(2)), 0,
                   [np.array([0.0, 0.0])], [0.0])
    b = Streamline(Anchor("critical", 1, np.ones(2)), 0,
                   [np.array([0.005, 0.0])], [math.pi])
    assert detect_meeting(a, b, 0.01)
    b.alphas = [0.0]
    assert not detect_meeting(a, b, 0.01)


def test_detect_meeting_aggressive_threshold():
    h = 0.01
    a = Streamline(Anchor("critical", 0, np.zeros(2)), 0,
                   [np.array([0.0, 0.0])], [0.0])
    b = Streamline(Anchor("critical", 1, np.ones(2)), 0,
                   [np.array([3 * h, 0.0])], [math.pi])
    assert not detect_meeting(a, b, h)
    assert detect_meeting(a, b, 5 * h)


def test_merge_weights():
    pa = [np.array([0.0, 0.0]), np.array([0.5, 0.1]), np.array([1.0, 0.0])]
    pb = [np.array([1.0, 0.3]), np.array([0.5, 0.4]), np.array([0.0, 0.3])]
    a = Streamline(Anchor("critical", 0, pa[0]), 0, [p.copy() for p in pa],
                   [0.0, 0.0, 0.0])
    b = Streamline(Anchor("critical", 1, pb[0]), 0, [p.copy() for p in pb],
                   [math.pi, math.pi, math.pi])
    sep = merge(a, b)
    assert np.allclose(sep.points[0], pa[0], atol=0)
    assert np.allclose(sep.points[-1], pb[0], atol=0)
    mid = sep.points[len(sep.points) // 2]
    assert 0.1 < mid[1] < 0.35


def test_merge_preserves_end_tangents():
    n = 40
    xs = np.linspace(0, 1, n)
    pa = [np.array([x, 0.0]) for x in xs]
    pb = [np.array([1 - x, 0.2]) for x in xs]
    a = Streamline(Anchor("critical", 0, pa[0]), 0, pa, [0.0] * n)
    b = Streamline(Anchor("critical", 1, pb[0]), 0, pb, [math.pi] * n)
    sep = merge(a, b)
    t0 = sep.points[1] - sep.points[0]
    t1 = sep.points[-1] - sep.points[-2]
    assert abs(math.atan2(t0[1], t0[0]) - 0.0) < 1e-3
    assert abs(math.remainder(math.atan2(t1[1], t1[0]) - 0.0, math.pi)) < 1e-3


def test_half_disc_trace_topology(half_disc_traced, half_disc_topology):
    seps, streamlines, h_s = half_disc_traced
    cps, _ = half_disc_topology
    assert len(streamlines) == 6          # two 3-valent nodes
    assert all(sl.status in ("merged", "hit_boundary") for sl in streamlines)
    assert len(seps) == 5
    kinds = sorted((s.start.kind, s.end.kind) for s in seps)
    assert kinds.count(("critical", "critical")) == 1
    assert kinds.count(("critical", "boundary")) == 4


def test_no_separatrix_exits_domain(half_disc, half_disc_traced):
    seps, _, _ = half_disc_traced
    for s in seps:
        for p in s.points:
            if half_disc.contains(p):
                continue
            _, _, _, dist = half_disc.closest_boundary_point(p)
            assert dist < 1e-9


def test_trace_determinism(half_disc, half_disc_mesh, half_disc_probe,
                           half_disc_topology):
    cps, cns = half_disc_topology
    h_s = 0.25 * half_disc_mesh.shortest_edge()
    a, _ = trace_all(cps, cns, half_disc_probe, half_disc, h_s)
    b, _ = trace_all(cps, cns, half_disc_probe, half_disc, h_s)
    assert len(a) == len(b)
    for sa, sb in zip(a, b):
        assert np.array_equal(np.asarray(sa.points), np.asarray(sb.points))


def test_limit_cycle_abort():
    probe = circular_probe()
    from quadfield.geometry import Arc, BoundaryLoop, DomainSpec
    ring = DomainSpec([
        BoundaryLoop([Arc((0, 0), 2.0, 0.0, 2 * math.pi)], "outer"),
        BoundaryLoop([Arc((0, 0), 0.5, 2 * math.pi, 0.0)], "hole"),
    ], name="ring")

    class FakeCp:
        position = np.array([1.0, 0.0])
        valence = 1
        radius = 0.05

    with pytest.raises(TracingError):
        # single streamline riding concentric circles never terminates
        sl = Streamline(Anchor("critical", 0, FakeCp.position), 0,
                        [FakeCp.position.copy()], [math.pi / 2])
        registry = type("R", (), {"resolve": lambda self, *a: None,
                                  "corner_anchors": []})()
        for _ in range(4000):
            advance_all([sl], probe, 0.02, domain=ring, registry=registry,
                        n_max=1000)
            if sl.status == "aborted":
                raise TracingError("limit cycle")
        raise AssertionError("streamline should have aborted")
