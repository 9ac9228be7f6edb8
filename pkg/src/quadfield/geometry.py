"""Domain boundaries: parametric curve segments, oriented loops, corners.

A domain is one counter-clockwise outer loop plus optional clockwise hole
loops, so the interior always lies to the left of the oriented boundary.
Segments are parametrized over t in [0, 1] and expose points and exact
derivatives; everything downstream (boundary conditions, corner valences,
streamline termination) is driven by the tangent angle along these curves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GeometryError

TWO_PI = 2.0 * math.pi

# Tangent-angle jump beyond this is a modeled corner; below it is noise.
CORNER_ANGLE_TOL = 1e-3

# Samples per loop for zero counting and point-in-domain polygons.
LOOP_SAMPLES = 4096


def wrap_2pi(a):
    """Wrap angle(s) into [0, 2*pi)."""
    return np.mod(a, TWO_PI)


def wrap_pi(a):
    """Wrap angle(s) into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a), TWO_PI)


def boundary_field(theta_b):
    """Boundary guiding field (cos 4*theta, sin 4*theta) for tangent angle theta_b.

    Invariant under theta_b -> theta_b + k*pi/2, which encodes the 4-fold
    symmetry of a cross.
    """
    t4 = 4.0 * np.asarray(theta_b, dtype=float)
    return np.cos(t4), np.sin(t4)


class CurveSegment:
    """Base class for parametric boundary curves on t in [0, 1]."""

    kind = "abstract"

    def point(self, t):
        raise NotImplementedError

    def deriv(self, t):
        raise NotImplementedError

    def points(self, ts):
        ts = np.asarray(ts, dtype=float)
        return np.stack([self.point(t) for t in ts])

    def start(self):
        return self.point(0.0)

    def end(self):
        return self.point(1.0)

    def tangent_angle(self, t):
        """Angle of the oriented tangent at parameter t."""
        d = self.deriv(t)
        n = math.hypot(d[0], d[1])
        if n < 1e-14 * (1.0 + self._scale()):
            raise GeometryError(f"singular parametrization of {self.kind} segment at t={t}")
        return math.atan2(d[1], d[0])

    def _scale(self):
        p0, p1 = self.start(), self.end()
        return float(np.abs(p0).max() + np.abs(p1).max())

    def arclength_table(self, n=256):
        """Cumulative arclength at n+1 uniform t samples (cached)."""
        tab = getattr(self, "_arc_tab", None)
        if tab is None or len(tab[0]) != n + 1:
            ts = np.linspace(0.0, 1.0, n + 1)
            pts = self.points(ts)
            seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
            cum = np.concatenate([[0.0], np.cumsum(seg)])
            self._arc_tab = (ts, cum)
            tab = self._arc_tab
        return tab

    def arclength(self):
        return float(self.arclength_table()[1][-1])

    def t_at_arclength(self, s):
        """Parameter t at arclength s from the segment start (s may be an array)."""
        ts, cum = self.arclength_table()
        return np.interp(s, cum, ts)

    def closest_point(self, x):
        """(t, distance) of the closest point on this segment to x."""
        ts, _ = self.arclength_table()
        pts = self.points(ts)
        d2 = (pts[:, 0] - x[0]) ** 2 + (pts[:, 1] - x[1]) ** 2
        i = int(np.argmin(d2))
        # refine by Newton on d/dt |p(t)-x|^2 with bisection fallback
        lo = ts[max(i - 1, 0)]
        hi = ts[min(i + 1, len(ts) - 1)]
        t = ts[i]
        for _ in range(40):
            p = self.point(t)
            dp = self.deriv(t)
            g = 2.0 * np.dot(p - x, dp)
            if g > 0:
                hi = t
            else:
                lo = t
            t = 0.5 * (lo + hi)
        p = self.point(t)
        return float(t), float(math.hypot(p[0] - x[0], p[1] - x[1]))


class Line(CurveSegment):
    kind = "line"

    def __init__(self, p0, p1):
        self.p0 = np.asarray(p0, dtype=float)
        self.p1 = np.asarray(p1, dtype=float)

    def point(self, t):
        return self.p0 + t * (self.p1 - self.p0)

    def points(self, ts):
        ts = np.asarray(ts, dtype=float)[:, None]
        return self.p0 + ts * (self.p1 - self.p0)

    def deriv(self, t):
        return self.p1 - self.p0

    def to_json(self):
        return {"kind": "line", "p0": list(self.p0), "p1": list(self.p1)}


class Arc(CurveSegment):
    """Circular arc from angle a0 to a1 (signed sweep sets orientation)."""

    kind = "arc"

    def __init__(self, center, radius, a0, a1):
        if radius <= 0:
            raise GeometryError("arc radius must be positive")
        if a0 == a1:
            raise GeometryError("arc sweep must be nonzero")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.a0 = float(a0)
        self.a1 = float(a1)

    def _angle(self, t):
        return self.a0 + t * (self.a1 - self.a0)

    def point(self, t):
        a = self._angle(t)
        return self.center + self.radius * np.array([math.cos(a), math.sin(a)])

    def points(self, ts):
        a = self._angle(np.asarray(ts, dtype=float))
        return self.center + self.radius * np.stack([np.cos(a), np.sin(a)], axis=-1)

    def deriv(self, t):
        a = self._angle(t)
        sweep = self.a1 - self.a0
        return self.radius * sweep * np.array([-math.sin(a), math.cos(a)])

    def to_json(self):
        return {"kind": "arc", "center": list(self.center), "radius": self.radius,
                "a0": self.a0, "a1": self.a1}


class Spline(CurveSegment):
    """Natural cubic spline through the given points, chord-length parametrized."""

    kind = "spline"

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if len(pts) < 3:
            raise GeometryError("spline needs at least 3 points")
        from scipy.interpolate import CubicSpline
        chord = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
        if chord[-1] <= 0:
            raise GeometryError("spline control points are coincident")
        self._u = chord / chord[-1]
        self._cs = CubicSpline(self._u, pts, bc_type="natural")
        self.ctrl = pts

    def point(self, t):
        return np.asarray(self._cs(t), dtype=float)

    def points(self, ts):
        return np.asarray(self._cs(np.asarray(ts, dtype=float)), dtype=float)

    def deriv(self, t):
        return np.asarray(self._cs(t, 1), dtype=float)

    def to_json(self):
        return {"kind": "spline", "points": [list(p) for p in self.ctrl]}


class Naca4(CurveSegment):
    """Closed 4-digit airfoil traversed TE -> lower -> LE -> upper -> TE.

    That direction keeps the exterior flow domain on the left, so a naca4
    segment forms a complete hole loop on its own.  The trailing edge uses
    the closed-TE thickness coefficient, so point(0) == point(1) exactly and
    the TE is a finite-angle corner.  The leading edge is parametrized via
    x = s^2, which keeps the derivative finite and nonzero there.
    """

    kind = "naca4"

    _C = (0.2969, -0.1260, -0.3516, 0.2843, -0.1036)

    def __init__(self, code, chord=1.0, origin=(0.0, 0.0)):
        code = str(code)
        if len(code) != 4 or not code.isdigit():
            raise GeometryError(f"invalid naca4 code {code!r}")
        self.code = code
        self.m = int(code[0]) / 100.0
        self.p = int(code[1]) / 10.0
        self.thick = int(code[2:]) / 100.0
        if self.thick <= 0:
            raise GeometryError("zero-thickness airfoil is degenerate")
        self.chord = float(chord)
        self.origin = np.asarray(origin, dtype=float)

    def _half_thickness(self, s):
        # thickness polynomial in s = sqrt(x/c); analytic in s through the LE
        c0, c1, c2, c3, c4 = self._C
        return 5.0 * self.thick * (c0 * s + c1 * s**2 + c2 * s**4 + c3 * s**6 + c4 * s**8)

    def _half_thickness_ds(self, s):
        c0, c1, c2, c3, c4 = self._C
        return 5.0 * self.thick * (c0 + 2 * c1 * s + 4 * c2 * s**3 + 6 * c3 * s**5 + 8 * c4 * s**7)

    def _camber(self, x):
        m, p = self.m, self.p
        if m == 0.0:
            return 0.0, 0.0
        if x < p:
            return m / p**2 * (2 * p * x - x * x), 2 * m / p**2 * (p - x)
        return m / (1 - p) ** 2 * ((1 - 2 * p) + 2 * p * x - x * x), 2 * m / (1 - p) ** 2 * (p - x)

    def _surface(self, s, side):
        """Point and d/ds on the given surface (+1 upper, -1 lower), unit chord."""
        x = s * s
        yt = self._half_thickness(s)
        dyt = self._half_thickness_ds(s)
        if self.m == 0.0:
            return np.array([x, side * yt]), np.array([2 * s, side * dyt])
        yc, dyc_dx = self._camber(x)
        th = math.atan(dyc_dx)
        # d(theta)/ds: camber slope is linear in x on each branch
        d2yc = -2 * self.m / (self.p**2 if x < self.p else (1 - self.p) ** 2)
        dth_ds = d2yc * 2 * s / (1 + dyc_dx**2)
        px = x - side * yt * math.sin(th)
        py = yc + side * yt * math.cos(th)
        dpx = 2 * s - side * (dyt * math.sin(th) + yt * math.cos(th) * dth_ds)
        dpy = dyc_dx * 2 * s + side * (dyt * math.cos(th) - yt * math.sin(th) * dth_ds)
        return np.array([px, py]), np.array([dpx, dpy])

    def _eval(self, t):
        if t <= 0.5:
            s = 1.0 - 2.0 * t
            p, dp = self._surface(s, -1.0)
            dp = -2.0 * dp
        else:
            s = 2.0 * t - 1.0
            p, dp = self._surface(s, +1.0)
            dp = 2.0 * dp
        return self.origin + self.chord * p, self.chord * dp

    def point(self, t):
        return self._eval(float(t))[0]

    def deriv(self, t):
        return self._eval(float(t))[1]

    def to_json(self):
        return {"kind": "naca4", "code": self.code, "chord": self.chord,
                "origin": list(self.origin)}


def tangent_angle(segment, t):
    """Tangent angle theta_b = atan2(y', x') of the oriented curve at t."""
    if not 0.0 <= t <= 1.0:
        raise GeometryError(f"parameter t={t} outside [0, 1]")
    return segment.tangent_angle(t)


@dataclass
class CornerSpec:
    """A tangent-angle discontinuity at a segment junction."""

    position: np.ndarray
    theta_in: float        # incoming tangent angle
    theta_out: float       # outgoing tangent angle
    delta_theta: float     # interior angle in (0, 2*pi)
    loop_index: int
    seg_in: int            # index of the incoming segment within the loop
    seg_out: int
    bc_continuous: bool    # interior angle is a multiple of pi/2

    def wedge_angles(self):
        """Direction interval [start, start+delta] covering the interior wedge."""
        return self.theta_out, self.theta_out + self.delta_theta


class BoundaryLoop:
    """Closed chain of segments; orientation 'outer' (ccw) or 'hole' (cw)."""

    def __init__(self, segments, orientation):
        if orientation not in ("outer", "hole"):
            raise GeometryError(f"unknown loop orientation {orientation!r}")
        if not segments:
            raise GeometryError("empty loop")
        self.segments = list(segments)
        self.orientation = orientation
        self._check_closed()
        self._poly = None

    def _check_closed(self):
        pts = [(s.start(), s.end()) for s in self.segments]
        diag = self._bbox_diag(pts)
        tol = max(1e-12 * diag, 1e-14)
        for i, seg in enumerate(self.segments):
            nxt = self.segments[(i + 1) % len(self.segments)]
            gap = np.hypot(*(seg.end() - nxt.start()))
            if gap > tol:
                raise GeometryError(
                    f"loop not closed: segment {i} ends {gap:.3e} away from segment "
                    f"{(i + 1) % len(self.segments)}")

    @staticmethod
    def _bbox_diag(endpoint_pairs):
        arr = np.array([p for pair in endpoint_pairs for p in pair])
        return float(np.hypot(*(arr.max(axis=0) - arr.min(axis=0)))) or 1.0

    def sample_arclength(self, n=LOOP_SAMPLES):
        """n points uniform in arclength around the loop.

        Returns (points[n,2], thetas[n], seg_indices[n], ts[n]).
        """
        lens = np.array([s.arclength() for s in self.segments])
        total = lens.sum()
        counts = np.maximum(np.round(n * lens / total).astype(int), 8)
        pts, ths, sids, ts = [], [], [], []
        for i, (seg, cnt) in enumerate(zip(self.segments, counts)):
            svals = np.linspace(0.0, lens[i], cnt, endpoint=False)
            tvals = seg.t_at_arclength(svals)
            pts.append(seg.points(tvals))
            ths.extend(seg.tangent_angle(t) for t in tvals)
            sids.extend([i] * cnt)
            ts.extend(tvals)
        return np.concatenate(pts), np.array(ths), np.array(sids), np.array(ts)

    def polygon(self, n=LOOP_SAMPLES):
        """Cached dense polygon approximation for point-in-domain tests."""
        if self._poly is None or len(self._poly) != n:
            self._poly = self.sample_arclength(n)[0]
        return self._poly

    def signed_area(self):
        p = self.polygon()
        x, y = p[:, 0], p[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def corners(self, loop_index=0, tol=CORNER_ANGLE_TOL):
        """CornerSpecs at every junction with tangent jump beyond tol."""
        out = []
        nseg = len(self.segments)
        for j in range(nseg):
            seg_in = self.segments[j]
            seg_out = self.segments[(j + 1) % nseg]
            th_in = seg_in.tangent_angle(1.0)
            th_out = seg_out.tangent_angle(0.0)
            jump = abs(float(wrap_pi(th_out - th_in)))
            if jump <= tol:
                continue
            delta = float(wrap_2pi(th_in + math.pi - th_out))
            if delta < tol:
                delta = TWO_PI  # full reversal: treat as a cusp wedge
            frac = delta % (math.pi / 2.0)
            bc_cont = min(frac, math.pi / 2.0 - frac) <= tol
            out.append(CornerSpec(
                position=seg_out.start().copy(),
                theta_in=th_in, theta_out=th_out, delta_theta=delta,
                loop_index=loop_index, seg_in=j, seg_out=(j + 1) % nseg,
                bc_continuous=bc_cont))
        return out

    def to_json(self):
        return {"orientation": self.orientation,
                "segments": [s.to_json() for s in self.segments]}


def boundary_zero_count(loop, component, n=LOOP_SAMPLES):
    """Sign changes of one boundary-field component around a smooth loop."""
    if loop.corners():
        raise GeometryError("smooth loop required: boundary_zero_count with corners present")
    if component not in ("u", "v"):
        raise GeometryError(f"component must be 'u' or 'v', got {component!r}")
    _, thetas, _, _ = loop.sample_arclength(n)
    u, v = boundary_field(thetas)
    vals = u if component == "u" else v
    signs = np.sign(vals)
    # treat exact zeros as the following sample's sign
    for i in range(len(signs) - 2, -1, -1):
        if signs[i] == 0:
            signs[i] = signs[i + 1]
    return int(np.sum(signs != np.roll(signs, -1)) // 1) if len(signs) else 0


def boundary_zero_positions(loop, component, n=LOOP_SAMPLES):
    """Arclength fractions of the zero crossings (midpoint of the straddle)."""
    _, thetas, _, _ = loop.sample_arclength(n)
    u, v = boundary_field(thetas)
    vals = u if component == "u" else v
    nxt = np.roll(vals, -1)
    idx = np.nonzero(np.sign(vals) * np.sign(nxt) < 0)[0]
    return (idx + 0.5) / len(vals)


class DomainSpec:
    """One outer loop plus zero or more hole loops."""

    def __init__(self, loops, name="domain"):
        outers = [lp for lp in loops if lp.orientation == "outer"]
        holes = [lp for lp in loops if lp.orientation == "hole"]
        if len(outers) != 1:
            raise GeometryError(f"domain needs exactly one outer loop, got {len(outers)}")
        self.name = str(name)
        self.outer = outers[0]
        self.holes = holes
        self.loops = [self.outer] + self.holes
        self._validate()

    def _validate(self):
        if self.outer.signed_area() <= 0:
            raise GeometryError("outer loop must be counter-clockwise")
        for i, h in enumerate(self.holes):
            if h.signed_area() >= 0:
                raise GeometryError(f"hole loop {i} must be clockwise")
            probe = h.polygon()[::97]
            if not all(_point_in_polygon(p, self.outer.polygon()) for p in probe):
                raise GeometryError(f"hole loop {i} not inside the outer loop")
        for i in range(len(self.holes)):
            for j in range(i + 1, len(self.holes)):
                pi = self.holes[i].polygon()[::257]
                if any(_point_in_polygon(p, self.holes[j].polygon()) for p in pi):
                    raise GeometryError(f"hole loops {i} and {j} overlap")

    def bbox(self):
        pts = np.concatenate([lp.polygon() for lp in self.loops])
        return pts.min(axis=0), pts.max(axis=0)

    def bbox_diag(self):
        lo, hi = self.bbox()
        return float(np.hypot(*(hi - lo)))

    def contains(self, x):
        """Point-in-domain test on the dense polygon approximation."""
        if not _point_in_polygon(x, self.outer.polygon()):
            return False
        return all(not _point_in_polygon(x, h.polygon()) for h in self.holes)

    def area(self):
        """Domain area by the shoelace formula on the dense polygons."""
        return float(sum(lp.signed_area() for lp in self.loops))

    def corner_inventory(self):
        out = []
        for li, lp in enumerate(self.loops):
            out.extend(lp.corners(loop_index=li))
        return out

    def closest_boundary_point(self, x):
        """(loop_index, seg_index, t, distance) of the globally closest boundary point."""
        best = None
        for li, lp in enumerate(self.loops):
            for si, seg in enumerate(lp.segments):
                t, d = seg.closest_point(np.asarray(x, dtype=float))
                if best is None or d < best[3]:
                    best = (li, si, t, d)
        return best

    def to_json(self):
        return {"name": self.name, "loops": [lp.to_json() for lp in self.loops]}


def _point_in_polygon(x, poly):
    """Crossing-number test; points on the boundary may land either way."""
    px, py = float(x[0]), float(x[1])
    xs, ys = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(xs, -1), np.roll(ys, -1)
    straddle = (ys > py) != (yn > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = xs + (py - ys) / (yn - ys) * (xn - xs)
    return bool(np.sum(straddle & (px < xint)) % 2)


def _segment_from_json(d):
    kind = d.get("kind")
    if kind == "line":
        return Line(d["p0"], d["p1"])
    if kind == "arc":
        return Arc(d["center"], d["radius"], d["a0"], d["a1"])
    if kind == "spline":
        return Spline(d["points"])
    if kind == "naca4":
        return Naca4(d["code"], d.get("chord", 1.0), d.get("origin", (0.0, 0.0)))
    raise GeometryError(f"unknown segment kind {kind!r}")


def domain_from_json(doc):
    loops = [BoundaryLoop([_segment_from_json(s) for s in lp["segments"]], lp["orientation"])
             for lp in doc["loops"]]
    return DomainSpec(loops, name=doc.get("name", "domain"))


def load_domain(path):
    with open(path) as f:
        return domain_from_json(json.load(f))


def save_domain(domain, path):
    with open(path, "w") as f:
        json.dump(domain.to_json(), f, indent=1, sort_keys=True)
        f.write("\n")


_FIXTURES = Path(__file__).parent / "fixtures"


def fixture_path(name):
    p = _FIXTURES / f"{name}.json"
    if not p.exists():
        raise GeometryError(f"no fixture named {name!r}")
    return p


def load_fixture(name):
    return load_domain(fixture_path(name))
