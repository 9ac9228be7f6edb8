"""Planar subdivision of the domain by boundary arcs and separatrices.

Boundary loops are split at corners and separatrix feet, separatrices become
interior edges, and faces are extracted from a half-edge structure by
minimum-turn walking.  Degenerate (zero-valence corner) triangles are
repaired by midpoint division: an artificial 3-valent node on a field
streamline launched from the bad corner, joined to the surrounding sides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DecompositionError
from .errors import TracingError
from .tracer import Anchor, Streamline, advance_all, refine_direction

AREA_TOL = 1e-14


@dataclass
class VertexRec:
    key: tuple
    position: np.ndarray
    kind: str                   # critical|corner|boundary|artificial|cross|seam
    corner_valence: int = -1    # kind == "corner" only


@dataclass
class EdgeRec:
    v0: tuple
    v1: tuple
    polyline: np.ndarray        # dense, polyline[0] == pos(v0), [-1] == pos(v1)
    kind: str                   # boundary | separatrix | branch | tail
    loop: int = -1
    allow_cross: bool = False   # midpoint tails may cross existing separatrices


def catmull_rom_densify(points, subdiv=6):
    """C1 interpolating spline through the polyline points, densely sampled."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n < 3 or subdiv < 2:
        return pts.copy()
    ext = np.vstack([2 * pts[0] - pts[1], pts, 2 * pts[-1] - pts[-2]])
    out = [pts[0]]
    for i in range(n - 1):
        p0, p1, p2, p3 = ext[i], ext[i + 1], ext[i + 2], ext[i + 3]
        for k in range(1, subdiv + 1):
            t = k / subdiv
            t2, t3 = t * t, t * t * t
            out.append(0.5 * ((2 * p1) + (-p0 + p2) * t
                              + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t2
                              + (-p0 + 3 * p1 - 3 * p2 + p3) * t3))
    out[-1] = pts[-1]
    return np.asarray(out)


def _loop_cumlen(loop):
    lens = [seg.arclength() for seg in loop.segments]
    return np.concatenate([[0.0], np.cumsum(lens)])


def _loop_point(loop, cum, s):
    total = cum[-1]
    s = s % total
    seg_i = int(np.searchsorted(cum, s, side="right") - 1)
    seg_i = min(seg_i, len(loop.segments) - 1)
    t = float(loop.segments[seg_i].t_at_arclength(s - cum[seg_i]))
    return loop.segments[seg_i].point(t)


def _sample_boundary_arc(loop, cum, s0, s1, spacing):
    total = cum[-1]
    if s1 <= s0:
        s1 += total
    n = max(8, int(math.ceil((s1 - s0) / spacing)))
    svals = np.linspace(s0, s1, n + 1)
    return np.array([_loop_point(loop, cum, s) for s in svals])


def boundary_records(domain, corner_nodes, boundary_anchors):
    """Vertices and boundary-arc edges from corners and separatrix feet."""
    vertices = {}
    records = []
    spacing = domain.bbox_diag() / 400.0

    corner_events = {}
    for i, cn in enumerate(corner_nodes):
        c = cn.corner
        key = ("corner", i)
        vertices[key] = VertexRec(key, np.asarray(c.position, dtype=float), "corner",
                                  corner_valence=cn.valence)
        corner_events.setdefault(c.loop_index, []).append((key, c))

    anchor_events = {}
    for a in boundary_anchors:
        key = ("boundary", a.ident)
        vertices[key] = VertexRec(key, np.asarray(a.position, dtype=float), "boundary")
        anchor_events.setdefault(a.loop, []).append((key, a))

    for li, loop in enumerate(domain.loops):
        cum = _loop_cumlen(loop)
        total = cum[-1]
        events = []
        for key, c in corner_events.get(li, []):
            s = cum[c.seg_out] % total
            events.append((s, key))
        for key, a in anchor_events.get(li, []):
            ts, cl = loop.segments[a.seg].arclength_table()
            s = cum[a.seg] + float(np.interp(a.t, ts, cl))
            events.append((s % total, key))
        if not events:
            key = ("seam", li)
            pos = loop.segments[0].point(0.0)
            vertices[key] = VertexRec(key, pos, "seam")
            poly = _sample_boundary_arc(loop, cum, 0.0, total, spacing)
            poly[0] = pos
            poly[-1] = pos
            records.append(EdgeRec(key, key, poly, "boundary", loop=li))
            continue
        events.sort(key=lambda ev: ev[0])
        m = len(events)
        for i in range(m):
            s0, k0 = events[i]
            s1, k1 = events[(i + 1) % m]
            poly = _sample_boundary_arc(loop, cum, s0, s1, spacing)
            poly[0] = vertices[k0].position
            poly[-1] = vertices[k1].position
            records.append(EdgeRec(k0, k1, poly, "boundary", loop=li))
    return vertices, records


def _trim_near_anchors(points):
    """Drop interior points inside one step of either anchor.

    Boundary snapping can fold the last integrated points back across the
    anchor; removing that sub-step zigzag keeps the densified curve clean.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 4:
        return pts
    step = float(np.median(np.hypot(*np.diff(pts, axis=0).T)))
    keep = [pts[0]]
    for p in pts[1:-1]:
        if np.hypot(*(p - pts[0])) > 1.05 * step and \
           np.hypot(*(p - pts[-1])) > 1.05 * step:
            keep.append(p)
    keep.append(pts[-1])
    return np.asarray(keep)


def separatrix_records(separatrices, vertices):
    records = []
    for s in separatrices:
        for a in (s.start, s.end):
            key = a.key()
            if key not in vertices:
                vertices[key] = VertexRec(key, np.asarray(a.position, dtype=float),
                                          a.kind)
        poly = catmull_rom_densify(_trim_near_anchors(np.asarray(s.points, dtype=float)))
        poly[0] = vertices[s.start.key()].position
        poly[-1] = vertices[s.end.key()].position
        records.append(EdgeRec(s.start.key(), s.end.key(), poly, "separatrix"))
    return records


# ---- geometric crossing checks ------------------------------------------------


def _seg_intersection(p, p2, q, q2):
    """Proper intersection point of two closed segments, or None."""
    r = p2 - p
    s = q2 - q
    denom = r[0] * s[1] - r[1] * s[0]
    if abs(denom) < 1e-18:
        return None
    dq = q - p
    t = (dq[0] * s[1] - dq[1] * s[0]) / denom
    u = (dq[0] * r[1] - dq[1] * r[0]) / denom
    if 1e-9 < t < 1 - 1e-9 and 1e-9 < u < 1 - 1e-9:
        return p + t * r
    return None


def _polyline_intersections(pa, pb, skip_ends=True):
    """Proper crossings between two dense polylines: list of (sa, point)."""
    out = []
    amin = pa.min(axis=0) - 1e-12
    amax = pa.max(axis=0) + 1e-12
    if (pb.max(axis=0) < amin).any() or (pb.min(axis=0) > amax).any():
        return out
    la = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pa, axis=0).T))])
    for i in range(len(pa) - 1):
        for j in range(len(pb) - 1):
            x = _seg_intersection(pa[i], pa[i + 1], pb[j], pb[j + 1])
            if x is not None:
                frac = np.hypot(*(x - pa[i]))
                out.append((la[i] + frac, x))
    return out


def _local_direction(poly, point):
    d2 = np.sum((poly - point) ** 2, axis=1)
    i = int(np.argmin(d2))
    j = min(i + 1, len(poly) - 1)
    k = max(i - 1, 0)
    d = poly[j] - poly[k]
    return math.atan2(d[1], d[0])


TANGENTIAL_CROSSING_DEG = 25.0


def resolve_crossings(vertices, records):
    """Split transversal separatrix crossings into 4-valent cross vertices.

    Separatrices of the two orthogonal cross families legitimately intersect;
    near-tangential intersections mean the traced graph is invalid.  Crossing
    the domain boundary is always an error.
    """
    for r in records:
        if r.kind == "boundary":
            continue
        for b in records:
            if b.kind != "boundary":
                continue
            if _polyline_intersections(r.polyline, b.polyline):
                raise DecompositionError(
                    "invalid separatrix graph: a separatrix crosses the boundary")

    counter = 0
    while True:
        found = None
        movable = [r for r in records if r.kind != "boundary"]
        for i, a in enumerate(movable):
            for b in movable[i + 1:]:
                hits = _polyline_intersections(a.polyline, b.polyline)
                if hits:
                    found = (a, b, sorted(hits)[0][1])
                    break
            if found:
                break
        if not found:
            return records
        a, b, x = found
        ang = abs(math.remainder(_local_direction(a.polyline, x)
                                 - _local_direction(b.polyline, x), math.pi))
        acute = min(ang, math.pi - ang)
        if acute < math.radians(TANGENTIAL_CROSSING_DEG):
            raise DecompositionError(
                "invalid separatrix graph: separatrices cross tangentially "
                f"({math.degrees(acute):.1f} deg) away from anchors")
        key = ("cross", f"sx{counter}")
        counter += 1
        vertices[key] = VertexRec(key, np.asarray(x, dtype=float), "cross")
        a1, a2 = _split_polyline_at(a.polyline, x)
        b1, b2 = _split_polyline_at(b.polyline, x)
        records.remove(a)
        records.remove(b)
        records.append(EdgeRec(a.v0, key, a1, a.kind, loop=a.loop))
        records.append(EdgeRec(key, a.v1, a2, a.kind, loop=a.loop))
        records.append(EdgeRec(b.v0, key, b1, b.kind, loop=b.loop))
        records.append(EdgeRec(key, b.v1, b2, b.kind, loop=b.loop))


# ---- half-edge structure -------------------------------------------------------


@dataclass
class Face:
    half_edges: list            # indices into subdivision.half_edges
    area: float
    walk_keys: list             # vertex keys in walk order
    polygon: np.ndarray


class PlanarSubdivision:
    """Half-edge arrangement of the boundary/separatrix graph."""

    def __init__(self, vertices, records, domain=None, validate=True):
        self.vertices = dict(vertices)
        self.records = list(records)
        self.domain = domain
        if validate:
            self.records = resolve_crossings(self.vertices, self.records)
        self._build()
        self._extract_faces()

    # half-edge i: record i//2, forward if i even (v0->v1)
    def _he_vertices(self, he):
        rec = self.records[he // 2]
        return (rec.v0, rec.v1) if he % 2 == 0 else (rec.v1, rec.v0)

    def _he_polyline(self, he):
        rec = self.records[he // 2]
        return rec.polyline if he % 2 == 0 else rec.polyline[::-1]

    def _build(self):
        outgoing = {}
        for ei, rec in enumerate(self.records):
            for he in (2 * ei, 2 * ei + 1):
                tail, _ = self._he_vertices(he)
                poly = self._he_polyline(he)
                d = poly[1] - poly[0]
                k = 1
                while np.hypot(*d) < 1e-15 and k + 1 < len(poly):
                    k += 1
                    d = poly[k] - poly[0]
                outgoing.setdefault(tail, []).append((math.atan2(d[1], d[0]), he))
        self.next_he = {}
        for v, lst in outgoing.items():
            lst.sort()
            n = len(lst)
            order = [he for _, he in lst]
            for idx, he in enumerate(order):
                # face continues from the twin's CCW predecessor around v
                prev = order[(idx - 1) % n]
                self.next_he[_twin(he)] = prev
        self.outgoing = outgoing

    def _extract_faces(self):
        seen = set()
        faces = []
        for he0 in sorted(self.next_he):
            if he0 in seen:
                continue
            walk = []
            he = he0
            while True:
                seen.add(he)
                walk.append(he)
                he = self.next_he[he]
                if he == he0:
                    break
                if len(walk) > 4 * len(self.records) + 8:
                    raise DecompositionError("face walk failed to close")
            pts = np.vstack([self._he_polyline(h)[:-1] for h in walk]
                            + [self._he_polyline(walk[-1])[-1:]])
            x, y = pts[:-1, 0], pts[:-1, 1]
            area = 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
            keys = [self._he_vertices(h)[0] for h in walk]
            faces.append(Face(walk, area, keys, pts))
        self.faces = faces
        self.bounded_faces = [f for f in faces if f.area > AREA_TOL]

    def euler_check(self):
        holes = len(self.domain.holes) if self.domain is not None else 0
        v = len(self.vertices)
        e = len(self.records)
        f = len(self.bounded_faces) + 1
        if v - e + f != 2 - holes:
            raise DecompositionError(
                f"Euler check failed: V-E+F = {v}-{e}+{f} = {v - e + f}, "
                f"expected {2 - holes}")
        n_neg = sum(1 for fc in self.faces if fc.area <= AREA_TOL)
        if n_neg != holes + 1:
            raise DecompositionError(
                f"expected {holes + 1} unbounded/hole faces, found {n_neg}")

    def face_corners(self, face):
        """(corner keys, zero-valence corner keys) along the face walk."""
        corners = []
        zeros = []
        for key in face.walk_keys:
            vr = self.vertices[key]
            if vr.kind == "seam":
                continue
            if vr.kind == "corner" and vr.corner_valence == 0:
                zeros.append(key)
                continue
            corners.append(key)
        return corners, zeros


def _twin(he):
    return he ^ 1


def drop_converging_separatrices(separatrices, corner_nodes):
    """Split off separatrices that terminate at a zero-valence corner.

    Streamlines converging into a dead corner bound no block; they are the
    raw material of the midpoint division, which reuses the same field line
    away from the corner.  Returns (kept, dropped).
    """
    dead = {i for i, cn in enumerate(corner_nodes) if cn.valence == 0}
    kept, dropped = [], []
    for s in separatrices:
        if any(a.kind == "corner" and a.ident in dead for a in (s.start, s.end)):
            dropped.append(s)
        else:
            kept.append(s)
    return kept, dropped


def build_subdivision(domain, separatrices, corner_nodes):
    """Arrangement of the traced separatrices over the domain boundary."""
    separatrices, _dropped = drop_converging_separatrices(separatrices, corner_nodes)
    bnd_anchors = []
    seen = set()
    for s in separatrices:
        for a in (s.start, s.end):
            if a.kind == "boundary" and a.key() not in seen:
                seen.add(a.key())
                bnd_anchors.append(a)
    vertices, records = boundary_records(domain, corner_nodes, bnd_anchors)
    records.extend(separatrix_records(separatrices, vertices))
    sub = PlanarSubdivision(vertices, records, domain=domain)
    sub.euler_check()
    return sub


def classify_faces(sub, strict=True):
    """Partition bounded faces into quads and degenerate triangles.

    Non-strict mode tolerates other face shapes while degenerate corners are
    still pending: a node whose converging branch was withheld leaves an
    unfinished sector that midpoint division completes.
    """
    quads, degenerate, other = [], [], []
    for f in sub.bounded_faces:
        corners, zeros = sub.face_corners(f)
        if zeros:
            if len(zeros) > 1 or len(corners) not in (2, 3):
                raise DecompositionError(
                    f"face with {len(corners)} corners and {len(zeros)} dead corners")
            degenerate.append(f)
        elif len(corners) == 4:
            quads.append(f)
        else:
            if strict:
                raise DecompositionError(
                    f"non-quadrilateral face with {len(corners)} block corners")
            other.append(f)
    if strict:
        return quads, degenerate
    return quads, degenerate, other


# ---- midpoint division ---------------------------------------------------------


def _face_sides(sub, face):
    """Sides between consecutive counted corners: list of (start key, he list)."""
    walk = face.half_edges
    keys = face.walk_keys
    counted = [i for i, k in enumerate(keys) if sub.vertices[k].kind != "seam"]
    if not counted:
        raise DecompositionError("face has no corner vertices")
    sides = []
    m = len(counted)
    for a in range(m):
        i0 = counted[a]
        i1 = counted[(a + 1) % m]
        idxs = []
        i = i0
        while True:
            idxs.append(walk[i])
            i = (i + 1) % len(walk)
            if i == i1:
                break
        sides.append((keys[i0], idxs))
    return sides


def _side_polyline(sub, hes):
    pts = [sub._he_polyline(h)[:-1] for h in hes]
    pts.append(sub._he_polyline(hes[-1])[-1:])
    return np.vstack(pts)


def _arclength_midpoint(poly):
    seg = np.hypot(*np.diff(poly, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    smid = 0.5 * cum[-1]
    i = int(np.searchsorted(cum, smid) - 1)
    i = max(0, min(i, len(poly) - 2))
    f = (smid - cum[i]) / max(cum[i + 1] - cum[i], 1e-300)
    return poly[i] + f * (poly[i + 1] - poly[i]), smid


def _dist_to_polyline(poly, point):
    best = math.inf
    for i in range(len(poly) - 1):
        a, b = poly[i], poly[i + 1]
        ab = b - a
        L2 = float(ab @ ab)
        f = 0.0 if L2 == 0 else float(np.clip((point - a) @ ab / L2, 0.0, 1.0))
        best = min(best, float(np.hypot(*(a + f * ab - point))))
    return best


def _split_polyline_at(poly, point):
    """Split a dense polyline at the given on-curve point."""
    d2 = np.sum((poly - point) ** 2, axis=1)
    best, bestf, bestd = 0, 0.0, math.inf
    for i in range(len(poly) - 1):
        a, b = poly[i], poly[i + 1]
        ab = b - a
        L2 = float(ab @ ab)
        f = 0.0 if L2 == 0 else float(np.clip((point - a) @ ab / L2, 0.0, 1.0))
        p = a + f * ab
        d = float(np.hypot(*(p - point)))
        if d < bestd:
            best, bestf, bestd = i, f, d
    first = np.vstack([poly[:best + 1], [point]])
    second = np.vstack([[point], poly[best + 1:]])
    if len(second) < 2:
        second = np.vstack([[point], poly[-1:]])
    return first, second


def trace_tail(origin, alpha0, probe, domain, h, critical_points=(), n_max=20000):
    """Integrate a field streamline from origin until it terminates.

    Termination is either the domain boundary or a critical point: the tail
    re-creates the converging streamline that the dead corner swallowed, so
    it ends on the node whose branch was withheld from the subdivision.
    """
    sl = Streamline(Anchor("artificial", 0, np.asarray(origin, dtype=float)), 0,
                    [np.asarray(origin, dtype=float)], [float(alpha0)])

    class _Registry:
        def __init__(self):
            self.hit = None

        def resolve(self, position, loop, seg, t):
            self.hit = Anchor("boundary", 0, position, loop=loop, seg=seg, t=t)
            return self.hit

    reg = _Registry()
    rounds = 0
    while sl.status == "active" and rounds < n_max:
        advance_all([sl], probe, h, domain=domain, registry=reg, n_max=n_max)
        for ci, cp in enumerate(critical_points):
            if np.hypot(*(sl.front() - cp.position)) < max(cp.radius, h):
                sl.points.append(cp.position.copy())
                sl.status = "hit_boundary"
                reg.hit = Anchor("critical", ci, cp.position)
                break
        rounds += 1
    if sl.status != "hit_boundary":
        raise DecompositionError("midpoint-division streamline failed to terminate")
    return np.asarray(sl.points), reg.hit


def _tail_direction(poly, i):
    j = min(i + 1, len(poly) - 1)
    d = poly[j] - poly[max(i - 1, 0)]
    return math.atan2(d[1], d[0])


def _pick_node(tail, exit_len, m1, m2):
    """Node on the tail whose straight branches best sit at +-2pi/3."""
    seg = np.hypot(*np.diff(tail, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    best = None
    best_err = math.inf
    for i in range(1, len(tail) - 1):
        if cum[i] < 0.08 * exit_len or cum[i] > 0.92 * exit_len:
            continue
        d = _tail_direction(tail, i)
        a1 = math.atan2(*(m1 - tail[i])[::-1])
        a2 = math.atan2(*(m2 - tail[i])[::-1])
        plus, minus = d + 2 * math.pi / 3, d - 2 * math.pi / 3
        err = min(_angdist(a1, plus) ** 2 + _angdist(a2, minus) ** 2,
                  _angdist(a1, minus) ** 2 + _angdist(a2, plus) ** 2)
        if err < best_err:
            best_err = err
            best = i
    if best is None:
        raise DecompositionError("no admissible artificial node position on the tail")
    return best


def _angdist(a, b):
    return abs(math.remainder(a - b, 2.0 * math.pi))


class MidpointDivider:
    """Rewrites the record set to replace one degenerate triangle by 3 quads."""

    def __init__(self, sub, probe, domain, h, corner_nodes, critical_points=(),
                 dropped=()):
        self.sub = sub
        self.probe = probe
        self.domain = domain
        self.h = h
        self.corner_nodes = corner_nodes
        self.critical_points = list(critical_points)
        self.dropped = list(dropped)
        self.counter = 0

    def _tail_for(self, qkey, q, corner, cn):
        """The physical streamline away from the dead corner.

        A separatrix that converged into the corner is the same field line;
        reuse it reversed so the far end lands exactly on its origin node.
        Otherwise integrate a fresh one from the corner wedge.
        """
        for s in self.dropped:
            for this_end, other_end, pts in ((s.end, s.start, s.points[::-1]),
                                             (s.start, s.end, s.points)):
                if this_end.kind == "corner" and this_end.ident == qkey[1]:
                    tail = np.asarray(pts, dtype=float).copy()
                    tail[0] = q
                    return tail, other_end
        bisector = corner.theta_out + 0.5 * corner.delta_theta
        try:
            alpha = refine_direction(q, bisector, self.probe, cn.radius)
        except TracingError:
            alpha = bisector           # oscillating refinement: the field line
        return trace_tail(q, alpha, self.probe, self.domain, self.h,
                          critical_points=self.critical_points)

    def divide(self, face):
        sub = self.sub
        corners, zeros = sub.face_corners(face)
        qkey = zeros[0]
        cn = self.corner_nodes[qkey[1]]
        corner = cn.corner
        q = sub.vertices[qkey].position

        tail, hit = self._tail_for(qkey, q, corner, cn)

        sides = _face_sides(sub, face)
        adj_out = next(s for s in sides if s[0] == qkey)
        adj_in = next(s for s in sides if sub._he_vertices(s[1][-1])[1] == qkey)
        others = [s for s in sides if s is not adj_out and s is not adj_in]

        poly_out = _side_polyline(sub, adj_out[1])
        poly_in = _side_polyline(sub, adj_in[1])
        m1, _ = _arclength_midpoint(poly_out)
        m2, _ = _arclength_midpoint(poly_in)

        # first exit of the tail through the rest of the face boundary
        exits = []
        tail_len = float(np.sum(np.hypot(*np.diff(tail, axis=0).T)))
        for skey, hes in others:
            spoly = _side_polyline(sub, hes)
            for s_along, x in _polyline_intersections(tail, spoly):
                exits.append((s_along, x, skey, hes))
            if not exits:
                # a boundary-terminated tail ends ON a side instead of crossing it
                d = _dist_to_polyline(spoly, tail[-1])
                if d < 1e-6 * (1.0 + self.probe.mesh.bbox_diag):
                    exits.append((tail_len, tail[-1], skey, hes))
        case_b = len(others) == 2

        node_key = ("artificial", self.counter)
        self.counter += 1

        records = [r for r in sub.records]
        vertices = dict(sub.vertices)

        def split_record(hes_side, at_point, new_vkey, kind):
            """Split the (single) record under a side at a point on it."""
            if len(hes_side) != 1:
                raise DecompositionError("block side spans multiple edges")
            rec = sub.records[hes_side[0] // 2]
            first, second = _split_polyline_at(rec.polyline, at_point)
            records.remove(rec)
            vertices[new_vkey] = VertexRec(new_vkey, np.asarray(at_point, dtype=float),
                                           kind)
            records.append(EdgeRec(rec.v0, new_vkey, first, rec.kind, loop=rec.loop))
            records.append(EdgeRec(new_vkey, rec.v1, second, rec.kind, loop=rec.loop))

        if case_b and not exits:
            raise DecompositionError("midpoint streamline never leaves its face")

        if not case_b:
            # triangle with q between its two adjacent sides: connect the node
            # to the exit point and both adjacent-side midpoints
            if not exits:
                raise DecompositionError("midpoint streamline never leaves its face")
            exits.sort(key=lambda ex: ex[0])
            exit_len, exit_pt, exit_skey, exit_hes = exits[0]
            ni = _pick_node(tail, exit_len, m1, m2)
            node_pos = tail[ni]
            vertices[node_key] = VertexRec(node_key, node_pos, "artificial")

            mk1 = ("cross", f"m1-{node_key[1]}")
            mk2 = ("cross", f"m2-{node_key[1]}")
            split_record(adj_out[1], m1, mk1, "boundary")
            split_record(adj_in[1], m2, mk2, "boundary")

            exit_rec_kind = sub.records[exit_hes[0] // 2].kind
            ek = ("cross", f"x-{node_key[1]}")
            # tail from the node to the exit point
            cut = _cut_tail(tail, ni, exit_pt)
            if exit_rec_kind == "boundary":
                split_record(exit_hes, exit_pt, ek, "boundary")
                records.append(EdgeRec(node_key, ek, cut, "tail", allow_cross=False))
            else:
                split_record(exit_hes, exit_pt, ek, "cross")
                rest = _tail_beyond(tail, exit_pt, hit)
                records.append(EdgeRec(node_key, ek, cut, "tail", allow_cross=True))
                self._propagate(records, vertices, rest, ek, hit, node_key)
            records.append(EdgeRec(node_key, mk1,
                                   np.vstack([node_pos, m1]), "branch"))
            records.append(EdgeRec(node_key, mk2,
                                   np.vstack([node_pos, m2]), "branch"))
        else:
            # q is a wedge vertex between 4 walk stretches: keep the streamline
            # head as the q-connection and join the two far-side midpoints
            far1, far2 = others
            p1 = _side_polyline(sub, far1[1])
            p2 = _side_polyline(sub, far2[1])
            mf1, _ = _arclength_midpoint(p1)
            mf2, _ = _arclength_midpoint(p2)
            exit_len = exits[0][0] if exits else np.sum(
                np.hypot(*np.diff(tail, axis=0).T))
            ni = _pick_node(tail, exit_len, mf1, mf2)
            node_pos = tail[ni]
            vertices[node_key] = VertexRec(node_key, node_pos, "artificial")
            mk1 = ("cross", f"m1-{node_key[1]}")
            mk2 = ("cross", f"m2-{node_key[1]}")
            split_record(far1[1], mf1, mk1, "boundary")
            split_record(far2[1], mf2, mk2, "boundary")
            head = tail[:ni + 1][::-1].copy()
            head[-1] = sub.vertices[qkey].position
            records.append(EdgeRec(node_key, qkey, head, "tail"))
            records.append(EdgeRec(node_key, mk1, np.vstack([node_pos, mf1]), "branch"))
            records.append(EdgeRec(node_key, mk2, np.vstack([node_pos, mf2]), "branch"))

        vertices[qkey] = VertexRec(qkey, vertices[qkey].position, "corner",
                                   corner_valence=1)
        return PlanarSubdivision(vertices, records, domain=self.domain, validate=False)

    def _propagate(self, records, vertices, rest, from_key, hit, node_key):
        """Continue the tail through subsequent faces, splitting crossed edges."""
        current = rest
        start_key = from_key
        guard = 0
        while True:
            guard += 1
            if guard > 50:
                raise DecompositionError("midpoint tail crossed too many edges")
            hits = []
            for rec in list(records):
                if rec.kind == "branch" or rec.v0 == start_key or rec.v1 == start_key:
                    continue
                for s_along, x in _polyline_intersections(current, rec.polyline):
                    hits.append((s_along, x, rec))
            if not hits:
                if hit.kind == "critical":
                    endk = ("critical", hit.ident)
                else:
                    endk = ("boundary", f"tail-{node_key[1]}")
                    vertices[endk] = VertexRec(endk, np.asarray(hit.position),
                                               "boundary")
                poly = current.copy()
                poly[-1] = vertices[endk].position if endk in vertices else hit.position
                records.append(EdgeRec(start_key, endk, poly, "tail", allow_cross=True))
                return
            hits.sort(key=lambda hx: hx[0])
            s_along, x, rec = hits[0]
            xk = ("cross", f"x{guard}-{node_key[1]}")
            vertices[xk] = VertexRec(xk, np.asarray(x), "cross")
            first, second = _split_polyline_at(rec.polyline, x)
            records.remove(rec)
            records.append(EdgeRec(rec.v0, xk, first, rec.kind, loop=rec.loop))
            records.append(EdgeRec(xk, rec.v1, second, rec.kind, loop=rec.loop))
            upto, beyond = _split_polyline_at(current, x)
            records.append(EdgeRec(start_key, xk, upto, "tail", allow_cross=True))
            current = beyond
            start_key = xk


def _cut_tail(tail, ni, exit_pt):
    upto, _ = _split_polyline_at(tail, exit_pt)
    cut = upto[ni:]
    if len(cut) < 2:
        cut = np.vstack([tail[ni], exit_pt])
    return cut


def _tail_beyond(tail, exit_pt, hit):
    _, beyond = _split_polyline_at(tail, exit_pt)
    if len(beyond) < 2:
        beyond = np.vstack([exit_pt, hit.position])
    return beyond


def midpoint_division(sub, face, probe, domain, h, corner_nodes,
                      critical_points=(), dropped=()):
    """Replace one degenerate triangular face by three quads."""
    divider = MidpointDivider(sub, probe, domain, h, corner_nodes,
                              critical_points=critical_points, dropped=dropped)
    return divider.divide(face)


def decompose(domain, probe, corner_nodes, separatrices, h, critical_points=()):
    """Full subdivision with degenerate triangles repaired; all faces quads."""
    sub = build_subdivision(domain, separatrices, corner_nodes)
    _kept, dropped = drop_converging_separatrices(separatrices, corner_nodes)
    quads, degenerate, _other = classify_faces(sub, strict=False)
    divider = MidpointDivider(sub, probe, domain, h, corner_nodes,
                              critical_points=critical_points, dropped=dropped)
    rounds = 0
    while degenerate:
        rounds += 1
        if rounds > 8:
            raise DecompositionError("midpoint division failed to converge")
        sub = divider.divide(degenerate[0])
        divider.sub = sub
        sub.euler_check()
        quads, degenerate, _other = classify_faces(sub, strict=False)
    quads, degenerate = classify_faces(sub, strict=True)
    return sub, quads
