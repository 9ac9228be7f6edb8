"""Curved quad blocks (transfinite maps over four sides) and their splitting.

Each subdivision face becomes a Coons patch over its four arclength
parametrized sides.  Isoparametric splitting samples the same patch along
parameter lines, so children inherit the parent quality pointwise and shared
sides induce identical node sequences in neighboring blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DecompositionError
from .reftri import gauss_lobatto


class SidePath:
    """Arclength-normalized evaluator over a dense polyline."""

    def __init__(self, polyline):
        self.points = np.asarray(polyline, dtype=float)
        seg = np.hypot(*np.diff(self.points, axis=0).T)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(cum[-1])
        self._s = cum / cum[-1] if cum[-1] > 0 else np.linspace(0, 1, len(cum))

    def __call__(self, fracs):
        fracs = np.atleast_1d(np.asarray(fracs, dtype=float))
        x = np.interp(fracs, self._s, self.points[:, 0])
        y = np.interp(fracs, self._s, self.points[:, 1])
        return np.stack([x, y], axis=1)

    def reversed(self):
        return SidePath(self.points[::-1])


@dataclass
class QuadBlock:
    index: int
    corner_keys: list          # 4 vertex keys, CCW
    sides: list                # 4 SidePath, side i runs corner i -> corner i+1
    side_records: list         # (record index, +1/-1 direction) per side

    def eval(self, s, t):
        """Coons patch point(s) at parameters s, t in [0, 1]."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        bottom, right, top, left = self.sides
        c0 = bottom.points[0]
        c1 = right.points[0]
        c2 = top.points[0]
        c3 = left.points[0]
        b = bottom(s)
        tp = top(1.0 - s)
        lf = left(1.0 - t)
        rg = right(t)
        st = s[:, None]
        tt = t[:, None]
        out = ((1 - tt) * b + tt * tp + (1 - st) * lf + st * rg
               - ((1 - st) * (1 - tt) * c0 + st * (1 - tt) * c1
                  + st * tt * c2 + (1 - st) * tt * c3))
        return out

    def eval_grid(self, svals, tvals):
        """Grid of points: shape (len(svals), len(tvals), 2)."""
        out = np.empty((len(svals), len(tvals), 2))
        for j, t in enumerate(tvals):
            out[:, j, :] = self.eval(svals, np.full(len(svals), t))
        return out

    def scaled_jacobians(self, svals=None, tvals=None, delta=1e-6):
        """det J / (|Q_s||Q_t|) on a sample grid (default 10x10 interior)."""
        if svals is None:
            svals = (np.arange(10) + 0.5) / 10.0
        if tvals is None:
            tvals = (np.arange(10) + 0.5) / 10.0
        out = np.empty((len(svals), len(tvals)))
        for i, s in enumerate(svals):
            for j, t in enumerate(tvals):
                sp = min(max(s, delta), 1 - delta)
                tp = min(max(t, delta), 1 - delta)
                qs = (self.eval(sp + delta, tp) - self.eval(sp - delta, tp))[0] / (2 * delta)
                qt = (self.eval(sp, tp + delta) - self.eval(sp, tp - delta))[0] / (2 * delta)
                det = qs[0] * qt[1] - qs[1] * qt[0]
                denom = np.hypot(*qs) * np.hypot(*qt)
                out[i, j] = det / denom if denom > 0 else 0.0
        return out

    def area(self, n=24):
        """2x2 Gauss per cell on an n x n grid of the parameter square."""
        g = 0.5 / math.sqrt(3.0)
        offs = [0.5 - g, 0.5 + g]
        delta = 1e-6
        total = 0.0
        for i in range(n):
            for j in range(n):
                for os in offs:
                    for ot in offs:
                        s = (i + os) / n
                        t = (j + ot) / n
                        qs = (self.eval(s + delta, t) - self.eval(s - delta, t))[0] \
                            / (2 * delta)
                        qt = (self.eval(s, t + delta) - self.eval(s, t - delta))[0] \
                            / (2 * delta)
                        total += (qs[0] * qt[1] - qs[1] * qt[0]) / (4 * n * n)
        return total


def build_blocks(sub, faces=None):
    """QuadBlocks from the all-quad subdivision faces."""
    from .blockdecomp import _face_sides, _side_polyline

    if faces is None:
        faces = sub.bounded_faces
    rec_index = {id(r): i for i, r in enumerate(sub.records)}
    blocks = []
    for bi, face in enumerate(faces):
        sides = _face_sides(sub, face)
        if len(sides) != 4:
            raise DecompositionError(
                f"face {bi} has {len(sides)} sides; expected a quad")
        paths = []
        srecs = []
        keys = []
        for skey, hes in sides:
            if len(hes) != 1:
                raise DecompositionError(f"face {bi} side spans multiple edges")
            keys.append(skey)
            paths.append(SidePath(_side_polyline(sub, hes)))
            he = hes[0]
            srecs.append((he // 2, 1 if he % 2 == 0 else -1))
        block = QuadBlock(bi, keys, paths, srecs)
        sj = block.scaled_jacobians()
        if sj.min() <= 0:
            raise DecompositionError(
                f"block {bi} has nonpositive scaled Jacobian {sj.min():.3e}")
        blocks.append(block)
    return blocks


# ---- splitting -----------------------------------------------------------------


def split_fractions(n, grade=1.0):
    """n+1 monotone fractions in [0,1]; geometric spacing when grade != 1."""
    if n < 1:
        raise DecompositionError("split count must be >= 1")
    if abs(grade - 1.0) < 1e-12:
        return np.linspace(0.0, 1.0, n + 1)
    w = grade ** np.arange(n)
    f = np.concatenate([[0.0], np.cumsum(w)])
    return f / f[-1]


@dataclass
class QuadMesh:
    nodes: np.ndarray           # (nn, 2)
    quads: np.ndarray           # (nq, 4) CCW corner node ids
    block_of: np.ndarray        # (nq,)
    child_ij: list              # (i, j) per quad within its block
    ho_nodes: list              # per quad (P+1)^2 tensor points or None

    def n_nodes(self):
        return len(self.nodes)

    def edge_count(self):
        edges = set()
        for q in self.quads:
            for k in range(4):
                a, b = int(q[k]), int(q[(k + 1) % 4])
                edges.add((min(a, b), max(a, b)))
        return len(edges)

    def check_conforming(self):
        use = {}
        for qi, q in enumerate(self.quads):
            for k in range(4):
                a, b = int(q[k]), int(q[(k + 1) % 4])
                use.setdefault((min(a, b), max(a, b)), []).append(qi)
        for e, qs in use.items():
            if len(qs) > 2:
                raise DecompositionError(f"edge {e} shared by {len(qs)} quads")
        return use

    def check_orientation(self):
        for qi, q in enumerate(self.quads):
            pts = self.nodes[q]
            x, y = pts[:, 0], pts[:, 1]
            area = 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
            if area <= 0:
                raise DecompositionError(f"quad {qi} is not counterclockwise")

    def euler_check(self, holes=0):
        v = self.n_nodes()
        e = self.edge_count()
        f = len(self.quads)
        if v - e + f != 1 - holes:
            raise DecompositionError(
                f"quad mesh Euler check failed: V-E+F = {v - e + f} != {1 - holes}")


class _NodeMerge:
    def __init__(self, scale):
        self.tol = 1e-9 * max(scale, 1.0)
        self.table = {}
        self.points = []

    def add(self, p):
        key = (round(p[0] / self.tol), round(p[1] / self.tol))
        if key in self.table:
            return self.table[key]
        nid = len(self.points)
        self.table[key] = nid
        self.points.append(np.asarray(p, dtype=float))
        return nid


def resolve_split_spec(blocks, n_default, per_block=None):
    """(ns, nt, grade_s, grade_t) per block, validated for conformity."""
    spec = {}
    for b in blocks:
        spec[b.index] = [n_default, n_default, 1.0, 1.0]
    if per_block:
        for k, v in per_block.items():
            bi = int(k)
            if bi not in spec:
                raise DecompositionError(f"split spec names unknown block {bi}")
            spec[bi] = [int(v.get("ns", n_default)), int(v.get("nt", n_default)),
                        float(v.get("grade_s", 1.0)), float(v.get("grade_t", 1.0))]

    # conformity: a shared record must induce identical division fractions
    shared = {}
    for b in blocks:
        ns, nt, gs, gt = spec[b.index]
        counts = [(ns, gs), (nt, gt), (ns, gs), (nt, gt)]
        for side_i, (rec, direction) in enumerate(b.side_records):
            n, g = counts[side_i]
            fr = split_fractions(n, g)
            if direction < 0:
                fr = 1.0 - fr[::-1]
            shared.setdefault(rec, []).append((b.index, fr))
    for rec, users in shared.items():
        if len(users) == 2:
            (b0, f0), (b1, f1) = users
            if len(f0) != len(f1) or np.abs(f0 - f1).max() > 1e-10:
                raise DecompositionError(
                    f"non-conforming split request between blocks {b0} and {b1}")
        elif len(users) > 2:
            raise DecompositionError("an edge is shared by more than two blocks")
    return spec


def isoparametric_split(blocks, n_default=2, per_block=None, order=None,
                        holes=0):
    """Split every block along parameter lines into a conforming quad mesh."""
    spec = resolve_split_spec(blocks, n_default, per_block)
    scale = max(max(np.abs(s.points).max() for s in b.sides) for b in blocks)
    merge = _NodeMerge(scale)
    quads = []
    block_of = []
    child_ij = []
    ho = []
    gl = gauss_lobatto(order) if order and order >= 1 else None
    for b in blocks:
        ns, nt, gs, gt = spec[b.index]
        fs = split_fractions(ns, gs)
        ft = split_fractions(nt, gt)
        grid = b.eval_grid(fs, ft)
        ids = np.array([[merge.add(grid[i, j]) for j in range(nt + 1)]
                        for i in range(ns + 1)])
        for i in range(ns):
            for j in range(nt):
                quads.append([ids[i, j], ids[i + 1, j], ids[i + 1, j + 1], ids[i, j + 1]])
                block_of.append(b.index)
                child_ij.append((i, j))
                if gl is not None:
                    su = fs[i] + (gl + 1.0) / 2.0 * (fs[i + 1] - fs[i])
                    tu = ft[j] + (gl + 1.0) / 2.0 * (ft[j + 1] - ft[j])
                    ho.append(b.eval_grid(su, tu))
                else:
                    ho.append(None)
    mesh = QuadMesh(np.array(merge.points), np.array(quads, dtype=int),
                    np.array(block_of, dtype=int), child_ij, ho)
    mesh.check_conforming()
    mesh.check_orientation()
    mesh.euler_check(holes=holes)
    return mesh


def child_quality(blocks, mesh, samples=10):
    """Min scaled Jacobian per child and per parent over matching points."""
    spec_cache = {}
    child_min = {}
    parent_pts = {b.index: ([], []) for b in blocks}
    block_by_id = {b.index: b for b in blocks}
    for qi in range(len(mesh.quads)):
        bi = int(mesh.block_of[qi])
        b = block_by_id[bi]
        i, j = mesh.child_ij[qi]
        key = bi
        if key not in spec_cache:
            counts = {}
            for q2 in range(len(mesh.quads)):
                if int(mesh.block_of[q2]) == bi:
                    counts[mesh.child_ij[q2]] = True
            ns = 1 + max(ij[0] for ij in counts)
            nt = 1 + max(ij[1] for ij in counts)
            spec_cache[key] = (ns, nt)
        ns, nt = spec_cache[key]
        sv = (i + (np.arange(samples) + 0.5) / samples) / ns
        tv = (j + (np.arange(samples) + 0.5) / samples) / nt
        sj = b.scaled_jacobians(sv, tv)
        child_min[qi] = float(sj.min())
        parent_pts[bi][0].extend(sv)
        parent_pts[bi][1].extend(tv)
    parent_min = {}
    for bi, (svs, tvs) in parent_pts.items():
        b = block_by_id[bi]
        sj = b.scaled_jacobians(np.unique(np.array(svs)), np.unique(np.array(tvs)))
        parent_min[bi] = float(sj.min())
    return child_min, parent_min
