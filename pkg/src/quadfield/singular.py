"""Critical points of the guiding field and valences of interior/corner nodes.

Interior zeros are hunted per candidate element with Newton iteration in
reference coordinates; accepted roots are deduplicated and classified by
counting phase jumps around a small circle.  Corner valences combine the
one-sided boundary phases with the same jump counting along an interior arc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TopologyError
from .field import HALF_PI, OUTSIDE, psi_of
from .geometry import boundary_field
from .reftri import BARYCENTER, in_reference

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 30
NEWTON_SLACK = 1e-6
CIRCLE_SAMPLES = 64
ARC_SAMPLES = 32
ARC_ENDPOINT_GAP = 1e-3
RADIUS_FACTOR = 0.25
VALENCE_RESIDUAL_TOL = 0.2


@dataclass
class CriticalPoint:
    position: np.ndarray
    elem: int
    xi: np.ndarray
    vmag: float
    index: int = 0            # I_c
    valence: int = 4
    radius: float = 0.0


@dataclass
class CornerNode:
    corner: object            # CornerSpec
    corner_id: int
    index: float = 0.0        # I(theta_0, theta_f)
    valence: int = 0
    dpsi: float = 0.0
    residual: float = 0.0
    radius: float = 0.0


def flag_candidate_elements(solution):
    """Elements whose quadrature values straddle zero in both components."""
    flagged = []
    for e in range(solution.mesh.n_elements()):
        vals = solution.quad_values(e)
        u, v = vals[:, 0], vals[:, 1]
        if u.min() <= 0.0 <= u.max() and v.min() <= 0.0 <= v.max():
            flagged.append(e)
    return flagged


def newton_locate(e, solution):
    """Newton root of the interpolated field inside element e, or None."""
    mesh = solution.mesh
    xi = BARYCENTER.copy()
    for _ in range(NEWTON_MAX_ITER):
        val = solution.eval(e, xi)[0]
        if math.hypot(val[0], val[1]) < NEWTON_TOL:
            break
        jac = solution.eval_ref_gradient(e, xi)[0]     # d(u,v)/d(xi)
        det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
        if abs(det) < 1e-300:
            return None
        dxi = np.array([(jac[1, 1] * val[0] - jac[0, 1] * val[1]) / det,
                        (-jac[1, 0] * val[0] + jac[0, 0] * val[1]) / det])
        xi = xi - dxi
        if np.abs(xi).max() > 10.0:
            return None
    else:
        return None
    val = solution.eval(e, xi)[0]
    vmag = math.hypot(val[0], val[1])
    if vmag >= NEWTON_TOL:
        return None
    if not in_reference(xi, slack=NEWTON_SLACK):
        return None            # dismissed: a neighbor search will find it
    pos = mesh.map_to_physical(e, xi)[0]
    return CriticalPoint(position=pos, elem=e, xi=xi.copy(), vmag=vmag)


def _fit_circle_radius(probe, center, c0, halvings=4, samples=CIRCLE_SAMPLES):
    """Largest c0 / 2^k whose full sample circle stays in the domain."""
    c = c0
    for _ in range(halvings + 1):
        angles = 2.0 * math.pi * np.arange(samples) / samples
        pts = center[None, :] + c * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        if all(probe.contains(p) for p in pts):
            return c
        c *= 0.5
    raise TopologyError(
        f"no valence circle around ({center[0]:.4g}, {center[1]:.4g}) fits in the domain")


def count_jumps(us, vs):
    """Signed jump count around a closed contour (positive minus negative)."""
    n = len(us)
    pos = neg = 0
    for i in range(n):
        j = (i + 1) % n
        if us[i] < 0.0 and us[j] < 0.0 and vs[i] * vs[j] < 0.0:
            if vs[j] > vs[i]:
                pos += 1
            else:
                neg += 1
    return pos, neg


def interior_valence(point, probe, c, samples=CIRCLE_SAMPLES):
    """(I_c, valence) from jump counting on a radius-c circle around point."""
    angles = 2.0 * math.pi * np.arange(samples) / samples
    pts = point[None, :] + c * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    vals = []
    for p in pts:
        v = probe.eval_v(p)
        if v is OUTSIDE:
            raise TopologyError("valence circle leaves the domain")
        vals.append(v)
    vals = np.asarray(vals)
    pos, neg = count_jumps(vals[:, 0], vals[:, 1])
    index = neg - pos
    if abs(index) > 1:
        raise TopologyError(
            f"coalesced or spurious critical point (index {index}): refine resolution")
    return index, 4 - index


def classify_critical_points(points, probe, domain=None):
    """Fill in I_c and valence for deduplicated critical points."""
    for i, cp in enumerate(points):
        c0 = RADIUS_FACTOR * probe.mesh.circumradius(cp.elem)
        for other in points:
            if other is not cp:
                d = float(np.hypot(*(cp.position - other.position)))
                c0 = min(c0, 0.45 * d)
        c = _fit_circle_radius(probe, cp.position, c0)
        idx, val = interior_valence(cp.position, probe, c)
        cp.index = idx
        cp.valence = val
        cp.radius = c
    return points


def dedup_roots(roots, probe):
    """Cluster roots within the local circle radius, keep smallest |v|."""
    roots = sorted(roots, key=lambda r: (r.elem, r.vmag))
    kept = []
    for r in roots:
        c = RADIUS_FACTOR * probe.mesh.circumradius(r.elem)
        merged = False
        for k in kept:
            if np.hypot(*(r.position - k.position)) < max(c, k.radius, 1e-14):
                if r.vmag < k.vmag:
                    k.position, k.elem, k.xi, k.vmag = r.position, r.elem, r.xi, r.vmag
                merged = True
                break
        if not merged:
            r.radius = c
            kept.append(r)
    return kept


def find_critical_points(solution, probe):
    """Locate, deduplicate and classify all interior critical points.

    Flagged elements and their neighbors are searched first, then every
    remaining element: the quadrature sign test can miss a root parked next
    to an element corner, and the parametric Newton search is cheap on the
    coarse background meshes this pipeline uses.
    """
    flagged = flag_candidate_elements(solution)
    search = set(flagged)
    for e in flagged:
        search.update(solution.mesh.neighbors(e))
    order = sorted(search) + [e for e in range(solution.mesh.n_elements())
                              if e not in search]
    roots = []
    for e in order:
        cp = newton_locate(e, solution)
        if cp is not None:
            roots.append(cp)
    points = dedup_roots(roots, probe)
    return classify_critical_points(points, probe)


def corner_valence(corner, probe, corner_id=0, samples=ARC_SAMPLES):
    """Valence of a boundary corner from geometry plus the field phase sweep."""
    th_start, th_end = corner.wedge_angles()
    delta = corner.delta_theta
    bisector = th_start + 0.5 * delta
    pos = corner.position

    # starting radius from the host element at the corner
    eps_probe = 1e-6 * (1.0 + probe.mesh.bbox_diag)
    inward = pos + eps_probe * np.array([math.cos(bisector), math.sin(bisector)])
    loc = probe.locate(inward)
    if loc is OUTSIDE:
        raise TopologyError(f"corner {corner_id}: no element found inside its wedge")
    c0 = RADIUS_FACTOR * probe.mesh.circumradius(loc[0])

    # the gap must absorb boundary curvature: at radius c a curved wall sits
    # O(c * kappa) away from its corner tangent direction
    c = c0
    arc = None
    for _ in range(5):
        gap = ARC_ENDPOINT_GAP
        while gap <= delta / 8.0:
            angles = np.linspace(th_start + gap, th_end - gap, samples)
            pts = pos[None, :] + c * np.stack([np.cos(angles), np.sin(angles)], axis=1)
            if all(probe.contains(p) for p in pts):
                arc = pts
                break
            gap *= 2.0
        if arc is not None:
            break
        c *= 0.5
    if arc is None:
        raise TopologyError(f"corner {corner_id}: no interior arc fits in the domain")

    psi0 = psi_of(boundary_field(th_start))
    psif = psi_of(boundary_field(corner.theta_in + math.pi))
    seq = [psi0]
    for p in arc:
        ps = probe.eval_psi(p)
        if ps is OUTSIDE:
            raise TopologyError(f"corner {corner_id}: arc sample left the domain")
        seq.append(ps)
    seq.append(psif)
    dpsi = sum(math.remainder(seq[i + 1] - seq[i], HALF_PI) for i in range(len(seq) - 1))
    index = dpsi / HALF_PI
    raw = delta / HALF_PI - index
    valence = int(round(raw))
    residual = abs(raw - valence)
    if residual > VALENCE_RESIDUAL_TOL:
        raise TopologyError(
            f"ambiguous corner valence at corner {corner_id}: residual {residual:.3f}")
    return CornerNode(corner=corner, corner_id=corner_id, index=index,
                      valence=valence, dpsi=dpsi, residual=residual, radius=c)


def corner_valences(domain, probe):
    return [corner_valence(c, probe, corner_id=i)
            for i, c in enumerate(domain.corner_inventory())]


def topology_report(critical_points, corner_nodes):
    """JSON-ready diagnostic summary of the detected topology."""
    return {
        "critical_points": [
            {"position": cp.position.tolist(), "element": int(cp.elem),
             "index": int(cp.index), "valence": int(cp.valence),
             "vmag": float(cp.vmag), "radius": float(cp.radius)}
            for cp in critical_points],
        "corners": [
            {"position": cn.corner.position.tolist(),
             "delta_theta": float(cn.corner.delta_theta),
             "index": float(cn.index), "valence": int(cn.valence),
             "dpsi": float(cn.dpsi), "residual": float(cn.residual)}
            for cn in corner_nodes],
    }
