"""Reference triangle: node sets, quadrature, and the nodal polynomial basis.

The reference element is T = {(x1, x2): x1, x2 >= -1, x1 + x2 <= 0} with
vertices (-1,-1), (1,-1), (-1,1).  Interpolation nodes are warp-and-blend
points (well conditioned up to high order, with Gauss-Lobatto distributions
along the edges so that shared-edge node sets coincide between neighboring
elements).  The orthonormal Dubiner basis provides Vandermonde matrices from
which Lagrange basis values and gradients at arbitrary points follow.

Quadrature uses collapsed-coordinate Gauss x Gauss-Jacobi(1,0) rules: with n
points per direction the rule is exact for total degree 2n - 1, has strictly
positive weights, and the weights sum to the reference area 2.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import roots_jacobi

VERTICES = np.array([[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
BARYCENTER = np.array([-1.0 / 3.0, -1.0 / 3.0])

# Warp-and-blend alpha constants, indexed by polynomial order 1..15.
_ALPHA_OPT = (0.0, 0.0, 1.4152, 0.1001, 0.2751, 0.9800, 1.0999, 1.2832,
              1.3648, 1.4773, 1.4959, 1.5743, 1.5770, 1.6223, 1.6258)


def n_nodes(order):
    return (order + 1) * (order + 2) // 2


def jacobi_polynomial(x, alpha, beta, n):
    """Orthonormal Jacobi polynomial values (L2-normalized on [-1,1])."""
    x = np.asarray(x, dtype=float)
    gamma0 = (2.0 ** (alpha + beta + 1) / (alpha + beta + 1.0)
              * math.gamma(alpha + 1) * math.gamma(beta + 1)
              / math.gamma(alpha + beta + 1))
    p_prev = np.full_like(x, 1.0 / math.sqrt(gamma0))
    if n == 0:
        return p_prev
    gamma1 = (alpha + 1.0) * (beta + 1.0) / (alpha + beta + 3.0) * gamma0
    p = ((alpha + beta + 2.0) * x / 2.0 + (alpha - beta) / 2.0) / math.sqrt(gamma1)
    if n == 1:
        return p
    aold = (2.0 / (2.0 + alpha + beta)
            * math.sqrt((alpha + 1.0) * (beta + 1.0) / (alpha + beta + 3.0)))
    for i in range(1, n):
        h1 = 2.0 * i + alpha + beta
        anew = (2.0 / (h1 + 2.0)
                * math.sqrt((i + 1.0) * (i + 1.0 + alpha + beta)
                            * (i + 1.0 + alpha) * (i + 1.0 + beta)
                            / ((h1 + 1.0) * (h1 + 3.0))))
        bnew = -(alpha * alpha - beta * beta) / (h1 * (h1 + 2.0))
        p, p_prev = ((x - bnew) * p - aold * p_prev) / anew, p
        aold = anew
    return p


def grad_jacobi_polynomial(x, alpha, beta, n):
    if n == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    return (math.sqrt(n * (n + alpha + beta + 1.0))
            * jacobi_polynomial(x, alpha + 1, beta + 1, n - 1))


def gauss_lobatto(order):
    """order+1 Gauss-Lobatto points on [-1, 1]."""
    if order == 1:
        return np.array([-1.0, 1.0])
    interior, _ = roots_jacobi(order - 1, 1.0, 1.0)
    return np.concatenate([[-1.0], np.sort(interior), [1.0]])


def _xi_to_ab(xi):
    """Collapsed coordinates for Dubiner evaluation."""
    r, s = xi[:, 0], xi[:, 1]
    a = np.where(np.abs(1.0 - s) > 1e-14, 2.0 * (1.0 + r) / np.where(s == 1.0, 1.0, 1.0 - s) - 1.0, -1.0)
    return a, s


def dubiner(xi, i, j):
    a, b = _xi_to_ab(np.asarray(xi, dtype=float))
    h1 = jacobi_polynomial(a, 0.0, 0.0, i)
    h2 = jacobi_polynomial(b, 2.0 * i + 1.0, 0.0, j)
    return math.sqrt(2.0) * h1 * h2 * (1.0 - b) ** i


def grad_dubiner(xi, i, j):
    a, b = _xi_to_ab(np.asarray(xi, dtype=float))
    fa = jacobi_polynomial(a, 0.0, 0.0, i)
    dfa = grad_jacobi_polynomial(a, 0.0, 0.0, i)
    gb = jacobi_polynomial(b, 2.0 * i + 1.0, 0.0, j)
    dgb = grad_jacobi_polynomial(b, 2.0 * i + 1.0, 0.0, j)

    dr = dfa * gb
    if i > 0:
        dr = dr * (0.5 * (1.0 - b)) ** (i - 1)
    ds = dfa * gb * 0.5 * (1.0 + a)
    if i > 0:
        ds = ds * (0.5 * (1.0 - b)) ** (i - 1)
    tmp = dgb * (0.5 * (1.0 - b)) ** i
    if i > 0:
        tmp = tmp - 0.5 * i * gb * (0.5 * (1.0 - b)) ** (i - 1)
    ds = ds + fa * tmp
    scale = 2.0 ** (i + 0.5)
    return dr * scale, ds * scale


def _index_pairs(order):
    return [(i, j) for i in range(order + 1) for j in range(order + 1 - i)]


def dubiner_vandermonde(order, xi):
    xi = np.asarray(xi, dtype=float)
    cols = [dubiner(xi, i, j) for i, j in _index_pairs(order)]
    return np.stack(cols, axis=1)


def dubiner_grad_vandermonde(order, xi):
    xi = np.asarray(xi, dtype=float)
    vr, vs = [], []
    for i, j in _index_pairs(order):
        dr, ds = grad_dubiner(xi, i, j)
        vr.append(dr)
        vs.append(ds)
    return np.stack(vr, axis=1), np.stack(vs, axis=1)


def _warp_factor(order, rout):
    """1D warp from equidistant to Gauss-Lobatto, evaluated at rout."""
    lgl = gauss_lobatto(order)
    req = np.linspace(-1.0, 1.0, order + 1)
    veq = np.stack([jacobi_polynomial(req, 0.0, 0.0, n) for n in range(order + 1)], axis=1)
    pmat = np.stack([jacobi_polynomial(rout, 0.0, 0.0, n) for n in range(order + 1)], axis=1)
    lagrange = np.linalg.solve(veq.T, pmat.T)
    warp = lagrange.T @ (lgl - req)
    zerof = (np.abs(rout) < 1.0 - 1e-10).astype(float)
    sf = 1.0 - (zerof * rout) ** 2
    return warp / sf + warp * (zerof - 1.0)


def warp_blend_nodes(order):
    """Warp-and-blend interpolation nodes on the reference triangle."""
    if order == 0:
        return BARYCENTER[None, :].copy()
    alpha = _ALPHA_OPT[order - 1] if order <= 15 else 5.0 / 3.0

    nn = n_nodes(order)
    l1 = np.empty(nn)
    l3 = np.empty(nn)
    k = 0
    for i in range(order + 1):
        for j in range(order + 1 - i):
            l1[k] = i / order
            l3[k] = j / order
            k += 1
    l2 = 1.0 - l1 - l3
    x = -l2 + l3
    y = (-l2 - l3 + 2.0 * l1) / math.sqrt(3.0)

    blend1 = 4.0 * l2 * l3
    blend2 = 4.0 * l1 * l3
    blend3 = 4.0 * l1 * l2
    warpf1 = _warp_factor(order, l3 - l2)
    warpf2 = _warp_factor(order, l1 - l3)
    warpf3 = _warp_factor(order, l2 - l1)
    warp1 = blend1 * warpf1 * (1.0 + (alpha * l1) ** 2)
    warp2 = blend2 * warpf2 * (1.0 + (alpha * l2) ** 2)
    warp3 = blend3 * warpf3 * (1.0 + (alpha * l3) ** 2)

    x = x + 1.0 * warp1 + math.cos(2.0 * math.pi / 3.0) * warp2 + math.cos(4.0 * math.pi / 3.0) * warp3
    y = y + 0.0 * warp1 + math.sin(2.0 * math.pi / 3.0) * warp2 + math.sin(4.0 * math.pi / 3.0) * warp3

    # equilateral (x, y) back to the right reference triangle
    l1e = (math.sqrt(3.0) * y + 1.0) / 3.0
    l2e = (-3.0 * x - math.sqrt(3.0) * y + 2.0) / 6.0
    l3e = (3.0 * x - math.sqrt(3.0) * y + 2.0) / 6.0
    r = -l2e + l3e - l1e
    s = -l2e - l3e + l1e
    return np.stack([r, s], axis=1)


def collapsed_quadrature(n):
    """n*n collapsed Gauss rule on T, exact for total degree 2n-1."""
    gl_x, gl_w = np.polynomial.legendre.leggauss(n)
    gj_x, gj_w = roots_jacobi(n, 1.0, 0.0)
    pts = np.empty((n * n, 2))
    wts = np.empty(n * n)
    k = 0
    for q in range(n):
        for p in range(n):
            eta1, eta2 = gl_x[p], gj_x[q]
            pts[k, 0] = 0.5 * (1.0 + eta1) * (1.0 - eta2) - 1.0
            pts[k, 1] = eta2
            wts[k] = 0.5 * gl_w[p] * gj_w[q]
            k += 1
    return pts, wts


def quadrature_for_degree(degree):
    n = max(1, (degree + 2) // 2)
    return collapsed_quadrature(n)


def in_reference(xi, slack=0.0):
    """True where xi lies in T inflated by slack."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    ok = (xi[:, 0] >= -1.0 - slack) & (xi[:, 1] >= -1.0 - slack) & (xi.sum(axis=1) <= slack)
    return ok if ok.size > 1 else bool(ok[0])


class RefTriangle:
    """Order-P nodal reference element with cached operators."""

    def __init__(self, order):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.order = order
        self.nodes = warp_blend_nodes(order)
        self.n_nodes = len(self.nodes)
        self.vandermonde = dubiner_vandermonde(order, self.nodes)
        self.v_inv = np.linalg.inv(self.vandermonde)
        self.quad_points, self.quad_weights = collapsed_quadrature(order + 2)
        self.basis_q = self.basis_at(self.quad_points)
        self.grad_q = self.grad_basis_at(self.quad_points)
        self._classify_nodes()
        self._edge_quadrature()

    # ---- basis evaluation -------------------------------------------------

    def basis_at(self, xi):
        """Lagrange basis values: shape (npts, n_nodes)."""
        return dubiner_vandermonde(self.order, xi) @ self.v_inv

    def grad_basis_at(self, xi):
        """Lagrange basis gradients: shape (npts, n_nodes, 2)."""
        vr, vs = dubiner_grad_vandermonde(self.order, xi)
        return np.stack([vr @ self.v_inv, vs @ self.v_inv], axis=2)

    # ---- node classification ----------------------------------------------

    def _classify_nodes(self):
        tol = 1e-9
        r, s = self.nodes[:, 0], self.nodes[:, 1]
        self.vertex_ids = np.array([
            int(np.argmin(np.abs(r - vx) + np.abs(s - vy))) for vx, vy in VERTICES])
        on_edge = [np.abs(s + 1.0) < tol,            # edge 0: v0 -> v1
                   np.abs(r + s) < tol,              # edge 1: v1 -> v2
                   np.abs(r + 1.0) < tol]            # edge 2: v2 -> v0
        along = [r, s, -s]
        self.edge_ids = []
        for e in range(3):
            ids = np.nonzero(on_edge[e])[0]
            ids = ids[np.argsort(along[e][ids])]
            self.edge_ids.append(ids)            # includes the two end vertices
        edge_set = set(int(i) for ids in self.edge_ids for i in ids)
        self.interior_ids = np.array([i for i in range(self.n_nodes) if i not in edge_set],
                                     dtype=int)
        # 1D positions of edge nodes in [-1,1] (same Gauss-Lobatto set on all edges)
        self.edge_node_params = gauss_lobatto(self.order)

    # ---- edge quadrature --------------------------------------------------

    def _edge_quadrature(self):
        n1 = self.order + 2
        gx, gw = np.polynomial.legendre.leggauss(n1)
        self.edge_quad_x = gx          # 1D points in [-1,1] along each edge
        self.edge_quad_w = gw

    def edge_points(self, edge, svals):
        """Reference coordinates of 1D params svals in [-1,1] along an edge."""
        svals = np.asarray(svals, dtype=float)
        a = VERTICES[edge]
        b = VERTICES[(edge + 1) % 3]
        lam = 0.5 * (svals + 1.0)
        return a[None, :] + lam[:, None] * (b - a)[None, :]

    def barycentric(self, xi):
        """Barycentric coordinates (l0, l1, l2) w.r.t. the reference vertices."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        l1 = 0.5 * (1.0 + xi[:, 0])
        l2 = 0.5 * (1.0 + xi[:, 1])
        l0 = 1.0 - l1 - l2
        return np.stack([l0, l1, l2], axis=1)


_CACHE = {}


def ref_triangle(order):
    """Shared cached instance per order."""
    if order not in _CACHE:
        _CACHE[order] = RefTriangle(order)
    return _CACHE[order]
