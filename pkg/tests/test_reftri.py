import numpy as np
import pytest

from quadfield.reftri import (collapsed_quadrature, gauss_lobatto,
                              quadrature_for_degree, ref_triangle,
                              warp_blend_nodes)


@pytest.mark.parametrize("order", [1, 2, 3, 4, 5, 6])
def test_node_count(order):
    assert len(warp_blend_nodes(order)) == (order + 1) * (order + 2) // 2


@pytest.mark.parametrize("order", [1, 2, 3, 5])
def test_quadrature_weights(order):
    ref = ref_triangle(order)
    assert ref.quad_weights.min() > 0
    assert ref.quad_weights.sum() == pytest.approx(2.0, abs=1e-13)


@pytest.mark.parametrize("order", [1, 2, 3, 5])
def test_quadrature_exactness(order):
    ref = ref_triangle(order)
    fine_pts, fine_w = collapsed_quadrature(40)
    degree = 2 * order + 2
    for a in range(degree + 1):
        b = degree - a
        val = ref.quad_weights @ (ref.quad_points[:, 0] ** a
                                  * ref.quad_points[:, 1] ** b)
        exact = fine_w @ (fine_pts[:, 0] ** a * fine_pts[:, 1] ** b)
        assert val == pytest.approx(exact, abs=1e-13)


def test_quadrature_for_degree():
    pts, w = quadrature_for_degree(8)
    fine_pts, fine_w = collapsed_quadrature(40)
    val = w @ (pts[:, 0] ** 5 * pts[:, 1] ** 3)
    exact = fine_w @ (fine_pts[:, 0] ** 5 * fine_pts[:, 1] ** 3)
    assert val == pytest.approx(exact, abs=1e-13)


@pytest.mark.parametrize("order", [1, 3, 5])
def test_lagrange_cardinality(order):
    ref = ref_triangle(order)
    v = ref.basis_at(ref.nodes)
    assert np.abs(v - np.eye(ref.n_nodes)).max() < 1e-11


def test_edge_nodes_are_gauss_lobatto():
    ref = ref_triangle(4)
    gl = gauss_lobatto(4)
    r = ref.nodes[ref.edge_ids[0]][:, 0]
    assert np.abs(r - gl).max() < 1e-10


def test_gradient_consistency():
    ref = ref_triangle(3)
    rng = np.random.default_rng(1)
    pts = np.column_stack([rng.uniform(-0.9, -0.1, 20),
                           rng.uniform(-0.9, -0.1, 20)])
    eps = 1e-6
    g = ref.grad_basis_at(pts)
    for d in range(2):
        shift = np.zeros(2)
        shift[d] = eps
        fd = (ref.basis_at(pts + shift) - ref.basis_at(pts - shift)) / (2 * eps)
        assert np.abs(fd - g[:, :, d]).max() < 1e-7


def test_basis_reproduces_polynomials():
    ref = ref_triangle(3)
    f = lambda x, y: 1.0 + x - 2 * y + x * y - x**3 + y**2
    coeffs = f(ref.nodes[:, 0], ref.nodes[:, 1])
    pts, _ = collapsed_quadrature(6)
    vals = ref.basis_at(pts) @ coeffs
    assert np.abs(vals - f(pts[:, 0], pts[:, 1])).max() < 1e-11
