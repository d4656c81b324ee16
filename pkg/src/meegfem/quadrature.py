"""Fixed quadrature rules on the reference elements.

Volume rules for tetrahedra return barycentric points and weights that sum
to one, so a physical integral is ``volume * sum(w * f(x))``. Hexahedron
rules live on [-1, 1]^3 and keep the raw Gauss weights (sum 8); the caller
multiplies by the Jacobian determinant per point. Face rules follow the
same convention (triangles normalized, quads raw).
"""

import numpy as np

_SQRT5 = np.sqrt(5.0)


def tet_rule(order):
    """Return (barycentric points (Q, 4), weights (Q,)) with sum(w) = 1."""
    if order <= 1:
        pts = np.array([[0.25, 0.25, 0.25, 0.25]])
        wts = np.array([1.0])
    elif order == 2:
        a = (5.0 + 3.0 * _SQRT5) / 20.0
        b = (5.0 - _SQRT5) / 20.0
        pts = np.full((4, 4), b)
        np.fill_diagonal(pts, a)
        wts = np.full(4, 0.25)
    elif order == 3:
        # Keast degree-3 rule; the negative centroid weight is intentional.
        pts = np.full((5, 4), 1.0 / 6.0)
        pts[0] = 0.25
        np.fill_diagonal(pts[1:], 0.5)
        wts = np.array([-0.8, 0.45, 0.45, 0.45, 0.45])
    else:
        raise ValueError("unsupported tetrahedron quadrature order %r" % order)
    return pts, wts


def tri_rule(order):
    """Return (barycentric points (Q, 3), weights (Q,)) with sum(w) = 1."""
    if order <= 1:
        return np.array([[1.0, 1.0, 1.0]]) / 3.0, np.array([1.0])
    if order == 2:
        pts = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        return pts, np.full(3, 1.0 / 3.0)
    if order == 3:
        # 4-point degree-3 rule with the usual negative centroid weight.
        pts = np.full((4, 3), 0.2)
        pts[0] = 1.0 / 3.0
        np.fill_diagonal(pts[1:], 0.6)
        wts = np.array([-27.0, 25.0, 25.0, 25.0]) / 48.0
        return pts, wts
    raise ValueError("unsupported triangle quadrature order %r" % order)


def gauss_1d(n):
    return np.polynomial.legendre.leggauss(n)


def hex_rule(n):
    """Tensor Gauss rule on [-1, 1]^3: points (n^3, 3), raw weights (n^3,)."""
    x, w = gauss_1d(n)
    pts = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    wts = (w[:, None, None] * w[None, :, None] * w[None, None, :]).reshape(-1)
    return pts, wts


def quad_rule(n):
    """Tensor Gauss rule on [-1, 1]^2: points (n^2, 2), raw weights (n^2,)."""
    x, w = gauss_1d(n)
    pts = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1).reshape(-1, 2)
    wts = (w[:, None] * w[None, :]).reshape(-1)
    return pts, wts
