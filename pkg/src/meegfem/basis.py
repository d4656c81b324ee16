"""Nodal basis evaluation on tet4 (P1) and hex8 (Q1 trilinear) elements.

Tetrahedra use barycentric coordinates, so basis values and the constant
gradients come from one 3x3 solve per element. Hexahedra use the trilinear
reference element on [-1, 1]^3 with corner ordering matching the mesh
element ordering (Gmsh hex8): bits (x, y, z) ->
(0,0,0) (1,0,0) (1,1,0) (0,1,0) (0,0,1) (1,0,1) (1,1,1) (0,1,1).
"""

import numpy as np

from .errors import NumericalError

HEX_CORNERS = np.array(
    [
        [-1.0, -1.0, -1.0],
        [1.0, -1.0, -1.0],
        [1.0, 1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
        [1.0, -1.0, 1.0],
        [1.0, 1.0, 1.0],
        [-1.0, 1.0, 1.0],
    ]
)


def tet_barycentric(verts, point):
    """Barycentric coordinates of ``point`` in the tet spanned by ``verts``.

    Parameters
    ----------
    verts : (4, 3) array
    point : (3,) array

    Returns
    -------
    (4,) array summing to one. Coordinates are negative outside the tet.
    """
    cols = (verts[1:] - verts[0]).T
    lam = np.linalg.solve(cols, np.asarray(point, dtype=float) - verts[0])
    return np.concatenate(([1.0 - lam.sum()], lam))


def tet_gradients(verts):
    """Constant P1 gradients (4, 3) and the signed volume of one tet."""
    cols = (verts[1:] - verts[0]).T
    det = np.linalg.det(cols)
    inv = np.linalg.inv(cols)
    grads = np.empty((4, 3))
    grads[1:] = inv
    grads[0] = -inv.sum(axis=0)
    return grads, det / 6.0


def tet_gradients_all(verts):
    """Vectorized ``tet_gradients`` for verts of shape (M, 4, 3).

    Returns (grads (M, 4, 3), signed volumes (M,)).
    """
    cols = np.transpose(verts[:, 1:] - verts[:, :1], (0, 2, 1))
    det = np.linalg.det(cols)
    inv = np.linalg.inv(cols)
    grads = np.empty(verts.shape)
    grads[:, 1:] = inv
    grads[:, 0] = -inv.sum(axis=1)
    return grads, det / 6.0


def hex_shape(xi):
    """Q1 shape values at reference points xi (..., 3) -> (..., 8)."""
    xi = np.asarray(xi, dtype=float)
    s = HEX_CORNERS  # (8, 3)
    terms = 1.0 + xi[..., None, :] * s  # (..., 8, 3)
    return 0.125 * terms.prod(axis=-1)


def hex_shape_grad(xi):
    """Q1 reference gradients at xi (..., 3) -> (..., 8, 3)."""
    xi = np.asarray(xi, dtype=float)
    s = HEX_CORNERS
    t = 1.0 + xi[..., None, :] * s  # (..., 8, 3)
    g = np.empty(t.shape)
    g[..., 0] = s[:, 0] * t[..., 1] * t[..., 2]
    g[..., 1] = s[:, 1] * t[..., 0] * t[..., 2]
    g[..., 2] = s[:, 2] * t[..., 0] * t[..., 1]
    return 0.125 * g


def hex_jacobian(verts, xi):
    """Jacobian dx/dxi (3, 3) of the trilinear map at one reference point."""
    g = hex_shape_grad(xi)  # (8, 3)
    return verts.T @ g


def hex_local_coords(verts, point, tol=1e-12, max_iter=30):
    """Invert the trilinear map with Newton iteration.

    Returns reference coordinates in [-1, 1]^3 for points inside the hex;
    values outside that cube indicate the point lies outside.
    """
    point = np.asarray(point, dtype=float)
    xi = np.zeros(3)
    scale = max(np.linalg.norm(verts.max(axis=0) - verts.min(axis=0)), 1e-300)
    for _ in range(max_iter):
        r = hex_shape(xi) @ verts - point
        if np.linalg.norm(r) <= tol * scale:
            return xi
        xi = xi - np.linalg.solve(hex_jacobian(verts, xi), r)
    raise NumericalError("trilinear coordinate inversion did not converge")


def shape_values(kind, verts, point):
    """Nodal basis values of element ``verts`` at a physical point."""
    if kind == "tetrahedron":
        return tet_barycentric(verts, point)
    return hex_shape(hex_local_coords(verts, point))


def shape_gradients(kind, verts, point):
    """Physical basis gradients (nodes, 3) at a physical point."""
    if kind == "tetrahedron":
        grads, _ = tet_gradients(verts)
        return grads
    xi = hex_local_coords(verts, point)
    g = hex_shape_grad(xi)
    return g @ np.linalg.inv(hex_jacobian(verts, xi))
