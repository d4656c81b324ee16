"""Stiffness assembly and the projected preconditioned CG solver.

The bilinear form is a(u, v) = sum_K int_K sigma_K grad(u) . grad(v) dx
with piecewise-constant conductivity tensors. P1 tets contribute exact
constant-gradient element matrices; Q1 hexes are integrated with a 2x2x2
Gauss rule. Element matrices are symmetrized and scattered into the upper
triangle only, then mirrored, so the global matrix is exactly symmetric.

The pure-Neumann system is singular with kernel span{1}; right-hand sides
must be compatible (sum zero) and solutions are gauged to zero mean. CG
runs on the zero-mean subspace: the RHS is mean-centered, the Jacobi (or
symmetric Gauss-Seidel) preconditioned residual is projected, and the
iterate is re-centered after every update.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import hex_shape_grad, tet_gradients_all
from .errors import NumericalError
from .mesh import TET
from .quadrature import hex_rule

COMPAT_RTOL = 1e-8


class StiffnessSystem:
    """Assembled SPSD stiffness matrix plus solver bookkeeping."""

    def __init__(self, matrix, mesh_checksum):
        self.matrix = matrix
        self.n = matrix.shape[0]
        self.mesh_checksum = mesh_checksum
        self.diagonal = matrix.diagonal()
        if (self.diagonal <= 0).any():
            raise NumericalError("stiffness diagonal has non-positive entries")
        self._lower = None

    def lower_triangle(self):
        if self._lower is None:
            self._lower = sp.tril(self.matrix, format="csr")
        return self._lower


class Solution:
    """CG result: zero-mean coefficients plus convergence diagnostics."""

    def __init__(self, coefficients, iterations, residual, converged):
        self.coefficients = coefficients
        self.iterations = iterations
        self.residual = residual
        self.converged = converged


def assemble_stiffness(vc):
    """Assemble the stiffness matrix of a VolumeConductor.

    Parameters
    ----------
    vc : VolumeConductor

    Returns
    -------
    StiffnessSystem with a CSR matrix of shape (n_vertices, n_vertices).

    Degenerate elements (non-positive volume or Jacobian) are rejected at
    mesh construction; assembly re-checks tet volumes because conductivity
    scaling makes silent sign errors otherwise undetectable.
    """
    mesh = vc.mesh
    verts = mesh.element_vertices()
    sig = vc.tensors
    if mesh.kind == TET:
        grads, vol = tet_gradients_all(verts)
        if (vol <= 0).any():
            raise NumericalError("degenerate tetrahedron during assembly")
        flux = np.einsum("mxy,may->max", sig, grads)
        ke = np.einsum("max,mbx->mab", flux, grads) * vol[:, None, None]
    else:
        pts, wts = hex_rule(2)
        m = mesh.n_elements
        ke = np.zeros((m, 8, 8))
        for p, w in zip(pts, wts):
            gref = hex_shape_grad(p)  # (8, 3)
            jac = np.einsum("mkx,kd->mxd", verts, gref)
            det = np.linalg.det(jac)
            if (det <= 0).any():
                raise NumericalError("degenerate hexahedron during assembly")
            g = np.einsum("kd,mdx->mkx", gref, np.linalg.inv(jac))
            flux = np.einsum("mxy,may->max", sig, g)
            ke += w * det[:, None, None] * np.einsum("max,mbx->mab", flux, g)
    ke = 0.5 * (ke + np.transpose(ke, (0, 2, 1)))

    conn = mesh.elements
    k = conn.shape[1]
    rows = np.repeat(conn, k, axis=1).reshape(-1)
    cols = np.tile(conn, (1, k)).reshape(-1)
    vals = ke.reshape(-1)
    # Keep only the upper triangle and mirror it afterwards: the result is
    # exactly symmetric by construction, bit for bit.
    keep = rows <= cols
    upper = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])),
                          shape=(mesh.n_vertices, mesh.n_vertices)).tocsr()
    matrix = upper + sp.triu(upper, k=1).T
    return StiffnessSystem(matrix.tocsr(), mesh.checksum())


def _center(x):
    x -= x.mean()
    return x


def solve(system, rhs, tol=1e-8, max_iterations=None, preconditioner="jacobi"):
    """Solve A x = b on the zero-mean subspace with preconditioned CG.

    Parameters
    ----------
    system : StiffnessSystem
    rhs : (n,) compatible load vector (sum zero within 1e-8 * ||b||)
    tol : relative preconditioned residual target
    max_iterations : default 10 * n
    preconditioner : "jacobi" or "ssor"

    Returns
    -------
    Solution; ``converged`` is False when the iteration cap was reached
    (no exception here, the driver decides how hard that failure is).
    """
    b = np.asarray(rhs, dtype=float)
    if b.shape != (system.n,):
        raise NumericalError("rhs length %d does not match system size %d"
                             % (b.size, system.n))
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return Solution(np.zeros(system.n), 0, 0.0, True)
    if abs(b.sum()) > COMPAT_RTOL * nb:
        raise NumericalError(
            "incompatible right-hand side: sum %.3e exceeds the "
            "compatibility tolerance for a pure-Neumann system" % b.sum())
    if max_iterations is None:
        max_iterations = 10 * system.n
    apply_m = _make_preconditioner(system, preconditioner)

    a = system.matrix
    b = _center(b.copy())
    x = np.zeros(system.n)
    r = b.copy()
    z = _center(apply_m(r))
    rz = float(r @ z)
    denom = np.sqrt(abs(float(b @ _center(apply_m(b.copy())))))
    if denom == 0.0:
        return Solution(x, 0, 0.0, True)
    p = z.copy()
    it = 0
    res = np.sqrt(abs(rz)) / denom
    while res > tol and it < max_iterations:
        q = a @ p
        alpha = rz / float(p @ q)
        x += alpha * p
        _center(x)
        r -= alpha * q
        z = _center(apply_m(r))
        rz_new = float(r @ z)
        res = np.sqrt(abs(rz_new)) / denom
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    return Solution(x, it, float(res), bool(res <= tol))


def _make_preconditioner(system, kind):
    if kind == "jacobi":
        dinv = 1.0 / system.diagonal

        def apply_m(r):
            return dinv * r

        return apply_m
    if kind == "ssor":
        lower = system.lower_triangle()
        upper = sp.csr_matrix(lower.T)
        d = system.diagonal

        def apply_m(r):
            y = spla.spsolve_triangular(lower, r, lower=True)
            return spla.spsolve_triangular(upper, d * y, lower=False)

        return apply_m
    raise NumericalError("unknown preconditioner %r" % kind)
