"""Magnetometer fields from the discrete potential via Biot-Savart.

The volume-current (secondary) field is evaluated through a two-stage
split: the flux sigma*grad(u_h) is projected onto element-wise constant
vectors beta = P alpha, and each coil contributes a functional S(y) over
those flux coefficients, so the reading is <S(y), P alpha> and the
pulled-back vector P^t S(y) plays the role of a restriction row in the
MEG transfer matrix.

Sign convention: volume currents are the return currents -sigma*grad(u),
and that minus is folded into S(y). The total field is then simply
meg_primary + meg_secondary, directly comparable to the closed-form
sphere solution.

Units follow the rest of the package (mm, S/m, nA*mm); with mu0/4pi
equal to 100 in this system, fields come out in femtotesla.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .analytic import MU0_OVER_4PI
from .basis import hex_jacobian, hex_shape, shape_gradients, tet_gradients_all
from .errors import ConfigError, NumericalError
from .femsolver import Solution, solve
from .locator import KdTree
from .mesh import TET, element_faces
from .quadrature import hex_rule, tet_rule
from .transfer import TransferMatrix, _closest_point_on_face

RAW_ORIENTATION_TOL = 1e-6  # text round-trips cost a few ulps


class CoilArray:
    """Magnetometer positions with unit axis orientations.

    Orientations are renormalized on construction, so the stored vectors
    are unit to round-off; inputs deviating by more than 1e-6 are treated
    as malformed rather than rounded.
    """

    def __init__(self, positions, orientations):
        self.positions = np.atleast_2d(np.asarray(positions, dtype=float))
        self.orientations = np.atleast_2d(np.asarray(orientations,
                                                     dtype=float))
        if self.positions.shape != self.orientations.shape or \
                self.positions.shape[1] != 3:
            raise ConfigError("coil positions and orientations must both "
                              "have shape (N, 3)")
        if not np.isfinite(self.positions).all() or \
                not np.isfinite(self.orientations).all():
            raise ConfigError("coil definitions must be finite")
        norms = np.linalg.norm(self.orientations, axis=1)
        if np.abs(norms - 1.0).max() > RAW_ORIENTATION_TOL:
            raise ConfigError("coil orientations must be unit vectors "
                              "(worst deviation %.2e)"
                              % float(np.abs(norms - 1.0).max()))
        self.orientations = self.orientations / norms[:, None]

    @property
    def n(self):
        return len(self.positions)


class FluxRepresentation:
    """Element-wise constant flux coefficients beta = P alpha."""

    def __init__(self, beta):
        self.beta = np.asarray(beta, dtype=float)

    @property
    def n_elements(self):
        return len(self.beta)


def project_flux(vc, alpha):
    """Project the discrete flux: beta_K = sigma_K grad(u_h)|_K.

    Exact for tetrahedra (the P1 gradient is constant); trilinear hex
    gradients are taken at the element center. Accepts a Solution or a
    raw coefficient vector.
    """
    if isinstance(alpha, Solution):
        alpha = alpha.coefficients
    alpha = np.asarray(alpha, dtype=float)
    mesh = vc.mesh
    if alpha.shape != (mesh.n_vertices,):
        raise ConfigError("coefficient vector length %d does not match "
                          "%d mesh vertices" % (alpha.size, mesh.n_vertices))
    verts = mesh.element_vertices()
    if mesh.kind == TET:
        grads, _ = tet_gradients_all(verts)
    else:
        grads = np.empty((mesh.n_elements, 8, 3))
        for e in range(mesh.n_elements):
            grads[e] = shape_gradients(mesh.kind, verts[e],
                                       verts[e].mean(axis=0))
    du = np.einsum("ma,max->mx", alpha[mesh.elements], grads)
    beta = np.einsum("mxy,my->mx", vc.tensors, du)
    return FluxRepresentation(beta)


def _coil_clearance(mesh, positions):
    """Distance of each coil to the mesh surface; inside is an error.

    Returns (distances, local element diameters) so callers can decide
    whether the default quadrature is safe.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    faces = element_faces(mesh.kind)
    bverts = mesh.boundary_vertex_indices()
    tree = KdTree(mesh.vertices[bverts])
    adjacency = {}
    for e, f in mesh.boundary_faces:
        fv = mesh.elements[e][faces[f]]
        for v in fv:
            adjacency.setdefault(int(v), []).append((int(e), fv))
    diameters = mesh.element_diameters
    centers = mesh.element_centers
    dist = np.empty(len(positions))
    local_diam = np.empty(len(positions))
    for k, y in enumerate(positions):
        v_near = int(bverts[tree.nearest(y)[0]])
        best = None
        for e, fv in adjacency[v_near]:
            q = _closest_point_on_face(y, mesh.vertices[fv])
            d2 = float(np.sum((y - q) ** 2))
            if best is None or d2 < best[0]:
                best = (d2, e, q)
        d2, e, q = best
        # outward test against the owning element's center; boundary faces
        # open toward the exterior
        away = y - q
        outward = q - centers[e]
        if away @ outward <= 0:
            raise ConfigError(
                "coil %d at distance %.2f mm is inside or on the mesh"
                % (k, np.sqrt(d2)))
        dist[k] = np.sqrt(d2)
        local_diam[k] = diameters[e]
    return dist, local_diam


def _element_integrals(mesh, y, order):
    """mu0/4pi * integral over each element of (y-x)/|y-x|^3 dx."""
    verts = mesh.element_vertices()
    acc = np.zeros((mesh.n_elements, 3))
    if mesh.kind == TET:
        bary, wts = tet_rule(order)
        _, vol = tet_gradients_all(verts)
        for lam, w in zip(bary, wts):
            x = np.einsum("a,max->mx", lam, verts)
            r = y[None, :] - x
            r3 = np.linalg.norm(r, axis=1) ** 3
            acc += (w / r3)[:, None] * r
        acc *= vol[:, None]
    else:
        pts, wts = hex_rule(order)
        for xi, w in zip(pts, wts):
            jac = np.abs(np.linalg.det(
                np.stack([hex_jacobian(v, xi) for v in verts])))
            x = np.einsum("a,max->mx", hex_shape(xi), verts)
            r = y[None, :] - x
            r3 = np.linalg.norm(r, axis=1) ** 3
            acc += (w * jac / r3)[:, None] * r
    return MU0_OVER_4PI * acc


def _effective_orders(mesh, positions, quadrature_order):
    """Per-coil quadrature order after the near-surface guard."""
    dist, diam = _coil_clearance(mesh, positions)
    base = int(quadrature_order)
    return np.where(dist < diam, max(base + 1, 3), base)


def assemble_sensor_functional(vc, position, orientation,
                               quadrature_order=2):
    """Per-element functional s so that the coil reading is sum(s * beta).

    Includes the return-current minus sign. Coils closer to the surface
    than one local element diameter get the quadrature order raised; a
    coil inside the mesh is rejected.
    """
    mesh = vc.mesh
    y = np.asarray(position, dtype=float).reshape(3)
    o = np.asarray(orientation, dtype=float).reshape(3)
    order = int(_effective_orders(mesh, y[None, :], quadrature_order)[0])
    w = _element_integrals(mesh, y, order)
    # o . (e_c x w) = (w x o)_c, with the return-current sign flip
    return -np.cross(w, o)


def meg_secondary(vc, alpha, coils, quadrature_order=2):
    """Volume-current field at each coil, in fT."""
    flux = project_flux(vc, alpha)
    mesh = vc.mesh
    orders = _effective_orders(mesh, coils.positions, quadrature_order)
    values = np.empty(coils.n)
    for k in range(coils.n):
        w = _element_integrals(mesh, coils.positions[k], int(orders[k]))
        s = -np.cross(w, coils.orientations[k])
        values[k] = float(np.sum(s * flux.beta))
    return values


def meg_primary(dipole, coils):
    """Field of the bare dipole in free space, projected on coil axes."""
    r = coils.positions - dipole.position[None, :]
    rn = np.linalg.norm(r, axis=1)
    if rn.min() < 1e-12:
        raise ConfigError("coil coincides with the dipole position")
    b = MU0_OVER_4PI * np.cross(dipole.moment[None, :], r) / rn[:, None] ** 3
    return np.einsum("kx,kx->k", b, coils.orientations)


def compute_meg_transfer(system, vc, coils, tol=1e-8, workers=1,
                         quadrature_order=2, preconditioner="jacobi"):
    """Transfer rows z_k solving A z_k = centered(P^t S(y_k)).

    Applying row k to a source RHS b reproduces meg_secondary of the
    direct solution; the primary field is added separately.
    """
    mesh = vc.mesh
    if system.n != mesh.n_vertices:
        raise ConfigError("system and volume conductor meshes disagree")
    verts = mesh.element_vertices()
    if mesh.kind == TET:
        grads, _ = tet_gradients_all(verts)
    else:
        grads = np.empty((mesh.n_elements, 8, 3))
        for e in range(mesh.n_elements):
            grads[e] = shape_gradients(mesh.kind, verts[e],
                                       verts[e].mean(axis=0))

    orders = _effective_orders(mesh, coils.positions, quadrature_order)

    def row_solve(k):
        w = _element_integrals(mesh, coils.positions[k], int(orders[k]))
        s = -np.cross(w, coils.orientations[k])
        pulled = np.einsum("mxy,my->mx", vc.tensors, s)
        contrib = np.einsum("max,mx->ma", grads, pulled)
        rhs = np.zeros(system.n)
        np.add.at(rhs, mesh.elements, contrib)
        rhs -= rhs.mean()
        sol = solve(system, rhs, tol=tol, preconditioner=preconditioner)
        if not sol.converged:
            raise NumericalError(
                "MEG transfer row for coil %d did not converge "
                "(residual %.3e after %d iterations)"
                % (k, sol.residual, sol.iterations))
        return k, sol.coefficients

    matrix = np.empty((coils.n, system.n))
    if workers <= 1:
        results = map(row_solve, range(coils.n))
    else:
        pool = ThreadPoolExecutor(max_workers=int(workers))
        try:
            results = list(pool.map(row_solve, range(coils.n)))
        finally:
            pool.shutdown()
    for k, z_k in results:
        matrix[k] = z_k
    return TransferMatrix(matrix, "meg", system.mesh_checksum, tol)


def apply_meg_transfer(transfer, output, coils=None, dipole=None,
                       include_primary=True):
    """Coil readings from a source-model output through an MEG transfer.

    The secondary field is <z_k, b>; the analytic primary field of the
    driving dipole is added unless ``include_primary`` is off. No mean
    centering: magnetometer readings are absolute.
    """
    if transfer.modality != "meg":
        raise ConfigError(
            "cannot apply a %s transfer matrix to an MEG query"
            % transfer.modality)
    if output.post_process_kind is not None:
        raise ConfigError("the subtraction source model is not supported "
                          "for MEG")
    if output.n != transfer.n_dofs:
        raise ConfigError("source vector length %d does not match transfer "
                          "with %d DOFs" % (output.n, transfer.n_dofs))
    if output.is_sparse:
        if len(output.indices) == 0:
            field = np.zeros(transfer.n_sensors)
        else:
            field = transfer.matrix[:, output.indices] @ output.values
    else:
        field = transfer.matrix @ output.dense()
    if include_primary:
        if dipole is None or coils is None:
            raise ConfigError("adding the primary field requires the dipole "
                              "and the coil array")
        field = field + meg_primary(dipole, coils)
    return field
