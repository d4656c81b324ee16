"""Dipole source models: partial integration, St. Venant, subtraction.

Each model converts a current dipole into a FEM load vector. Partial
integration and Venant produce sparse loads whose entry count does not
grow with mesh refinement (element DOFs, respectively a vertex one-ring);
subtraction produces a dense load plus a post-processing step that adds
the singularity potential back onto sampled values.

Binding a dipole resolves its element once and precomputes the
model-specific local data, so assembling many right-hand sides against a
shared volume conductor is cheap and thread-safe.
"""

import numpy as np

from .basis import hex_shape, hex_shape_grad, shape_gradients
from .errors import ConfigError, NumericalError
from .locator import find_element
from .mesh import TET, element_edges, isotropic_value
from .quadrature import hex_rule, quad_rule, tet_rule, tri_rule

PARTIAL_INTEGRATION = "partial_integration"
VENANT = "venant"
SUBTRACTION = "subtraction"
MODEL_KINDS = (PARTIAL_INTEGRATION, VENANT, SUBTRACTION)

VENANT_REFERENCE_LENGTH = 20.0  # mm
VENANT_REGULARIZATION = 1e-6


class Dipole:
    """Current dipole: position in mm, moment in nA mm."""

    def __init__(self, position, moment):
        self.position = np.asarray(position, dtype=float).reshape(3)
        self.moment = np.asarray(moment, dtype=float).reshape(3)
        if not (np.isfinite(self.position).all() and np.isfinite(self.moment).all()):
            raise ConfigError("dipole position and moment must be finite")
        self.position.setflags(write=False)
        self.moment.setflags(write=False)

    def __repr__(self):
        return "Dipole(position=%s, moment=%s)" % (
            self.position.tolist(), self.moment.tolist())


class SourceModelOutput:
    """Load vector in sparse (indices, values) or dense form.

    ``post_process_kind`` is None or "add_singularity"; the latter carries
    the dipole and sigma_inf needed to evaluate u_inf at sample points.
    """

    def __init__(self, n, indices=None, values=None, dense=None,
                 post_process_kind=None, dipole=None, sigma_inf=None):
        self.n = n
        self.indices = None if indices is None else np.asarray(indices, dtype=np.int64)
        self.values = None if values is None else np.asarray(values, dtype=float)
        self._dense = dense
        self.post_process_kind = post_process_kind
        self.dipole = dipole
        self.sigma_inf = sigma_inf

    @property
    def is_sparse(self):
        return self._dense is None

    @property
    def nnz(self):
        if self.is_sparse:
            return len(self.indices)
        return int(np.count_nonzero(self._dense))

    def dense(self):
        if self._dense is not None:
            return self._dense
        b = np.zeros(self.n)
        if self.indices is not None and len(self.indices):
            np.add.at(b, self.indices, self.values)
        return b


class BoundSource:
    """A dipole bound to its mesh element with model-local data resolved."""

    def __init__(self, kind, vc, dipole, element, data):
        self.kind = kind
        self.vc = vc
        self.dipole = dipole
        self.element = element
        self._data = data

    def assemble_rhs(self):
        if self.kind == PARTIAL_INTEGRATION:
            return assemble_rhs_partial_integration(self)
        if self.kind == VENANT:
            return assemble_rhs_venant(self)
        return assemble_rhs_subtraction(self)


def bind(kind, vc, locator, dipole, reference_length=VENANT_REFERENCE_LENGTH,
         regularization=VENANT_REGULARIZATION, quadrature_order=2):
    """Resolve the dipole element and precompute model-local data.

    Raises ConfigError for an unknown model kind, a dipole outside the
    mesh, or a subtraction dipole inside an anisotropic element.
    """
    if kind not in MODEL_KINDS:
        raise ConfigError("unknown source model %r (expected one of %s)"
                          % (kind, ", ".join(MODEL_KINDS)))
    mesh = vc.mesh
    result = find_element(locator, dipole.position)
    if not result.found:
        raise ConfigError("dipole at %s is outside the mesh (%s)"
                          % (dipole.position.tolist(), result.status))
    elem = result.element

    if kind == PARTIAL_INTEGRATION:
        data = {"gradients": shape_gradients(
            mesh.kind, mesh.element_vertices(elem), dipole.position)}
    elif kind == VENANT:
        ring = _vertex_one_ring(mesh, locator, dipole.position)
        q = _venant_loads(mesh.vertices[ring], dipole,
                          reference_length, regularization)
        data = {"ring": ring, "loads": q,
                "reference_length": float(reference_length),
                "regularization": float(regularization)}
    else:
        sigma = isotropic_value(vc.tensors[elem])
        if sigma is None:
            raise ConfigError(
                "subtraction source model needs an isotropic conductivity "
                "in the dipole element (element %d label %d)"
                % (elem, mesh.labels[elem]))
        if sigma <= 0:
            raise ConfigError("dipole element conductivity must be positive")
        data = {"sigma_inf": sigma, "quadrature_order": int(quadrature_order)}
    return BoundSource(kind, vc, dipole, elem, data)


def _vertex_one_ring(mesh, locator, point):
    """Nearest mesh vertex plus its edge-connected neighbors, sorted."""
    v0 = locator.nearest_vertex(point)
    edges = element_edges(mesh.kind)
    touching = np.nonzero((mesh.elements == v0).any(axis=1))[0]
    ring = {v0}
    for e in touching:
        conn = mesh.elements[e]
        pairs = conn[edges]
        hit = (pairs == v0).any(axis=1)
        ring.update(int(v) for v in pairs[hit].ravel())
    return np.array(sorted(ring), dtype=np.int64)


def _venant_loads(positions, dipole, aref, lam):
    """Monopole loads matching dipole moments of order 0..2 per axis.

    Rows of X are the scaled moments 1, d_c/aref, (d_c/aref)^2 of the
    candidate vertices for each Cartesian direction c; the target asks for
    zero total charge, the prescribed first moment, and zero second
    moment. Tikhonov-regularized normal equations keep the small system
    well posed when the neighborhood is degenerate.
    """
    d = (positions - dipole.position) / aref  # (m, 3)
    m = len(positions)
    rows = []
    target = []
    for c in range(3):
        rows.append(np.ones(m))
        rows.append(d[:, c])
        rows.append(d[:, c] ** 2)
        target.extend([0.0, dipole.moment[c] / aref, 0.0])
    x = np.array(rows)
    t = np.array(target)
    return np.linalg.solve(x.T @ x + lam * np.eye(m), x.T @ t)


def assemble_rhs_partial_integration(bound):
    """b_i = M . grad(phi_i)(x_dp) on the dipole element's DOFs."""
    mesh = bound.vc.mesh
    n = mesh.n_vertices
    if not bound.dipole.moment.any():
        return SourceModelOutput(n, indices=[], values=[])
    values = bound._data["gradients"] @ bound.dipole.moment
    return SourceModelOutput(n, indices=mesh.elements[bound.element],
                             values=values)


def assemble_rhs_venant(bound):
    """Monopole loads on the one-ring of the vertex nearest the dipole."""
    n = bound.vc.mesh.n_vertices
    if not bound.dipole.moment.any():
        return SourceModelOutput(n, indices=[], values=[])
    return SourceModelOutput(n, indices=bound._data["ring"],
                             values=bound._data["loads"])


def u_inf(points, dipole, sigma_inf):
    """Unbounded-medium dipole potential at ``points`` (microvolts)."""
    d = np.atleast_2d(points) - dipole.position
    r = np.linalg.norm(d, axis=1)
    if (r == 0).any():
        raise NumericalError("singularity potential evaluated at the dipole")
    out = d @ dipole.moment / (4.0 * np.pi * sigma_inf * r ** 3)
    return out if np.ndim(points) > 1 else float(out[0])


def grad_u_inf(points, dipole, sigma_inf):
    """Gradient of the unbounded-medium dipole potential, (m, 3)."""
    d = np.atleast_2d(points) - dipole.position
    r = np.linalg.norm(d, axis=1)
    if (r == 0).any():
        raise NumericalError("singularity potential evaluated at the dipole")
    md = d @ dipole.moment
    g = dipole.moment / r[:, None] ** 3 - 3.0 * md[:, None] * d / r[:, None] ** 5
    return g / (4.0 * np.pi * sigma_inf)


def assemble_rhs_subtraction(bound):
    """Dense correction-potential load for the subtraction approach.

    b_i = -int (sigma - sigma_inf I) grad(u_inf) . grad(phi_i) dx
          -int_boundary sigma_inf (grad(u_inf) . n) phi_i ds

    Elements whose tensor equals sigma_inf * I bit for bit contribute
    nothing to the volume term and are skipped wholesale.
    """
    mesh = bound.vc.mesh
    dip = bound.dipole
    sigma_inf = bound._data["sigma_inf"]
    order = bound._data["quadrature_order"]
    b = np.zeros(mesh.n_vertices)
    if not dip.moment.any():
        return SourceModelOutput(mesh.n_vertices, dense=b,
                                 post_process_kind="add_singularity",
                                 dipole=dip, sigma_inf=sigma_inf)

    delta = bound.vc.tensors - sigma_inf * np.eye(3)
    active = np.nonzero((delta != 0.0).any(axis=(1, 2)))[0]
    if len(active):
        _subtraction_volume(mesh, active, delta[active], dip, sigma_inf,
                            order, b)
    _subtraction_boundary(mesh, dip, sigma_inf, order, b)
    return SourceModelOutput(mesh.n_vertices, dense=b,
                             post_process_kind="add_singularity",
                             dipole=dip, sigma_inf=sigma_inf)


def _subtraction_volume(mesh, active, delta, dip, sigma_inf, order, b):
    verts = mesh.element_vertices()[active]
    conn = mesh.elements[active]
    if mesh.kind == TET:
        from .basis import tet_gradients_all
        grads, vol = tet_gradients_all(verts)
        pts, wts = tet_rule(order)
        for lam, w in zip(pts, wts):
            x = np.einsum("k,mkd->md", lam, verts)
            flux = np.einsum("mxy,my->mx", delta, grad_u_inf(x, dip, sigma_inf))
            contrib = -w * vol[:, None] * np.einsum("mkx,mx->mk", grads, flux)
            np.add.at(b, conn, contrib)
    else:
        pts, wts = hex_rule(order)
        for xi, w in zip(pts, wts):
            gref = hex_shape_grad(xi)
            shp = hex_shape(xi)
            jac = np.einsum("mkx,kd->mxd", verts, gref)
            det = np.linalg.det(jac)
            g = np.einsum("kd,mdx->mkx", gref, np.linalg.inv(jac))
            x = np.einsum("k,mkd->md", shp, verts)
            flux = np.einsum("mxy,my->mx", delta, grad_u_inf(x, dip, sigma_inf))
            contrib = -w * det[:, None] * np.einsum("mkx,mx->mk", g, flux)
            np.add.at(b, conn, contrib)


def _subtraction_boundary(mesh, dip, sigma_inf, order, b):
    from .mesh import element_faces
    faces = element_faces(mesh.kind)
    centers = mesh.element_centers
    for e, f in mesh.boundary_faces:
        fv = mesh.elements[e][faces[f]]
        corners = mesh.vertices[fv]
        if mesh.kind == TET:
            normal = np.cross(corners[1] - corners[0], corners[2] - corners[0])
            area2 = np.linalg.norm(normal)
            normal = normal / area2
            if normal @ (corners.mean(axis=0) - centers[e]) < 0:
                normal = -normal
            pts, wts = tri_rule(min(order, 3))
            x = pts @ corners
            gn = grad_u_inf(x, dip, sigma_inf) @ normal
            # phi values on a P1 face are the barycentric coordinates
            b[fv] -= 0.5 * area2 * sigma_inf * (wts * gn) @ pts
        else:
            pts, wts = quad_rule(order)
            for (u, v), w in zip(pts, wts):
                shp = 0.25 * np.array([(1 - u) * (1 - v), (1 + u) * (1 - v),
                                       (1 + u) * (1 + v), (1 - u) * (1 + v)])
                du = 0.25 * np.array([-(1 - v), (1 - v), (1 + v), -(1 + v)])
                dv = 0.25 * np.array([-(1 - u), -(1 + u), (1 + u), (1 - u)])
                tu = du @ corners
                tv = dv @ corners
                normal = np.cross(tu, tv)
                scale = np.linalg.norm(normal)
                normal = normal / scale
                x = shp @ corners
                if normal @ (x - centers[e]) < 0:
                    normal = -normal
                gn = grad_u_inf(x[None, :], dip, sigma_inf)[0] @ normal
                b[fv] -= w * scale * sigma_inf * gn * shp


def post_process(output, values, points):
    """Apply the output's post-processing step to sampled potentials."""
    if output.post_process_kind is None:
        return np.asarray(values, dtype=float)
    if output.post_process_kind != "add_singularity":
        raise ConfigError("unknown post-process kind %r"
                          % output.post_process_kind)
    values = np.asarray(values, dtype=float)
    return values + u_inf(points, output.dipole, output.sigma_inf)
