"""Conforming volume meshes and their conductivity bindings.

A mesh is a single-kind collection of tet4 or hex8 elements with integer
tissue labels. Geometry lives in millimeters. Loading validates element
orientation (positive signed volume for tets, positive corner Jacobians
for hexes) and builds the face-neighbor table used by the point locator.

The Gmsh reader handles a strict subset of the MSH 2.2 ASCII format:
$MeshFormat / $Nodes / $Elements with contiguous 1-based node ids, volume
element types 4 (tet4) and 5 (hex8), and the first element tag taken as
the tissue label. Lower-dimensional elements (types 15, 1, 2, 3) are
skipped with a warning; unknown sections are skipped with a warning;
anything else is an error naming the offending line.
"""

import hashlib
import warnings

import numpy as np

from .basis import hex_jacobian, HEX_CORNERS, tet_gradients_all
from .errors import MeshError
from .quadrature import hex_rule

TET = "tetrahedron"
HEX = "hexahedron"

# Face f of a tet is opposite vertex f.
TET_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])
HEX_FACES = np.array(
    [[0, 3, 2, 1], [4, 5, 6, 7], [0, 1, 5, 4], [1, 2, 6, 5], [2, 3, 7, 6], [3, 0, 4, 7]]
)
TET_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])
HEX_EDGES = np.array(
    [[0, 1], [1, 2], [2, 3], [3, 0], [4, 5], [5, 6], [6, 7], [7, 4],
     [0, 4], [1, 5], [2, 6], [3, 7]]
)

_GMSH_TYPE = {TET: 4, HEX: 5}
_SKIPPED_ELEMENT_TYPES = {15: 1, 1: 2, 2: 3, 3: 4}  # type -> node count


def element_faces(kind):
    return TET_FACES if kind == TET else HEX_FACES


def element_edges(kind):
    return TET_EDGES if kind == TET else HEX_EDGES


class Mesh:
    """Immutable single-kind volume mesh with face-neighbor topology.

    Parameters
    ----------
    vertices : (n, 3) float array, mm
    elements : (M, 4) or (M, 8) int array of vertex indices
    labels : (M,) int array of tissue labels
    kind : "tetrahedron" or "hexahedron"
    """

    def __init__(self, vertices, elements, labels, kind):
        if kind not in (TET, HEX):
            raise MeshError("unknown element kind %r" % kind)
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        elements = np.ascontiguousarray(elements, dtype=np.int64)
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        nodes = 4 if kind == TET else 8
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError("vertices must have shape (n, 3)")
        if elements.ndim != 2 or elements.shape[1] != nodes:
            raise MeshError(
                "%s elements must have shape (M, %d)" % (kind, nodes))
        if labels.shape != (elements.shape[0],):
            raise MeshError("labels must have one entry per element")
        bad_mask = (elements < 0) | (elements >= len(vertices))
        if elements.size and bad_mask.any():
            bad = int(np.argmax(bad_mask.any(axis=1)))
            raise MeshError("dangling vertex index in element %d" % bad)
        self.kind = kind
        self.vertices = vertices
        self.elements = elements
        self.labels = labels
        self._validate_orientation()
        self.neighbors = self._build_neighbors()
        for a in (self.vertices, self.elements, self.labels, self.neighbors):
            a.setflags(write=False)
        self._centers = None
        self._diameters = None
        self._boundary_faces = None

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def nodes_per_element(self):
        return self.elements.shape[1]

    def element_vertices(self, e=None):
        if e is None:
            return self.vertices[self.elements]
        return self.vertices[self.elements[e]]

    @property
    def element_centers(self):
        if self._centers is None:
            c = self.element_vertices().mean(axis=1)
            c.setflags(write=False)
            self._centers = c
        return self._centers

    @property
    def element_diameters(self):
        """Max vertex-pair distance per element."""
        if self._diameters is None:
            v = self.element_vertices()
            d2 = ((v[:, :, None, :] - v[:, None, :, :]) ** 2).sum(axis=-1)
            d = np.sqrt(d2.max(axis=(1, 2)))
            d.setflags(write=False)
            self._diameters = d
        return self._diameters

    @property
    def boundary_faces(self):
        """Array (B, 2) of (element, local face index) for boundary faces."""
        if self._boundary_faces is None:
            e, f = np.nonzero(self.neighbors < 0)
            bf = np.stack([e, f], axis=1)
            bf.setflags(write=False)
            self._boundary_faces = bf
        return self._boundary_faces

    def boundary_vertex_indices(self):
        faces = element_faces(self.kind)
        e, f = self.boundary_faces.T
        return np.unique(self.elements[e[:, None], faces[f]])

    def _validate_orientation(self):
        if self.n_elements == 0:
            return
        verts = self.element_vertices()
        if self.kind == TET:
            # Determinant only; inverting the edge matrix would blow up on
            # the degenerate elements this check is meant to reject.
            cols = np.transpose(verts[:, 1:] - verts[:, :1], (0, 2, 1))
            vol = np.linalg.det(cols) / 6.0
            bad = np.nonzero(vol <= 0)[0]
            if bad.size:
                raise MeshError(
                    "inverted or degenerate tetrahedron at element %d "
                    "(signed volume %.3e)" % (bad[0], vol[bad[0]]))
        else:
            for corner in HEX_CORNERS:
                jac = np.einsum("mkx,kd->mxd", verts,
                                _hex_grad_at(corner))
                det = np.linalg.det(jac)
                bad = np.nonzero(det <= 0)[0]
                if bad.size:
                    raise MeshError(
                        "non-positive Jacobian at a corner of hexahedron %d"
                        % bad[0])

    def _build_neighbors(self):
        faces = element_faces(self.kind)
        m, nf = self.n_elements, len(faces)
        keys = np.sort(self.elements[:, faces], axis=2).reshape(m * nf, -1)
        order = np.lexsort(keys.T[::-1])
        sk = keys[order]
        same = np.concatenate([[False], (sk[1:] == sk[:-1]).all(axis=1)])
        # Faces are shared by at most two elements in a conforming mesh.
        runs = np.flatnonzero(np.concatenate([same[1:] & same[:-1], [False]]))
        if runs.size:
            raise MeshError("face shared by more than two elements")
        neighbors = np.full(m * nf, -1, dtype=np.int64)
        j = np.flatnonzero(same)
        a, b = order[j - 1], order[j]
        neighbors[a] = b // nf
        neighbors[b] = a // nf
        return neighbors.reshape(m, nf)

    def checksum(self):
        """SHA-256 over the canonical mesh bytes (kind, arrays, labels)."""
        h = hashlib.sha256()
        h.update(self.kind.encode())
        h.update(np.int64(self.n_vertices).tobytes())
        h.update(np.int64(self.n_elements).tobytes())
        h.update(self.vertices.tobytes())
        h.update(self.elements.tobytes())
        h.update(self.labels.tobytes())
        return h.hexdigest()


def _hex_grad_at(corner):
    from .basis import hex_shape_grad

    return hex_shape_grad(corner)


def element_measure(mesh):
    """Volumes (M,) of every element.

    Tets use the exact determinant formula. Hexes integrate the trilinear
    Jacobian determinant with a 2x2x2 Gauss rule, which is exact for this
    map; validity (positive determinant) is checked at the 8 corners when
    the mesh is constructed.
    """
    verts = mesh.element_vertices()
    if mesh.kind == TET:
        _, vol = tet_gradients_all(verts)
        return vol
    pts, wts = hex_rule(2)
    from .basis import hex_shape_grad

    vol = np.zeros(mesh.n_elements)
    for p, w in zip(pts, wts):
        jac = np.einsum("mkx,kd->mxd", verts, hex_shape_grad(p))
        vol += w * np.linalg.det(jac)
    return vol


def load_msh(path):
    """Read a Gmsh MSH 2.2 ASCII file (strict subset) into a Mesh."""
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    i, n = 0, len(lines)
    nodes, elems, labels, kind = None, [], [], None
    skipped = 0
    saw_format = False
    while i < n:
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if not line.startswith("$"):
            raise MeshError("%s:%d: expected section header, got %r"
                            % (path, i + 1, line))
        section = line[1:]
        if section == "MeshFormat":
            if i + 2 >= n or not lines[i + 2].strip() == "$EndMeshFormat":
                raise MeshError("%s:%d: malformed $MeshFormat" % (path, i + 1))
            ver = lines[i + 1].split()
            if not ver or not ver[0].startswith("2.2") or (len(ver) > 1 and ver[1] != "0"):
                raise MeshError("%s:%d: unsupported mesh format %r"
                                % (path, i + 2, lines[i + 1].strip()))
            saw_format = True
            i += 3
        elif section == "Nodes":
            count, i = _read_count(path, lines, i + 1)
            nodes = np.empty((count, 3))
            for k in range(count):
                parts = lines[i + k].split()
                if len(parts) != 4:
                    raise MeshError("%s:%d: malformed node line" % (path, i + k + 1))
                if int(parts[0]) != k + 1:
                    raise MeshError("%s:%d: node ids must be contiguous from 1"
                                    % (path, i + k + 1))
                nodes[k] = [float(x) for x in parts[1:]]
            i += count
            i = _expect_end(path, lines, i, "Nodes")
        elif section == "Elements":
            count, i = _read_count(path, lines, i + 1)
            for k in range(count):
                lineno = i + k + 1
                parts = lines[i + k].split()
                if len(parts) < 3:
                    raise MeshError("%s:%d: malformed element line" % (path, lineno))
                etype = int(parts[1])
                ntags = int(parts[2])
                conn = parts[3 + ntags:]
                if etype in _SKIPPED_ELEMENT_TYPES:
                    skipped += 1
                    continue
                if etype == 4:
                    this_kind, nn = TET, 4
                elif etype == 5:
                    this_kind, nn = HEX, 8
                else:
                    raise MeshError("%s:%d: unsupported element type %d"
                                    % (path, lineno, etype))
                if kind is None:
                    kind = this_kind
                elif kind != this_kind:
                    raise MeshError("%s:%d: mixed element kinds (%s and %s)"
                                    % (path, lineno, kind, this_kind))
                if len(conn) != nn:
                    raise MeshError("%s:%d: expected %d vertices, got %d"
                                    % (path, lineno, nn, len(conn)))
                label = int(parts[3]) if ntags >= 1 else 0
                elems.append([int(c) - 1 for c in conn])
                labels.append(label)
            i += count
            i = _expect_end(path, lines, i, "Elements")
        else:
            warnings.warn("%s: skipping unknown section $%s" % (path, section))
            end = "$End" + section
            while i < n and lines[i].strip() != end:
                i += 1
            if i >= n:
                raise MeshError("%s: unterminated section $%s" % (path, section))
            i += 1
    if not saw_format:
        raise MeshError("%s: missing $MeshFormat section" % path)
    if nodes is None:
        raise MeshError("%s: missing $Nodes section" % path)
    if kind is None:
        raise MeshError("%s: no volume elements found" % path)
    if skipped:
        warnings.warn("%s: skipped %d lower-dimensional elements" % (path, skipped))
    return Mesh(nodes, np.array(elems, dtype=np.int64),
                np.array(labels, dtype=np.int64), kind)


def _read_count(path, lines, i):
    try:
        return int(lines[i].strip()), i + 1
    except (IndexError, ValueError):
        raise MeshError("%s:%d: expected a count" % (path, i + 1))


def _expect_end(path, lines, i, name):
    if i >= len(lines) or lines[i].strip() != "$End" + name:
        raise MeshError("%s:%d: expected $End%s" % (path, i + 1, name))
    return i + 1


def save_msh(mesh, path):
    """Write a Mesh back out in the same MSH 2.2 subset."""
    etype = _GMSH_TYPE[mesh.kind]
    with open(path, "w") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        fh.write("$Nodes\n%d\n" % mesh.n_vertices)
        for k, v in enumerate(mesh.vertices):
            fh.write("%d %.17g %.17g %.17g\n" % (k + 1, v[0], v[1], v[2]))
        fh.write("$EndNodes\n$Elements\n%d\n" % mesh.n_elements)
        for k, (conn, lab) in enumerate(zip(mesh.elements, mesh.labels)):
            fh.write("%d %d 2 %d %d %s\n"
                     % (k + 1, etype, lab, lab,
                        " ".join(str(c + 1) for c in conn)))
        fh.write("$EndElements\n")


def load_conductivities(path):
    """Read a label -> conductivity tensor map.

    Each non-comment line is either ``label value`` (isotropic, S/m) or
    ``label xx xy xz yy yz zz`` (symmetric tensor, upper triangle).
    Returns dict[int, (3, 3) ndarray]. Tensors must be positive definite.
    """
    tensors = {}
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                label = int(parts[0])
                vals = [float(x) for x in parts[1:]]
            except ValueError:
                raise MeshError("%s:%d: malformed conductivity line" % (path, lineno))
            if len(vals) == 1:
                t = np.eye(3) * vals[0]
            elif len(vals) == 6:
                xx, xy, xz, yy, yz, zz = vals
                t = np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])
            else:
                raise MeshError(
                    "%s:%d: expected 1 or 6 values after the label" % (path, lineno))
            if label in tensors:
                raise MeshError("%s:%d: duplicate label %d" % (path, lineno, label))
            _check_spd(t, "label %d (%s:%d)" % (label, path, lineno))
            tensors[label] = t
    if not tensors:
        raise MeshError("%s: no conductivity entries" % path)
    return tensors


def _check_spd(t, what):
    if not np.allclose(t, t.T, rtol=0, atol=1e-12 * max(1.0, abs(t).max())):
        raise MeshError("conductivity tensor for %s is not symmetric" % what)
    eig = np.linalg.eigvalsh(t)
    if eig.min() <= 0:
        raise MeshError(
            "conductivity tensor for %s is not positive definite "
            "(eigenvalues %s)" % (what, np.array2string(eig, precision=4)))


class VolumeConductor:
    """A mesh together with one symmetric PD conductivity tensor per element.

    ``tensors`` is either a dict label -> (3, 3) array or an (M, 3, 3)
    array giving per-element tensors directly. Every label present in the
    mesh must be covered.
    """

    def __init__(self, mesh, tensors):
        self.mesh = mesh
        if isinstance(tensors, dict):
            self.by_label = {int(k): np.asarray(v, dtype=float) for k, v in tensors.items()}
            missing = sorted(set(mesh.labels.tolist()) - set(self.by_label))
            if missing:
                raise MeshError("no conductivity tensor for mesh labels %s" % missing)
            for lab, t in self.by_label.items():
                _check_spd(t, "label %d" % lab)
            table = np.empty((mesh.n_elements, 3, 3))
            for lab, t in self.by_label.items():
                table[mesh.labels == lab] = t
            self.tensors = table
        else:
            table = np.ascontiguousarray(tensors, dtype=float)
            if table.shape != (mesh.n_elements, 3, 3):
                raise MeshError("per-element tensors must have shape (M, 3, 3)")
            self.by_label = None
            step = max(1, len(table) // 64)
            for i in range(0, len(table), step):
                _check_spd(table[i], "element %d" % i)
            self.tensors = table
        self.tensors.setflags(write=False)

    def checksum(self):
        h = hashlib.sha256()
        h.update(bytes.fromhex(self.mesh.checksum()))
        h.update(self.tensors.tobytes())
        return h.hexdigest()


def isotropic_value(tensor, rtol=1e-12):
    """Return sigma if ``tensor`` equals sigma * I within rtol, else None."""
    t = np.asarray(tensor, dtype=float)
    s = t.trace() / 3.0
    if np.allclose(t, s * np.eye(3), rtol=0, atol=rtol * max(abs(s), 1e-300)):
        return float(s)
    return None
