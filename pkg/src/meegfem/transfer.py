"""Electrode restriction, EEG transfer matrices, and their application.

The restriction R evaluates the discrete potential at electrode positions:
each electrode is projected onto the boundary faces around its nearest
boundary vertex, and the row holds the element basis values at the
projected point (at most 8 nonzeros, summing to one). The transfer matrix
T = R A^-1 is computed row-wise, solving A t_k = centered(r_k) per sensor;
rows are independent and are distributed over a thread pool.

Applying T to a sparse source vector touches only the stored nonzero
columns, which is what makes transfer-based lead fields cheap: the cost
per dipole does not grow with mesh size.

Transfer matrices persist as a small self-describing binary file (magic,
version, modality, shape, solver tolerance, mesh checksum, float64
little-endian row-major data). The header is fixed-size and the data
offset is 8-byte aligned, so consumers can map the matrix in place.
"""

import struct
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.sparse as sp

from .basis import shape_values
from .errors import ConfigError, NumericalError
from .femsolver import solve
from .locator import KdTree
from .mesh import element_faces
from .sources import u_inf

MAX_ELECTRODE_DISTANCE = 20.0  # mm

MAGIC = b"MEEGXFER"
FORMAT_VERSION = 1
_MODALITY_CODES = {"eeg": 1, "meg": 2}
_MODALITY_NAMES = {v: k for k, v in _MODALITY_CODES.items()}
_HEADER = struct.Struct("<8sIIQQd64s")  # 104 bytes, data 8-byte aligned


class ElectrodeArray:
    """Electrode positions with their boundary projection records."""

    def __init__(self, positions, elements, projected, local_rows):
        self.positions = np.asarray(positions, dtype=float)
        self.elements = np.asarray(elements, dtype=np.int64)
        self.projected = np.asarray(projected, dtype=float)
        self._local_rows = local_rows

    @property
    def n(self):
        return len(self.positions)


class TransferMatrix:
    """Dense N x n sensor-to-DOF map with provenance metadata."""

    def __init__(self, matrix, modality, mesh_checksum, tolerance):
        if modality not in _MODALITY_CODES:
            raise ConfigError("unknown transfer modality %r" % modality)
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        self.modality = modality
        self.mesh_checksum = mesh_checksum
        self.tolerance = float(tolerance)

    @property
    def n_sensors(self):
        return self.matrix.shape[0]

    @property
    def n_dofs(self):
        return self.matrix.shape[1]

    def save(self, path):
        save_transfer(self, path)


def _closest_point_on_triangle(p, a, b, c):
    """Closest point to p on triangle abc (Ericson's regions method)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab @ ap
    d2 = ac @ ap
    if d1 <= 0 and d2 <= 0:
        return a
    bp = p - b
    d3 = ab @ bp
    d4 = ac @ bp
    if d3 >= 0 and d4 <= d3:
        return b
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        return a + ab * (d1 / (d1 - d3))
    cp = p - c
    d5 = ab @ cp
    d6 = ac @ cp
    if d6 >= 0 and d5 <= d6:
        return c
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        return a + ac * (d2 / (d2 - d6))
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)))
    denom = 1.0 / (va + vb + vc)
    return a + ab * (vb * denom) + ac * (vc * denom)


def _closest_point_on_face(p, corners):
    """Closest point on a triangular or (split) quadrilateral face."""
    if len(corners) == 3:
        return _closest_point_on_triangle(p, *corners)
    c1 = _closest_point_on_triangle(p, corners[0], corners[1], corners[2])
    c2 = _closest_point_on_triangle(p, corners[0], corners[2], corners[3])
    d1 = np.sum((p - c1) ** 2)
    d2 = np.sum((p - c2) ** 2)
    return c1 if d1 <= d2 else c2


def build_restriction(vc, locator, electrodes,
                      max_distance=MAX_ELECTRODE_DISTANCE):
    """Project electrodes onto the boundary and build the sparse R.

    Returns (ElectrodeArray, csr_matrix R of shape (N, n)). Rows hold the
    basis values at each projected electrode; they sum to one (partition
    of unity) and are NOT centered here, the montage mean is subtracted
    from evaluated potentials instead.
    """
    mesh = vc.mesh
    electrodes = np.atleast_2d(np.asarray(electrodes, dtype=float))
    if electrodes.ndim != 2 or electrodes.shape[1] != 3:
        raise ConfigError("electrode positions must have shape (N, 3)")
    faces = element_faces(mesh.kind)
    bverts = mesh.boundary_vertex_indices()
    tree = KdTree(mesh.vertices[bverts])

    # vertex id -> list of (element, face corner ids) for boundary faces
    adjacency = {}
    for e, f in mesh.boundary_faces:
        fv = mesh.elements[e][faces[f]]
        for v in fv:
            adjacency.setdefault(int(v), []).append((int(e), fv))

    elems = np.empty(len(electrodes), dtype=np.int64)
    projected = np.empty_like(electrodes)
    rows, cols, vals = [], [], []
    local_rows = []
    offenders = []
    for k, p in enumerate(electrodes):
        v_near = int(bverts[tree.nearest(p)[0]])
        best = None
        for e, fv in adjacency[v_near]:
            q = _closest_point_on_face(p, mesh.vertices[fv])
            d2 = float(np.sum((p - q) ** 2))
            if best is None or d2 < best[0]:
                best = (d2, e, q)
        d2, e, q = best
        if np.sqrt(d2) > max_distance:
            offenders.append((k, np.sqrt(d2)))
            continue
        phi = shape_values(mesh.kind, mesh.element_vertices(e), q)
        elems[k] = e
        projected[k] = q
        conn = mesh.elements[e]
        rows.extend([k] * len(conn))
        cols.extend(conn.tolist())
        vals.extend(phi.tolist())
        local_rows.append(phi)
    if offenders:
        listing = ", ".join("#%d at %.1f mm" % kd for kd in offenders)
        raise ConfigError(
            "electrodes farther than %g mm from the mesh surface: %s"
            % (max_distance, listing))
    r = sp.csr_matrix((vals, (rows, cols)),
                      shape=(len(electrodes), mesh.n_vertices))
    return ElectrodeArray(electrodes, elems, projected, local_rows), r


def compute_eeg_transfer(system, restriction, tol=1e-8, workers=1,
                         preconditioner="jacobi"):
    """Row-wise transfer computation T = R A^-1.

    Each sensor row solves A t_k = r_k - mean(r_k); rows run on a thread
    pool of ``workers``. Results do not depend on the worker count. A
    non-converged row aborts the whole computation, naming the sensor.
    """
    r = sp.csr_matrix(restriction)
    n = system.n
    if r.shape[1] != n:
        raise ConfigError("restriction has %d columns, system has %d DOFs"
                          % (r.shape[1], n))

    def row_solve(k):
        b = np.asarray(r.getrow(k).todense()).ravel()
        b -= b.mean()
        sol = solve(system, b, tol=tol, preconditioner=preconditioner)
        if not sol.converged:
            raise NumericalError(
                "transfer row for sensor %d did not converge "
                "(residual %.3e after %d iterations)"
                % (k, sol.residual, sol.iterations))
        return k, sol.coefficients

    matrix = np.empty((r.shape[0], n))
    if workers <= 1:
        results = map(row_solve, range(r.shape[0]))
    else:
        pool = ThreadPoolExecutor(max_workers=int(workers))
        try:
            results = list(pool.map(row_solve, range(r.shape[0])))
        finally:
            pool.shutdown()
    for k, t_k in results:
        matrix[k] = t_k
    return TransferMatrix(matrix, "eeg", system.mesh_checksum, tol)


def apply_transfer(transfer, output, electrodes=None):
    """Map a source-model output to sensor potentials through T.

    Sparse outputs use only their stored nonzero columns. EEG results are
    mean-centered over the montage; a subtraction post-process then adds
    the singularity potential at the electrode positions (so subtraction
    results are not zero-mean).
    """
    if transfer.modality != "eeg":
        raise ConfigError(
            "cannot apply a %s transfer matrix to an EEG source"
            % transfer.modality)
    if output.n != transfer.n_dofs:
        raise ConfigError("source vector length %d does not match transfer "
                          "with %d DOFs" % (output.n, transfer.n_dofs))
    if output.is_sparse:
        if len(output.indices) == 0:
            pot = np.zeros(transfer.n_sensors)
        else:
            pot = transfer.matrix[:, output.indices] @ output.values
    else:
        pot = transfer.matrix @ output.dense()
    pot = pot - pot.mean()
    if output.post_process_kind is not None:
        if electrodes is None:
            raise ConfigError(
                "this source model post-processes sensor values; electrode "
                "positions are required")
        # The FEM part was sampled at the boundary projections, so the
        # singularity must be evaluated there too, not at the nominal
        # (possibly floating) electrode positions.
        positions = electrodes.projected if isinstance(
            electrodes, ElectrodeArray) else np.atleast_2d(electrodes)
        pot = pot + u_inf(positions, output.dipole, output.sigma_inf)
    return pot


def save_transfer(transfer, path):
    """Write the deterministic binary container (no timestamps)."""
    checksum = transfer.mesh_checksum.encode("ascii")
    if len(checksum) != 64:
        raise ConfigError("mesh checksum must be 64 hex characters")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION,
                          _MODALITY_CODES[transfer.modality],
                          transfer.n_sensors, transfer.n_dofs,
                          transfer.tolerance, checksum)
    data = np.ascontiguousarray(transfer.matrix, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def read_transfer_header(path):
    """Return the header dict without loading the matrix data."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise ConfigError("%s: truncated transfer file" % path)
    magic, version, modality, rows, cols, tol, checksum = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise ConfigError("%s: not a transfer matrix file" % path)
    if version != FORMAT_VERSION:
        raise ConfigError("%s: unsupported format version %d"
                          % (path, version))
    if modality not in _MODALITY_NAMES:
        raise ConfigError("%s: unknown modality code %d" % (path, modality))
    return {
        "modality": _MODALITY_NAMES[modality],
        "sensors": int(rows),
        "dofs": int(cols),
        "tolerance": float(tol),
        "mesh_checksum": checksum.decode("ascii"),
    }


def load_transfer(path, mesh_checksum=None):
    """Load a transfer matrix; refuse a mesh-checksum mismatch when given."""
    info = read_transfer_header(path)
    if mesh_checksum is not None and info["mesh_checksum"] != mesh_checksum:
        raise ConfigError(
            "%s was computed for a different mesh (checksum %s... != %s...)"
            % (path, info["mesh_checksum"][:12], mesh_checksum[:12]))
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        data = np.fromfile(fh, dtype="<f8",
                           count=info["sensors"] * info["dofs"])
    if data.size != info["sensors"] * info["dofs"]:
        raise ConfigError("%s: transfer data truncated" % path)
    matrix = data.reshape(info["sensors"], info["dofs"])
    return TransferMatrix(matrix, info["modality"], info["mesh_checksum"],
                          info["tolerance"])
