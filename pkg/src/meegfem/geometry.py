"""Programmatic mesh builders and sensor layouts for validation studies.

These are desk-scale fixtures, not a mesh generator: structured boxes
(hex and Kuhn-split tet), onion-style layered sphere tet meshes built from
a geodesic icosahedron, and Fibonacci point sets for electrode and coil
layouts. The sphere builder keeps shared prism diagonals consistent by
choosing them through minimum global vertex indices, so the resulting
meshes are conforming.
"""

import numpy as np

from .errors import ConfigError
from .mesh import Mesh, TET, HEX

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))

# Corner bit pattern (x, y, z) -> local hex corner id, matching basis.HEX_CORNERS.
_HEX_BIT_ORDER = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
                  (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]

# The six tets of the Kuhn split share the main diagonal 000 -> 111; the
# split is translation invariant, so identical cells tile conformally.
_KUHN_PERMS = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]


def box_hex_mesh(divisions, size=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), label=1):
    """Structured axis-aligned hex mesh with ``divisions`` cells per axis."""
    nx, ny, nz = divisions
    xs = [np.linspace(o, o + s, d + 1) for o, s, d in zip(origin, size, (nx, ny, nz))]
    grid = np.stack(np.meshgrid(*xs, indexing="ij"), axis=-1)
    verts = grid.reshape(-1, 3)

    def vid(ix, iy, iz):
        return (ix * (ny + 1) + iy) * (nz + 1) + iz

    cells = []
    for ix in range(nx):
        for iy in range(ny):
            for iz in range(nz):
                cells.append([vid(ix + bx, iy + by, iz + bz)
                              for bx, by, bz in _HEX_BIT_ORDER])
    cells = np.array(cells, dtype=np.int64)
    labels = np.full(len(cells), label, dtype=np.int64)
    return Mesh(verts, cells, labels, HEX)


def box_tet_mesh(divisions, size=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), label=1):
    """Kuhn 6-tet split of the structured box (6 * nx * ny * nz tets)."""
    nx, ny, nz = divisions
    xs = [np.linspace(o, o + s, d + 1) for o, s, d in zip(origin, size, (nx, ny, nz))]
    grid = np.stack(np.meshgrid(*xs, indexing="ij"), axis=-1)
    verts = grid.reshape(-1, 3)

    def vid(ix, iy, iz):
        return (ix * (ny + 1) + iy) * (nz + 1) + iz

    tets = []
    for ix in range(nx):
        for iy in range(ny):
            for iz in range(nz):
                base = np.array([ix, iy, iz])
                for perm in _KUHN_PERMS:
                    path = [base.copy()]
                    for axis in perm:
                        nxt = path[-1].copy()
                        nxt[axis] += 1
                        path.append(nxt)
                    tets.append([vid(*p) for p in path])
    tets = np.array(tets, dtype=np.int64)
    tets = _fix_tet_orientation(verts, tets)
    labels = np.full(len(tets), label, dtype=np.int64)
    return Mesh(verts, tets, labels, TET)


def _fix_tet_orientation(verts, tets):
    v = verts[tets]
    det = np.linalg.det(np.transpose(v[:, 1:] - v[:, :1], (0, 2, 1)))
    flip = det < 0
    tets = tets.copy()
    tets[flip, 2], tets[flip, 3] = tets[flip, 3], tets[flip, 2].copy()
    return tets


def icosphere(frequency):
    """Geodesic sphere: unit vertices (V, 3) and triangles (F, 3).

    V = 10 * frequency^2 + 2, F = 20 * frequency^2. Vertex indexing is
    integer-exact (corners, then edge points, then face interiors), so no
    floating-point deduplication is involved.
    """
    if frequency < 1:
        raise ConfigError("icosphere frequency must be >= 1")
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    base = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    faces20 = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    nu = int(frequency)
    verts = [v for v in base]
    edge_points = {}

    def edge_ids(a, b):
        # Interior points of edge (a, b), ordered from a to b.
        key = (min(a, b), max(a, b))
        if key not in edge_points:
            ids = []
            for t in range(1, nu):
                p = base[key[0]] + (base[key[1]] - base[key[0]]) * (t / nu)
                ids.append(len(verts))
                verts.append(p)
            edge_points[key] = ids
        ids = edge_points[key]
        return ids if (a, b) == (min(a, b), max(a, b)) else ids[::-1]

    tris = []
    for (a, b, c) in faces20:
        ab, ac, bc = edge_ids(a, b), edge_ids(a, c), edge_ids(b, c)
        local = {}

        def lattice(i, j):
            # Barycentric lattice: corner a at (0,0), b at (nu,0), c at (0,nu).
            if (i, j) in local:
                return local[(i, j)]
            if i == 0 and j == 0:
                vid = a
            elif i == nu and j == 0:
                vid = b
            elif i == 0 and j == nu:
                vid = c
            elif j == 0:
                vid = ab[i - 1]
            elif i == 0:
                vid = ac[j - 1]
            elif i + j == nu:
                vid = bc[j - 1]
            else:
                vid = len(verts)
                p = (base[a] * (nu - i - j) + base[b] * i + base[c] * j) / nu
                verts.append(p)
            local[(i, j)] = vid
            return vid

        for i in range(nu):
            for j in range(nu - i):
                tris.append((lattice(i, j), lattice(i + 1, j), lattice(i, j + 1)))
                if i + j + 1 < nu:
                    tris.append((lattice(i + 1, j), lattice(i + 1, j + 1),
                                 lattice(i, j + 1)))

    verts = np.array(verts)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    return verts, np.array(tris, dtype=np.int64)


def _split_prism(p):
    """Split prism (bottom p[0:3], top p[3:6]) into 3 tets.

    Diagonals of the quad faces run through minimum global vertex ids, so
    the face shared by two neighboring prisms is split the same way on
    both sides.
    """
    rots = [(0, 1, 2, 3, 4, 5), (1, 2, 0, 4, 5, 3), (2, 0, 1, 5, 3, 4)]
    cands = [tuple(p[i] for i in r) for r in rots]
    cands += [(c[3], c[4], c[5], c[0], c[1], c[2]) for c in cands]
    q = min(cands, key=lambda c: c[0])
    if min(q[1], q[5]) < min(q[2], q[4]):
        return [(q[0], q[1], q[2], q[5]), (q[0], q[1], q[5], q[4]),
                (q[0], q[4], q[5], q[3])]
    return [(q[0], q[1], q[2], q[4]), (q[0], q[4], q[2], q[5]),
            (q[0], q[4], q[5], q[3])]


def layered_sphere_tet_mesh(shells, frequency=8, center=(0.0, 0.0, 0.0)):
    """Onion tet mesh of concentric spherical compartments.

    Parameters
    ----------
    shells : list of (outer_radius_mm, label, rings)
        Ordered inside out. ``rings`` is either a sublayer count (uniform
        radial spacing) or an explicit ascending list of ring radii ending
        at the shell's outer radius. The innermost compartment also
        provides the core (center vertex to its first ring).
    frequency : int
        Geodesic subdivision frequency (angular resolution).
    center : (3,) array

    Returns a conforming Mesh with 20 * frequency^2 * (1 + 3 * (rings - 1))
    tets, where rings = total ring count over all shells.
    """
    radii = []
    ring_labels = []
    prev = 0.0
    for outer, label, rings in shells:
        if outer <= prev:
            raise ConfigError("shell radii must be strictly increasing")
        if np.isscalar(rings):
            seg = np.linspace(prev, outer, int(rings) + 1)[1:]
        else:
            seg = np.asarray(rings, dtype=float)
            if (np.diff(seg) <= 0).any() or seg[0] <= prev or seg[-1] != outer:
                raise ConfigError(
                    "ring radii must ascend through the shell and end at "
                    "its outer radius")
        radii.extend(seg.tolist())
        ring_labels.extend([int(label)] * len(seg))
        prev = outer
    sphere_v, sphere_f = icosphere(frequency)
    nv = len(sphere_v)
    center = np.asarray(center, dtype=float)

    verts = np.empty((1 + nv * len(radii), 3))
    verts[0] = center
    for r_i, r in enumerate(radii):
        verts[1 + r_i * nv: 1 + (r_i + 1) * nv] = center + r * sphere_v

    def ring_id(r_i, sph_id):
        return 1 + r_i * nv + sph_id

    tets, labels = [], []
    for (a, b, c) in sphere_f:
        tets.append((0, ring_id(0, a), ring_id(0, b), ring_id(0, c)))
        labels.append(ring_labels[0])
    for r_i in range(len(radii) - 1):
        lab = ring_labels[r_i + 1]
        for (a, b, c) in sphere_f:
            prism = (ring_id(r_i, a), ring_id(r_i, b), ring_id(r_i, c),
                     ring_id(r_i + 1, a), ring_id(r_i + 1, b), ring_id(r_i + 1, c))
            for t in _split_prism(prism):
                tets.append(t)
                labels.append(lab)
    tets = _fix_tet_orientation(verts, np.array(tets, dtype=np.int64))
    return Mesh(verts, tets, np.array(labels, dtype=np.int64), TET)


def fibonacci_sphere_points(n, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Deterministic quasi-uniform points on a sphere (golden-angle spiral)."""
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    theta = GOLDEN_ANGLE * i
    pts = np.stack([rho * np.cos(theta), rho * np.sin(theta), z], axis=1)
    return np.asarray(center, dtype=float) + radius * pts


def tangent_basis(direction):
    """Two unit vectors orthogonal to ``direction`` and to each other."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    helper = np.array([1.0, 0.0, 0.0])
    if abs(d[0]) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    t1 = np.cross(d, helper)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(d, t1)
    return t1, t2
