"""Point localization: balanced k-d tree seeding plus face-neighbor hopping.

The tree stores one node per mesh element center, is median-split balanced
with the split axis cycling through x, y, z by depth, and breaks exact
distance ties toward the lower element index. A nearest-center query seeds
``edge_hop``, which walks the face-neighbor graph: for each face of the
current element it forms the face centroid c and outward unit normal n and
hops through the face with the largest positive excess (point - c) . n.
If every face satisfies (point - c) . n <= tol the element is found; if the
violating face has no neighbor the point is outside the domain. The walk
is bounded by 4 * n_elements, after which a non-convex abort is reported
and ``find_element`` falls back to exhaustive linear search.

Containment tolerance is 1e-10 times the element diameter. Barycentric
(or trilinear) containment is used only by the independent test oracle,
never by the production path.
"""

import math
from dataclasses import dataclass

import numpy as np

from .basis import hex_local_coords, tet_barycentric
from .errors import NumericalError
from .mesh import element_faces, TET

FOUND = "found"
OUTSIDE = "outside_domain"
ABORT = "nonconvex_abort"

CONTAIN_RTOL = 1e-10


@dataclass
class LocateResult:
    status: str
    element: int
    hops: int

    @property
    def found(self):
        return self.status == FOUND


class KdTree:
    """Median-split balanced k-d tree over a fixed point set.

    The layout is implicit: ``perm`` holds point indices, each node is the
    middle of its index range, children are the two half ranges, and the
    split axis is depth modulo 3.
    """

    def __init__(self, points):
        self.points = np.ascontiguousarray(points, dtype=float)
        n = len(self.points)
        if n == 0:
            raise NumericalError("cannot build a k-d tree over zero points")
        self.perm = np.arange(n, dtype=np.int64)
        self.depth = 0
        self._build(0, n, 0)

    def _build(self, lo, hi, depth):
        # Iterative with an explicit stack; meshes can exceed the default
        # recursion limit.
        stack = [(lo, hi, depth)]
        while stack:
            lo, hi, depth = stack.pop()
            if hi - lo <= 1:
                self.depth = max(self.depth, depth + (hi > lo))
                continue
            axis = depth % 3
            mid = (lo + hi) // 2
            seg = self.perm[lo:hi]
            order = np.argpartition(self.points[seg, axis], mid - lo)
            self.perm[lo:hi] = seg[order]
            stack.append((lo, mid, depth + 1))
            stack.append((mid + 1, hi, depth + 1))
            self.depth = max(self.depth, depth + 1)

    def nearest(self, query):
        """Index of a true nearest point; lower index wins exact ties."""
        q = np.asarray(query, dtype=float)
        pts = self.points
        perm = self.perm
        best_idx = -1
        best_d2 = math.inf
        stack = [(0, len(perm), 0)]
        while stack:
            lo, hi, depth = stack.pop()
            if hi <= lo:
                continue
            mid = (lo + hi) // 2
            idx = int(perm[mid])
            p = pts[idx]
            d2 = (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 + (p[2] - q[2]) ** 2
            if d2 < best_d2 or (d2 == best_d2 and idx < best_idx):
                best_d2 = d2
                best_idx = idx
            axis = depth % 3
            delta = q[axis] - p[axis]
            near = (lo, mid, depth + 1) if delta < 0 else (mid + 1, hi, depth + 1)
            far = (mid + 1, hi, depth + 1) if delta < 0 else (lo, mid, depth + 1)
            # The far side can still hold the winner (or a lower-index tie)
            # whenever the slab distance does not exceed the current best.
            if delta * delta <= best_d2:
                stack.append(far)
            stack.append(near)
        return best_idx, best_d2


def _face_geometry(mesh, elem):
    """Per-face centroids and outward unit normals of one element."""
    faces = element_faces(mesh.kind)
    verts = mesh.vertices[mesh.elements[elem]]
    fv = verts[faces]  # (nf, k, 3)
    centers = fv.mean(axis=1)
    if mesh.kind == TET:
        normals = np.cross(fv[:, 1] - fv[:, 0], fv[:, 2] - fv[:, 0])
    else:
        # Newell normals handle mildly warped quad faces.
        rolled = np.roll(fv, -1, axis=1)
        normals = np.einsum("fkx->fx", np.cross(fv, rolled))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    outward = np.einsum("fx,fx->f", centers - verts.mean(axis=0), normals)
    normals[outward < 0] *= -1.0
    return centers, normals


def edge_hop(mesh, start, point, max_hops=None):
    """Walk the face-neighbor graph from ``start`` toward ``point``."""
    point = np.asarray(point, dtype=float)
    if max_hops is None:
        max_hops = 4 * mesh.n_elements
    diam = mesh.element_diameters
    elem = int(start)
    hops = 0
    while True:
        centers, normals = _face_geometry(mesh, elem)
        tol = CONTAIN_RTOL * diam[elem]
        excess = np.einsum("fx,fx->f", point - centers, normals)
        worst = int(np.argmax(excess))
        if excess[worst] <= tol:
            return LocateResult(FOUND, elem, hops)
        nb = int(mesh.neighbors[elem, worst])
        if nb < 0:
            return LocateResult(OUTSIDE, -1, hops)
        if hops >= max_hops:
            return LocateResult(ABORT, elem, hops)
        elem = nb
        hops += 1


def _hyperplane_contains(mesh, elem, point):
    centers, normals = _face_geometry(mesh, elem)
    tol = CONTAIN_RTOL * mesh.element_diameters[elem]
    excess = np.einsum("fx,fx->f", point - centers, normals)
    return bool((excess <= tol).all()), excess, tol


class ElementLocator:
    """k-d tree over element centers, with a lazy vertex tree for sources."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.center_tree = KdTree(mesh.element_centers)
        self._vertex_tree = None

    def nearest_center(self, point):
        idx, _ = self.center_tree.nearest(point)
        return idx

    def nearest_vertex(self, point):
        if self._vertex_tree is None:
            self._vertex_tree = KdTree(self.mesh.vertices)
        idx, _ = self._vertex_tree.nearest(point)
        return idx

    def find(self, point):
        return find_element(self, point)


def find_element(locator, point):
    """Locate the element containing ``point``; kd seed, hop, fallback.

    On shared faces the element with the lower index wins, matching the
    linear-search oracle. A non-convex abort of the walk falls back to
    exhaustive linear search.
    """
    mesh = locator.mesh
    point = np.asarray(point, dtype=float)
    seed = locator.nearest_center(point)
    res = edge_hop(mesh, seed, point)
    if res.status == ABORT:
        elem = linear_search(mesh, point)
        if elem < 0:
            return LocateResult(OUTSIDE, -1, res.hops)
        return LocateResult(FOUND, elem, res.hops)
    if res.status != FOUND:
        return res
    # Tie-break: a point within tolerance of shared faces belongs to the
    # lowest-index element among those containing it.
    _, excess, tol = _hyperplane_contains(mesh, res.element, point)
    best = res.element
    for f in np.nonzero(np.abs(excess) <= tol)[0]:
        nb = int(mesh.neighbors[res.element, f])
        if 0 <= nb < best and _hyperplane_contains(mesh, nb, point)[0]:
            best = nb
    if best != res.element:
        return LocateResult(FOUND, best, res.hops)
    return res


def element_contains(mesh, elem, point):
    """Independent containment oracle via barycentric / trilinear coords."""
    verts = mesh.vertices[mesh.elements[elem]]
    slack = CONTAIN_RTOL
    if mesh.kind == TET:
        lam = tet_barycentric(verts, point)
        return bool((lam >= -slack).all() and (lam <= 1.0 + slack).all())
    try:
        xi = hex_local_coords(verts, point)
    except NumericalError:
        return False
    return bool((np.abs(xi) <= 1.0 + slack).all())


def _tet_bary_data(mesh):
    # Cached batched inverses for the vectorized barycentric oracle.
    data = getattr(mesh, "_bary_cache", None)
    if data is None:
        verts = mesh.element_vertices()
        cols = np.transpose(verts[:, 1:] - verts[:, :1], (0, 2, 1))
        data = (verts[:, 0], np.linalg.inv(cols))
        mesh._bary_cache = data
    return data


def linear_search(mesh, point):
    """Exhaustive containment scan; returns the lowest containing index."""
    point = np.asarray(point, dtype=float)
    if mesh.kind == TET:
        v0, inv = _tet_bary_data(mesh)
        lam = np.einsum("mxy,my->mx", inv, point - v0)
        lam0 = 1.0 - lam.sum(axis=1)
        ok = ((lam >= -CONTAIN_RTOL).all(axis=1) & (lam <= 1.0 + CONTAIN_RTOL).all(axis=1)
              & (lam0 >= -CONTAIN_RTOL) & (lam0 <= 1.0 + CONTAIN_RTOL))
        hits = np.nonzero(ok)[0]
        return int(hits[0]) if hits.size else -1
    for e in range(mesh.n_elements):
        if element_contains(mesh, e, point):
            return e
    return -1
