"""Triangular and quadrilateral meshes, file I/O and element geometry.

The geometric quantities follow the usual P1 conventions: for a triangle with
vertices ``x1, x2, x3`` the edge matrix is ``E = [x2 - x1, x3 - x1]``, the
rows of ``E^{-1}`` are the gradients ``q2, q3`` of the barycentric basis
functions and ``q1 = -(q2 + q3)``.  The height of vertex ``p`` (distance to the
opposite side) is ``1/|q_p|`` and ``q_p * h_p`` is the unit inward normal of the
opposite side.  The angle ``beta_pq`` between the faces opposite ``p`` and
``q`` is the interior angle at the third vertex.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ParseError, SingularGeometryError, ValidationError

__all__ = [
    "Triangulation",
    "QuadMesh",
    "ElementGeometry",
    "ConnectivityResult",
    "MeshStatistics",
    "DEGENERACY_RATIO",
    "load_mesh",
    "write_mesh",
    "write_node_ele",
    "write_msh2",
    "element_geometry",
    "geometry_arrays",
    "metric_dihedral_angles",
    "metric_angle_arrays",
    "is_interiorly_connected",
    "mesh_statistics",
    "structured_rectangle",
    "structured_rectangle_with_hole",
    "structured_quads",
    "equilateral_patch",
    "perturb_interior",
    "merge_meshes",
]

# element is degenerate when |det E| <= DEGENERACY_RATIO * (max edge)^2
DEGENERACY_RATIO = 1e-14

MARKER_BOTTOM, MARKER_RIGHT, MARKER_TOP, MARKER_LEFT, MARKER_HOLE = 1, 2, 3, 4, 5

_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _edge_lengths_sq(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    p = vertices[elements]
    d = p[:, [1, 2, 0]] - p
    return np.einsum("nkj,nkj->nk", d, d)


def _signed_double_area(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    p = vertices[elements]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]


def _derive_edge_markers(edges: Iterable[tuple[int, int]], vmark: np.ndarray) -> dict:
    out = {}
    for a, b in edges:
        ma, mb = int(vmark[a]), int(vmark[b])
        if ma == mb:
            m = ma
        else:
            nz = [m for m in (ma, mb) if m != 0]
            m = min(nz) if nz else 0
        out[(a, b)] = m
    return out


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Immutable 2D simplicial mesh.

    Elements are reoriented counter-clockwise on construction.  Boundary
    markers live on boundary edges; a vertex inherits the largest marker of
    its incident boundary edges (or its own marker if it was given one).

    Attributes:
        vertices: ``(Nv, 2)`` coordinates.
        elements: ``(Nele, 3)`` vertex indices, counter-clockwise.
        vertex_markers: ``(Nv,)`` integer markers, 0 for unmarked.
        boundary_edge_markers: marker of every boundary edge keyed by the
            sorted vertex pair.
    """

    vertices: np.ndarray
    elements: np.ndarray
    vertex_markers: np.ndarray = None  # type: ignore[assignment]
    boundary_edge_markers: dict = None  # type: ignore[assignment]

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        el = np.array(self.elements, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValidationError("vertices must be an (Nv, 2) array")
        if el.ndim != 2 or el.shape[1] != 3:
            raise ValidationError("elements must be an (Nele, 3) array")
        nv = v.shape[0]
        if nv < 3:
            raise ValidationError(f"a triangulation needs at least 3 vertices, got {nv}")
        if el.shape[0] < 1:
            raise ValidationError("a triangulation needs at least one element")
        if not np.all(np.isfinite(v)):
            raise ValidationError("vertex coordinates must be finite")
        bad = np.nonzero((el < 0) | (el >= nv))
        if bad[0].size:
            e = int(bad[0][0])
            raise ValidationError(
                f"element {e} references vertex index {int(el[e, bad[1][0]])} "
                f"outside [0, {nv - 1}]")
        for e in range(el.shape[0]):
            if len(set(el[e].tolist())) != 3:
                raise SingularGeometryError(f"element {e} repeats a vertex", element=e)
        used = np.zeros(nv, dtype=bool)
        used[el.ravel()] = True
        if not used.all():
            raise ValidationError(
                f"vertex {int(np.argmin(used))} is not referenced by any element")

        det = _signed_double_area(v, el)
        scale = _edge_lengths_sq(v, el).max(axis=1)
        degenerate = np.abs(det) <= DEGENERACY_RATIO * scale
        if degenerate.any():
            e = int(np.argmax(degenerate))
            raise SingularGeometryError(
                f"element {e} is degenerate (|det E| = {abs(det[e]):.3e})", element=e)
        flip = det < 0
        if flip.any():
            el[flip] = el[flip][:, [0, 2, 1]]

        all_edges = np.sort(el[:, _LOCAL_EDGES].reshape(-1, 2), axis=1)
        uniq, inverse, counts = np.unique(all_edges, axis=0, return_inverse=True,
                                          return_counts=True)
        inverse = inverse.ravel()
        if (counts > 2).any():
            k = int(np.argmax(counts > 2))
            raise ValidationError(
                f"non-manifold edge ({int(uniq[k, 0])}, {int(uniq[k, 1])}) "
                f"shared by {int(counts[k])} elements")
        owners = np.repeat(np.arange(el.shape[0]), 3)
        order = np.argsort(inverse, kind="stable")
        adjacency: dict[tuple[int, int], tuple[int, ...]] = {}
        split = np.split(owners[order], np.cumsum(counts)[:-1])
        for k, els in enumerate(split):
            adjacency[(int(uniq[k, 0]), int(uniq[k, 1]))] = tuple(int(x) for x in els)

        bedges = [key for key, els in adjacency.items() if len(els) == 1]
        vmark = np.zeros(nv, dtype=np.int64)
        if self.vertex_markers is not None:
            given = np.asarray(self.vertex_markers, dtype=np.int64)
            if given.shape != (nv,):
                raise ValidationError("vertex_markers must have length Nv")
            vmark = given.copy()
        emark: dict[tuple[int, int], int] = {}
        if self.boundary_edge_markers:
            for (a, b), m in self.boundary_edge_markers.items():
                key = (min(int(a), int(b)), max(int(a), int(b)))
                if key in adjacency and len(adjacency[key]) == 1:
                    emark[key] = int(m)
        missing = [key for key in bedges if key not in emark]
        if missing:
            emark.update(_derive_edge_markers(missing, vmark))
        for (a, b), m in emark.items():
            vmark[a] = max(vmark[a], m)
            vmark[b] = max(vmark[b], m)

        bverts = set(int(x) for x in np.unique(np.array(bedges).ravel())) if bedges else set()
        bverts.update(int(x) for x in np.nonzero(vmark)[0])
        object.__setattr__(self, "vertices", _readonly(v))
        object.__setattr__(self, "elements", _readonly(el))
        object.__setattr__(self, "vertex_markers", _readonly(vmark))
        object.__setattr__(self, "boundary_edge_markers", dict(sorted(emark.items())))
        object.__setattr__(self, "_adjacency", adjacency)
        object.__setattr__(self, "_boundary_vertices", frozenset(bverts))

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_elements(self) -> int:
        return int(self.elements.shape[0])

    @property
    def edge_adjacency(self) -> dict[tuple[int, int], tuple[int, ...]]:
        """Map from every edge ``(p, q)``, ``p < q``, to its 1 or 2 elements."""
        return self._adjacency  # type: ignore[attr-defined]

    @property
    def boundary_vertices(self) -> frozenset[int]:
        return self._boundary_vertices  # type: ignore[attr-defined]

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[list(self.boundary_vertices)] = False
        return _readonly(np.nonzero(mask)[0])

    @cached_property
    def interior_edges(self) -> list[tuple[int, int]]:
        return [k for k, els in self.edge_adjacency.items() if len(els) == 2]

    @cached_property
    def boundary_edges(self) -> list[tuple[int, int]]:
        return [k for k, els in self.edge_adjacency.items() if len(els) == 1]

    @cached_property
    def geometry(self) -> dict[str, np.ndarray]:
        """Vectorized element geometry, see :func:`geometry_arrays`."""
        return geometry_arrays(self.vertices, self.elements)

    @property
    def areas(self) -> np.ndarray:
        return self.geometry["area"]

    @property
    def h(self) -> float:
        """Largest element height over the mesh."""
        return float(self.geometry["heights"].max())

    def element_points(self, e: int) -> np.ndarray:
        return self.vertices[self.elements[e]]


def geometry_arrays(vertices: np.ndarray, elements: np.ndarray) -> dict[str, np.ndarray]:
    """Edge matrices, q-vectors, heights, normals, angles and areas of all elements.

    Returns a dict with ``E (N,2,2)``, ``det (N,)``, ``area (N,)``, ``q (N,3,2)``,
    ``heights (N,3)``, ``normals (N,3,2)`` and ``angles (N,3)`` where
    ``angles[:, k]`` is the interior angle at local vertex ``k``.
    """
    p = np.asarray(vertices, dtype=float)[np.asarray(elements)]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    E = np.stack([e1, e2], axis=2)
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    q2 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
    q3 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
    q1 = -(q2 + q3)
    q = np.stack([q1, q2, q3], axis=1)
    qn = np.sqrt(np.einsum("nkj,nkj->nk", q, q))
    heights = 1.0 / qn
    normals = q * heights[:, :, None]
    angles = np.empty((p.shape[0], 3))
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        dot = a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]
        angles[:, k] = np.arctan2(np.abs(cross), dot)
    return {"E": E, "det": det, "area": 0.5 * np.abs(det), "q": q,
            "heights": heights, "normals": normals, "angles": angles}


@dataclass(frozen=True, eq=False)
class ElementGeometry:
    """Geometric data of one triangle.

    Attributes:
        edge_matrix: ``E = [x2 - x1, x3 - x1]`` as columns.
        q: ``(3, 2)`` basis-function gradients, rows ``q1, q2, q3``.
        heights: distance from each vertex to the opposite side.
        normals: unit inward normals of the sides opposite each vertex.
        angles: interior angle at each vertex; ``angles[r]`` is ``beta_pq``
            for ``{p, q, r} = {0, 1, 2}``.
        area: element area.
    """

    edge_matrix: np.ndarray
    q: np.ndarray
    heights: np.ndarray
    normals: np.ndarray
    angles: np.ndarray
    area: float

    def beta(self, p: int, q: int) -> float:
        """Euclidean angle between the faces opposite ``p`` and ``q`` (0-based)."""
        if p == q or not {p, q} <= {0, 1, 2}:
            raise ValueError("p and q must be distinct local vertex indices")
        return float(self.angles[3 - p - q])


def element_geometry(tri: Triangulation, e: int) -> ElementGeometry:
    """Geometry of element ``e`` of ``tri``."""
    if not 0 <= e < tri.n_elements:
        raise IndexError(f"element index {e} out of range")
    g = tri.geometry
    return ElementGeometry(edge_matrix=g["E"][e].copy(), q=g["q"][e].copy(),
                           heights=g["heights"][e].copy(), normals=g["normals"][e].copy(),
                           angles=g["angles"][e].copy(), area=float(g["area"][e]))


def check_spd(D: np.ndarray, what: str = "matrix", rtol: float = 1e-12) -> np.ndarray:
    """Validate a 2x2 symmetric positive-definite matrix and return it as an array."""
    from .errors import DomainError

    D = np.asarray(D, dtype=float)
    if D.shape != (2, 2) or not np.all(np.isfinite(D)):
        raise DomainError(f"{what} must be a finite 2x2 matrix")
    scale = max(np.abs(D).max(), np.finfo(float).tiny)
    if abs(D[0, 1] - D[1, 0]) > rtol * scale:
        raise DomainError(f"{what} is not symmetric: {D.tolist()}")
    eig = np.linalg.eigvalsh(0.5 * (D + D.T))
    if eig[0] <= 0:
        raise DomainError(f"{what} is not positive definite, eigenvalues {eig.tolist()}")
    return 0.5 * (D + D.T)


def metric_angle_arrays(E: np.ndarray, Dbar: np.ndarray) -> np.ndarray:
    """Interior angles measured in the inner product ``D^{-1}`` for many elements.

    ``E`` is ``(N,2,2)`` and ``Dbar`` is ``(N,2,2)`` or ``(2,2)``.  Column
    ``k`` of the result is the angle at local vertex ``k``.
    """
    E = np.asarray(E, dtype=float)
    Dbar = np.broadcast_to(np.asarray(Dbar, dtype=float), E.shape)
    det = Dbar[:, 0, 0] * Dbar[:, 1, 1] - Dbar[:, 0, 1] * Dbar[:, 1, 0]
    inv = np.empty_like(Dbar)
    inv[:, 0, 0] = Dbar[:, 1, 1] / det
    inv[:, 1, 1] = Dbar[:, 0, 0] / det
    inv[:, 0, 1] = inv[:, 1, 0] = -0.5 * (Dbar[:, 0, 1] + Dbar[:, 1, 0]) / det
    e1 = E[:, :, 0]
    e2 = E[:, :, 1]
    pts = [np.zeros_like(e1), e1, e2]
    out = np.empty((E.shape[0], 3))
    sq = np.sqrt(det)
    for k in range(3):
        a = pts[(k + 1) % 3] - pts[k]
        b = pts[(k + 2) % 3] - pts[k]
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        dot = np.einsum("ni,nij,nj->n", a, inv, b)
        out[:, k] = np.arctan2(np.abs(cross) / sq, dot)
    return out


def metric_dihedral_angles(geom: ElementGeometry, Dbar: np.ndarray) -> np.ndarray:
    """Angles of one element measured in the metric ``Dbar^{-1}``.

    Entry ``k`` is the angle at local vertex ``k``, i.e. ``beta_pq`` for the
    pair of faces opposite the other two vertices.
    """
    D = check_spd(Dbar, "Dbar")
    return metric_angle_arrays(geom.edge_matrix[None], D[None])[0]


@dataclass(frozen=True)
class ConnectivityResult:
    connected: bool
    components: list[list[int]]

    def __bool__(self) -> bool:
        return self.connected


def is_interiorly_connected(tri: Triangulation) -> ConnectivityResult:
    """Whether interior vertices are connected through edges joining interior vertices.

    A mesh with zero or one interior vertex is connected.  Components are
    returned as sorted lists of global vertex indices.
    """
    interior = tri.interior_vertices
    n = interior.size
    if n <= 1:
        return ConnectivityResult(True, [interior.tolist()] if n else [])
    local = -np.ones(tri.n_vertices, dtype=np.int64)
    local[interior] = np.arange(n)
    rows, cols = [], []
    for a, b in tri.edge_adjacency:
        if local[a] >= 0 and local[b] >= 0:
            rows.append(local[a])
            cols.append(local[b])
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, labels = connected_components(graph, directed=False)
    comps = [sorted(interior[labels == k].tolist()) for k in range(ncomp)]
    comps.sort(key=lambda c: c[0])
    return ConnectivityResult(ncomp == 1, comps)


@dataclass(frozen=True)
class MeshStatistics:
    h: float
    min_angle: float
    max_angle: float
    n_vertices: int
    n_elements: int
    n_interior_vertices: int


def mesh_statistics(tri: Triangulation) -> MeshStatistics:
    g = tri.geometry
    return MeshStatistics(h=tri.h, min_angle=float(g["angles"].min()),
                          max_angle=float(g["angles"].max()), n_vertices=tri.n_vertices,
                          n_elements=tri.n_elements,
                          n_interior_vertices=int(tri.interior_vertices.size))


# ---------------------------------------------------------------------------
# Quadrilateral meshes


@dataclass(frozen=True, eq=False)
class QuadMesh:
    """Immutable mesh of convex quadrilaterals ordered counter-clockwise."""

    vertices: np.ndarray
    elements: np.ndarray
    vertex_markers: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        el = np.array(self.elements, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2 or el.ndim != 2 or el.shape[1] != 4:
            raise ValidationError("QuadMesh needs (Nv,2) vertices and (Nele,4) elements")
        if ((el < 0) | (el >= v.shape[0])).any():
            raise ValidationError("quad element references a vertex out of range")
        p = v[el]
        cross = np.empty((el.shape[0], 4))
        for k in range(4):
            a = p[:, (k + 1) % 4] - p[:, k]
            b = p[:, (k + 2) % 4] - p[:, (k + 1) % 4]
            cross[:, k] = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        if (cross <= 0).any():
            e = int(np.argmax((cross <= 0).any(axis=1)))
            raise ValidationError(f"quad element {e} is not convex and counter-clockwise")
        edges = np.sort(el[:, [[0, 1], [1, 2], [2, 3], [3, 0]]].reshape(-1, 2), axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        if (counts > 2).any():
            raise ValidationError("non-manifold quad edge")
        bverts = frozenset(int(x) for x in uniq[counts == 1].ravel())
        vm = np.zeros(v.shape[0], dtype=np.int64) if self.vertex_markers is None \
            else np.asarray(self.vertex_markers, dtype=np.int64).copy()
        object.__setattr__(self, "vertices", _readonly(v))
        object.__setattr__(self, "elements", _readonly(el))
        object.__setattr__(self, "vertex_markers", _readonly(vm))
        object.__setattr__(self, "_boundary_vertices", bverts)

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_elements(self) -> int:
        return int(self.elements.shape[0])

    @property
    def boundary_vertices(self) -> frozenset[int]:
        return self._boundary_vertices  # type: ignore[attr-defined]


# ---------------------------------------------------------------------------
# Generators


def _box_markers(vertices: np.ndarray, edges: Iterable[tuple[int, int]],
                 box: tuple[float, float, float, float]) -> dict:
    x0, x1, y0, y1 = box
    tol = 1e-12 * max(x1 - x0, y1 - y0)
    out = {}
    for a, b in edges:
        pa, pb = vertices[a], vertices[b]
        if abs(pa[1] - y0) <= tol and abs(pb[1] - y0) <= tol:
            m = MARKER_BOTTOM
        elif abs(pa[0] - x1) <= tol and abs(pb[0] - x1) <= tol:
            m = MARKER_RIGHT
        elif abs(pa[1] - y1) <= tol and abs(pb[1] - y1) <= tol:
            m = MARKER_TOP
        elif abs(pa[0] - x0) <= tol and abs(pb[0] - x0) <= tol:
            m = MARKER_LEFT
        else:
            m = MARKER_HOLE
        out[(a, b)] = m
    return out


def _grid_triangles(nx: int, ny: int, keep=None) -> list[tuple[int, int, int]]:
    tris = []
    for j in range(ny):
        for i in range(nx):
            if keep is not None and not keep(i, j):
                continue
            v00 = j * (nx + 1) + i
            v10, v01, v11 = v00 + 1, v00 + nx + 1, v00 + nx + 2
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return tris


def _compact(vertices: np.ndarray, tris) -> tuple[np.ndarray, np.ndarray]:
    tris = np.asarray(tris, dtype=np.int64)
    used = np.unique(tris.ravel())
    remap = -np.ones(vertices.shape[0], dtype=np.int64)
    remap[used] = np.arange(used.size)
    return vertices[used], remap[tris]


def _with_box_markers(vertices, tris, box) -> Triangulation:
    bare = Triangulation(vertices, tris)
    return Triangulation(bare.vertices, bare.elements,
                         boundary_edge_markers=_box_markers(bare.vertices,
                                                            bare.boundary_edges, box))


def structured_rectangle(nx: int, ny: int, x0: float = 0.0, x1: float = 1.0,
                         y0: float = 0.0, y1: float = 1.0) -> Triangulation:
    """Structured right-triangle mesh of a rectangle.

    Each of the ``nx * ny`` cells is split along its lower-left to upper-right
    diagonal.  Boundary markers: bottom 1, right 2, top 3, left 4.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be positive")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    return _with_box_markers(verts, _grid_triangles(nx, ny), (x0, x1, y0, y1))


def structured_rectangle_with_hole(nx: int, ny: int, hole: tuple[int, int, int, int],
                                   x0: float = 0.0, x1: float = 1.0,
                                   y0: float = 0.0, y1: float = 1.0) -> Triangulation:
    """Structured mesh with the cells ``i0 <= i < i1, j0 <= j < j1`` removed.

    The sides of the hole get marker 5; the outer sides are marked as in
    :func:`structured_rectangle`.
    """
    i0, i1, j0, j1 = hole
    if not (0 < i0 < i1 < nx and 0 < j0 < j1 < ny):
        raise ValueError("hole must lie strictly inside the grid")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    tris = _grid_triangles(nx, ny, keep=lambda i, j: not (i0 <= i < i1 and j0 <= j < j1))
    verts, tris = _compact(verts, tris)
    return _with_box_markers(verts, tris, (x0, x1, y0, y1))


def structured_quads(nx: int, ny: int, x0: float = 0.0, x1: float = 1.0,
                     y0: float = 0.0, y1: float = 1.0) -> QuadMesh:
    """Structured mesh of axis-aligned rectangles, vertices ordered counter-clockwise."""
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    quads = []
    for j in range(ny):
        for i in range(nx):
            v00 = j * (nx + 1) + i
            quads.append((v00, v00 + 1, v00 + nx + 2, v00 + nx + 1))
    return QuadMesh(verts, np.array(quads))


def equilateral_patch(n: int, m: int | None = None, side: float = 1.0) -> Triangulation:
    """Parallelogram of ``2 n m`` equilateral triangles with edge length ``side / n``."""
    m = n if m is None else m
    s = side / n
    verts = [((i + 0.5 * j) * s, j * s * math.sqrt(3) / 2) for j in range(m + 1)
             for i in range(n + 1)]
    tris = []
    for j in range(m):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
            tris.append((v00, v10, v01))
            tris.append((v10, v11, v01))
    bare = Triangulation(np.array(verts), tris)
    return Triangulation(bare.vertices, bare.elements,
                         boundary_edge_markers={k: 1 for k in bare.boundary_edges})


def perturb_interior(tri: Triangulation, amplitude: float, seed: int = 0) -> Triangulation:
    """Move every interior vertex by a uniform random offset in ``[-amplitude, amplitude]^2``."""
    rng = np.random.default_rng(seed)
    v = tri.vertices.copy()
    idx = tri.interior_vertices
    v[idx] += rng.uniform(-amplitude, amplitude, size=(idx.size, 2))
    P = v[tri.elements]
    signed = ((P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1])
              - (P[:, 1, 1] - P[:, 0, 1]) * (P[:, 2, 0] - P[:, 0, 0]))
    if (signed <= 0).any():
        raise ValidationError(f"perturbation amplitude {amplitude} folds "
                              f"{int((signed <= 0).sum())} element(s)")
    return Triangulation(v, tri.elements, boundary_edge_markers=tri.boundary_edge_markers)


def merge_meshes(a: Triangulation, b: Triangulation, tol: float = 1e-12) -> Triangulation:
    """Union of two triangulations, identifying vertices closer than ``tol``."""
    verts = [tuple(p) for p in a.vertices]
    remap = []
    for p in b.vertices:
        d = np.linalg.norm(a.vertices - p, axis=1)
        k = int(np.argmin(d))
        if d[k] <= tol:
            remap.append(k)
        else:
            remap.append(len(verts))
            verts.append(tuple(p))
    tris = np.vstack([a.elements, np.asarray(remap)[b.elements]])
    return Triangulation(np.array(verts), tris)


# ---------------------------------------------------------------------------
# File I/O


def load_mesh(path: str | os.PathLike, format: str | None = None) -> Triangulation:
    """Read a triangulation.

    Parameters
    ----------
    path : path-like
        ``.msh`` file, or a ``.node`` / ``.ele`` file (or their common stem).
    format : {"msh2", "node_ele"}, optional
        Inferred from the extension when omitted.
    """
    path = os.fspath(path)
    if format is None:
        format = "msh2" if path.endswith(".msh") else "node_ele"
    if format == "msh2":
        return _read_msh2(path)
    if format == "node_ele":
        return _read_node_ele(path)
    raise ValueError(f"unknown mesh format {format!r}")


def _content_lines(path: str) -> list[tuple[int, str]]:
    try:
        with open(path) as fh:
            raw = fh.read().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc}", path) from exc
    out = []
    for i, line in enumerate(raw, start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            out.append((i, line))
    return out


def _numbers(tokens: list[str], conv, path: str, line: int) -> list:
    try:
        return [conv(t) for t in tokens]
    except ValueError:
        raise ParseError(f"expected numbers, got {' '.join(tokens)!r}", path, line) from None


def _read_node_ele(path: str) -> Triangulation:
    stem = path
    for ext in (".node", ".ele"):
        if stem.endswith(ext):
            stem = stem[: -len(ext)]
    npath, epath = stem + ".node", stem + ".ele"
    nlines = _content_lines(npath)
    if not nlines:
        raise ParseError("empty .node file", npath)
    ln, head = nlines[0]
    hdr = _numbers(head.split(), int, npath, ln)
    if len(hdr) < 2:
        raise ParseError("header must be 'Nv dim [nattr] [nmarkers]'", npath, ln)
    nv, dim = hdr[0], hdr[1]
    nattr = hdr[2] if len(hdr) > 2 else 0
    nbm = hdr[3] if len(hdr) > 3 else 0
    if dim != 2:
        raise ParseError(f"only 2D meshes are supported, got dimension {dim}", npath, ln)
    if len(nlines) - 1 < nv:
        raise ParseError(f"expected {nv} vertices, found {len(nlines) - 1}", npath,
                         nlines[-1][0])
    ids, coords, marks = [], [], []
    for ln, text in nlines[1:nv + 1]:
        tok = text.split()
        if len(tok) < 3 + nattr + nbm:
            raise ParseError("vertex line has too few fields", npath, ln)
        ids.append(_numbers(tok[:1], int, npath, ln)[0])
        coords.append(_numbers(tok[1:3], float, npath, ln))
        marks.append(_numbers(tok[3 + nattr:4 + nattr], int, npath, ln)[0] if nbm else 0)
    base = ids[0]
    if base not in (0, 1):
        raise ParseError(f"first vertex index must be 0 or 1, got {base}", npath, nlines[1][0])
    order = np.argsort(ids)
    if not np.array_equal(np.sort(ids), np.arange(base, base + nv)):
        raise ParseError("vertex indices must be consecutive", npath, nlines[1][0])

    elines = _content_lines(epath)
    if not elines:
        raise ParseError("empty .ele file", epath)
    ln, head = elines[0]
    hdr = _numbers(head.split(), int, epath, ln)
    ne = hdr[0]
    npt = hdr[1] if len(hdr) > 1 else 3
    if npt != 3:
        raise ParseError(f"only 3-node triangles are supported, got {npt}", epath, ln)
    if len(elines) - 1 < ne:
        raise ParseError(f"expected {ne} elements, found {len(elines) - 1}", epath,
                         elines[-1][0])
    tris = []
    for ln, text in elines[1:ne + 1]:
        tok = text.split()
        if len(tok) < 4:
            raise ParseError("element line has too few fields", epath, ln)
        tris.append([x - base for x in _numbers(tok[1:4], int, epath, ln)])
    verts = np.asarray(coords)[order]
    vmark = np.asarray(marks, dtype=np.int64)[order]
    return Triangulation(verts, np.asarray(tris, dtype=np.int64), vertex_markers=vmark)


def _read_msh2(path: str) -> Triangulation:
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc}", path) from exc
    i = 0
    n = len(lines)
    node_index: dict[int, int] = {}
    coords: list[list[float]] = []
    tris: list[list[int]] = []
    edges: list[tuple[int, int, int]] = []
    seen_format = False

    def need(k: int) -> str:
        if k >= n:
            raise ParseError("unexpected end of file", path, n)
        return lines[k].strip()

    while i < n:
        s = lines[i].strip()
        if not s:
            i += 1
            continue
        if s == "$MeshFormat":
            tok = need(i + 1).split()
            if len(tok) < 2 or not tok[0].startswith("2.2") or tok[1] != "0":
                raise ParseError(
                    f"only MSH 2.2 ASCII is supported, got format line {need(i + 1)!r}",
                    path, i + 2)
            if need(i + 2) != "$EndMeshFormat":
                raise ParseError("expected $EndMeshFormat", path, i + 3)
            seen_format = True
            i += 3
        elif s == "$Nodes":
            cnt = _numbers([need(i + 1)], int, path, i + 2)[0]
            for k in range(cnt):
                ln = i + 2 + k
                tok = need(ln).split()
                if len(tok) < 3:
                    raise ParseError("node line needs 'id x y [z]'", path, ln + 1)
                nid = _numbers(tok[:1], int, path, ln + 1)[0]
                node_index[nid] = len(coords)
                coords.append(_numbers(tok[1:3], float, path, ln + 1))
            i += 2 + cnt
            if need(i) != "$EndNodes":
                raise ParseError("expected $EndNodes", path, i + 1)
            i += 1
        elif s == "$Elements":
            cnt = _numbers([need(i + 1)], int, path, i + 2)[0]
            for k in range(cnt):
                ln = i + 2 + k
                tok = _numbers(need(ln).split(), int, path, ln + 1)
                if len(tok) < 3:
                    raise ParseError("element line too short", path, ln + 1)
                etype, ntags = tok[1], tok[2]
                tags = tok[3:3 + ntags]
                nodes = tok[3 + ntags:]
                phys = tags[0] if tags else 0
                try:
                    if etype == 1 and len(nodes) == 2:
                        edges.append((node_index[nodes[0]], node_index[nodes[1]], phys))
                    elif etype == 2 and len(nodes) == 3:
                        tris.append([node_index[x] for x in nodes])
                    elif etype == 15:
                        pass
                    else:
                        raise ParseError(f"unsupported element type {etype}", path, ln + 1)
                except KeyError as exc:
                    raise ValidationError(
                        f"{path}:{ln + 1}: element references unknown node {exc.args[0]}"
                    ) from None
            i += 2 + cnt
            if need(i) != "$EndElements":
                raise ParseError("expected $EndElements", path, i + 1)
            i += 1
        elif s.startswith("$"):
            end = "$End" + s[1:]
            j = i + 1
            while j < n and lines[j].strip() != end:
                j += 1
            if j >= n:
                raise ParseError(f"missing {end}", path, i + 1)
            i = j + 1
        else:
            raise ParseError(f"unexpected content {s!r}", path, i + 1)
    if not seen_format:
        raise ParseError("missing $MeshFormat section", path, 1)
    if not tris:
        raise ParseError("no triangles found", path)
    verts, remapped = _compact(np.asarray(coords, dtype=float), tris)
    used = np.unique(np.asarray(tris).ravel())
    remap = -np.ones(len(coords), dtype=np.int64)
    remap[used] = np.arange(used.size)
    emark = {}
    vmark = np.zeros(verts.shape[0], dtype=np.int64)
    for a, b, m in edges:
        if remap[a] < 0 or remap[b] < 0 or m == 0:
            continue
        ra, rb = int(remap[a]), int(remap[b])
        emark[(min(ra, rb), max(ra, rb))] = m
        vmark[ra] = max(vmark[ra], m)
        vmark[rb] = max(vmark[rb], m)
    return Triangulation(verts, remapped, vertex_markers=vmark, boundary_edge_markers=emark)


def _fmt(x: float) -> str:
    return f"{float(x) + 0.0:.17g}"


def write_node_ele(tri: Triangulation, stem: str | os.PathLike) -> tuple[str, str]:
    """Write Triangle-style ``stem.node`` / ``stem.ele`` files (1-based)."""
    stem = os.fspath(stem)
    for ext in (".node", ".ele"):
        if stem.endswith(ext):
            stem = stem[: -len(ext)]
    npath, epath = stem + ".node", stem + ".ele"
    with open(npath, "w") as fh:
        fh.write(f"{tri.n_vertices} 2 0 1\n")
        for i, (p, m) in enumerate(zip(tri.vertices, tri.vertex_markers), start=1):
            fh.write(f"{i} {_fmt(p[0])} {_fmt(p[1])} {int(m)}\n")
    with open(epath, "w") as fh:
        fh.write(f"{tri.n_elements} 3 0\n")
        for i, t in enumerate(tri.elements, start=1):
            fh.write(f"{i} {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
    return npath, epath


def write_msh2(tri: Triangulation, path: str | os.PathLike) -> str:
    """Write Gmsh MSH 2.2 ASCII with boundary edges tagged by their markers."""
    path = os.fspath(path)
    bedges = [(k, m) for k, m in tri.boundary_edge_markers.items()]
    with open(path, "w") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n")
        fh.write(f"{tri.n_vertices}\n")
        for i, p in enumerate(tri.vertices, start=1):
            fh.write(f"{i} {_fmt(p[0])} {_fmt(p[1])} 0\n")
        fh.write("$EndNodes\n$Elements\n")
        fh.write(f"{len(bedges) + tri.n_elements}\n")
        k = 1
        for (a, b), m in bedges:
            fh.write(f"{k} 1 2 {m} {m} {a + 1} {b + 1}\n")
            k += 1
        for t in tri.elements:
            fh.write(f"{k} 2 2 0 0 {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
            k += 1
        fh.write("$EndElements\n")
    return path


def write_mesh(tri: Triangulation, path: str | os.PathLike, format: str | None = None) -> None:
    path = os.fspath(path)
    if format is None:
        format = "msh2" if path.endswith(".msh") else "node_ele"
    if format == "msh2":
        write_msh2(tri, path)
    elif format == "node_ele":
        write_node_ele(tri, path)
    else:
        raise ValueError(f"unknown mesh format {format!r}")
