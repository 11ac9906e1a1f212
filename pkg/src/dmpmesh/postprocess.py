"""Flux recovery, species-balance errors and file export."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ParseError, SolverError, ValidationError
from .mesh import Triangulation, _fmt
from .problem import ProblemSpec, triangle_quadrature

__all__ = [
    "BalanceReport",
    "VtkData",
    "mass_matrix",
    "flux_projection_system",
    "recover_flux",
    "balance_errors",
    "export_vtk",
    "read_vtk",
    "TABLE_COLUMNS",
    "table_row",
    "write_table_csv",
]

RECOVERY_QUADRATURE = 3
TABLE_COLUMNS = ("Nv", "Nele", "h", "min_c", "max_c", "pct_below", "pct_above")


def _gradients(tri: Triangulation, c: np.ndarray) -> np.ndarray:
    q = tri.geometry["q"]
    return np.einsum("nk,nkd->nd", c[tri.elements], q)


def mass_matrix(tri: Triangulation, lumped: bool = False) -> sp.csc_matrix:
    """P1 mass matrix, consistent or row-sum lumped."""
    area = tri.areas
    el = tri.elements
    if lumped:
        d = np.zeros(tri.n_vertices)
        for k in range(3):
            np.add.at(d, el[:, k], area / 3)
        return sp.diags(d).tocsc()
    local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12
    rows = np.repeat(el, 3, axis=1).ravel()
    cols = np.tile(el, (1, 3)).ravel()
    vals = (area[:, None, None] * local).ravel()
    return sp.coo_matrix((vals, (rows, cols)), shape=(tri.n_vertices,) * 2).tocsc()


def flux_projection_system(tri: Triangulation, spec: ProblemSpec, c,
                           lumped: bool = False,
                           quadrature_order: int = RECOVERY_QUADRATURE):
    """Mass matrix ``M`` and right-hand side ``b_i = int phi_i (-D grad c)``."""
    c = np.asarray(c, dtype=float)
    if c.shape != (tri.n_vertices,):
        raise ValidationError(f"solution has {c.size} values for {tri.n_vertices} vertices")
    bary, w = triangle_quadrature(quadrature_order)
    g = _gradients(tri, c)
    P = tri.vertices[tri.elements]
    qp = np.einsum("qk,nkd->nqd", bary, P)
    D = spec.diffusivity.evaluate(qp.reshape(-1, 2)).reshape(tri.n_elements, len(w), 2, 2)
    flux = -np.einsum("nqij,nj->nqi", D, g)
    local = tri.areas[:, None, None] * np.einsum("q,qk,nqi->nki", w, bary, flux)
    b = np.zeros((tri.n_vertices, 2))
    for k in range(3):
        np.add.at(b, tri.elements[:, k], local[:, k])
    return mass_matrix(tri, lumped), b


def recover_flux(sys, c, tri: Triangulation, spec: ProblemSpec, lumped: bool = False,
                 quadrature_order: int = RECOVERY_QUADRATURE) -> np.ndarray:
    """Nodal flux by global L2 projection of ``-D grad c`` (global smoothing).

    ``sys`` is accepted for interface symmetry and only used to check sizes.
    Returns an ``(Nv, 2)`` array.
    """
    if sys is not None and getattr(sys, "n_t", tri.n_vertices) != tri.n_vertices:
        raise ValidationError("system and mesh sizes differ")
    M, b = flux_projection_system(tri, spec, c, lumped, quadrature_order)
    try:
        lu = spla.splu(M.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"mass matrix factorization failed: {exc}") from exc
    q = np.column_stack([lu.solve(b[:, 0]), lu.solve(b[:, 1])])
    if not np.isfinite(q).all():
        raise SolverError("flux recovery produced non-finite values")
    return q


@dataclass(frozen=True, eq=False)
class BalanceReport:
    local: np.ndarray
    global_sum: float
    global_direct: float
    abs_max_local: float
    quadrature_order: int
    notes: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {"abs_max_local": self.abs_max_local, "global_error": self.global_sum,
                "global_error_direct": self.global_direct,
                "quadrature_order": self.quadrature_order, "notes": list(self.notes)}


def _volume_terms(tri: Triangulation, spec: ProblemSpec, c: np.ndarray, order: int) -> np.ndarray:
    bary, w = triangle_quadrature(order)
    g = _gradients(tri, c)
    P = tri.vertices[tri.elements]
    qp = np.einsum("qk,nkd->nqd", bary, P).reshape(-1, 2)
    n, nq = tri.n_elements, len(w)
    v = spec.velocity(qp).reshape(n, nq, 2)
    a = spec.reaction(qp).reshape(n, nq)
    f = spec.source(qp).reshape(n, nq)
    ch = np.einsum("qk,nk->nq", bary, c[tri.elements])
    integrand = np.einsum("nqd,nd->nq", v, g) + a * ch - f
    return tri.areas * (integrand @ w)


def _edge_flux(tri: Triangulation, q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact ``int q.n`` over directed edges ``a -> b`` with ``n`` to their right."""
    d = tri.vertices[b] - tri.vertices[a]
    qm = 0.5 * (q[a] + q[b])
    return qm[:, 0] * d[:, 1] - qm[:, 1] * d[:, 0]


def balance_errors(tri: Triangulation, spec: ProblemSpec, c, q,
                   quadrature_order: int = RECOVERY_QUADRATURE) -> BalanceReport:
    """Local and global species-balance errors of a recovered flux.

    ``local_e = int_{de} q.n ds + int_e (v.grad c + alpha c - f)``.  The
    global error is reported as the sum of local errors and, independently,
    as boundary flux plus the domain integral.
    """
    c = np.asarray(c, dtype=float)
    q = np.asarray(q, dtype=float)
    if c.shape != (tri.n_vertices,) or q.shape != (tri.n_vertices, 2):
        raise ValidationError("solution or flux size does not match the mesh")
    vol = _volume_terms(tri, spec, c, quadrature_order)
    el = tri.elements
    boundary = np.zeros(tri.n_elements)
    for k in range(3):
        boundary += _edge_flux(tri, q, el[:, k], el[:, (k + 1) % 3])
    local = boundary + vol
    ba, bb = [], []
    for key in tri.boundary_edges:
        (e,) = tri.edge_adjacency[key]
        t = el[e].tolist()
        i = t.index(key[0])
        if t[(i + 1) % 3] == key[1]:
            ba.append(key[0]), bb.append(key[1])
        else:
            ba.append(key[1]), bb.append(key[0])
    bflux = _edge_flux(tri, q, np.array(ba, dtype=np.int64), np.array(bb, dtype=np.int64))
    direct = float(bflux.sum() + vol.sum())
    return BalanceReport(local, float(local.sum()), direct, float(np.abs(local).max()),
                         quadrature_order,
                         notes=[f"volume terms use the {quadrature_order}-point triangle rule",
                                "edge fluxes are integrated exactly for the linear flux"])


# ---------------------------------------------------------------------------
# VTK


@dataclass(eq=False)
class VtkData:
    vertices: np.ndarray
    elements: np.ndarray
    point_data: dict
    cell_data: dict
    title: str = "dmpmesh"


def _vtk_name(name: str) -> str:
    return "_".join(str(name).split()) or "field"


def _write_fields(lines: list[str], fields: dict, n: int) -> None:
    for name, arr in fields.items():
        a = np.asarray(arr, dtype=float)
        if a.shape == (n,):
            lines.append(f"SCALARS {_vtk_name(name)} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(x) for x in a)
        elif a.ndim == 2 and a.shape[0] == n and a.shape[1] in (2, 3):
            lines.append(f"VECTORS {_vtk_name(name)} double")
            for row in a:
                r = list(row) + [0.0] * (3 - len(row))
                lines.append(" ".join(_fmt(x) for x in r))
        else:
            raise ValidationError(f"field {name!r} has shape {a.shape}, expected ({n},) or ({n}, 2|3)")


def export_vtk(mesh, path: str | os.PathLike, point_data: dict | None = None,
               cell_data: dict | None = None, title: str = "dmpmesh") -> None:
    """Legacy ASCII VTK unstructured grid of triangles with point and cell fields."""
    V = np.asarray(mesh.vertices, dtype=float)
    E = np.asarray(mesh.elements, dtype=np.int64)
    nv, ne = V.shape[0], E.shape[0]
    lines = ["# vtk DataFile Version 3.0", title.splitlines()[0] if title else "dmpmesh",
             "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines.extend(f"{_fmt(x)} {_fmt(y)} 0" for x, y in V)
    lines.append(f"CELLS {ne} {4 * ne}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in E)
    lines.append(f"CELL_TYPES {ne}")
    lines.extend("5" for _ in range(ne))
    if point_data:
        lines.append(f"POINT_DATA {nv}")
        _write_fields(lines, point_data, nv)
    if cell_data:
        lines.append(f"CELL_DATA {ne}")
        _write_fields(lines, cell_data, ne)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk(path: str | os.PathLike) -> VtkData:
    """Read files produced by ``export_vtk``."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    if not lines[0].startswith("# vtk"):
        raise ParseError("not a legacy VTK file", path=str(path), line=1)
    title = lines[1]
    i = 4
    verts = elems = None
    pdata: dict = {}
    cdata: dict = {}
    target = None
    n_target = 0
    try:
        while i < len(lines):
            tok = lines[i].split()
            if not tok:
                i += 1
                continue
            key = tok[0]
            if key == "POINTS":
                n = int(tok[1])
                verts = np.array([[float(x) for x in lines[i + 1 + k].split()[:2]]
                                  for k in range(n)])
                i += n + 1
            elif key == "CELLS":
                n = int(tok[1])
                elems = np.array([[int(x) for x in lines[i + 1 + k].split()[1:4]]
                                  for k in range(n)], dtype=np.int64)
                i += n + 1
            elif key == "CELL_TYPES":
                i += int(tok[1]) + 1
            elif key in ("POINT_DATA", "CELL_DATA"):
                target = pdata if key == "POINT_DATA" else cdata
                n_target = int(tok[1])
                i += 1
            elif key == "SCALARS":
                target[tok[1]] = np.array([float(lines[i + 2 + k]) for k in range(n_target)])
                i += n_target + 2
            elif key == "VECTORS":
                target[tok[1]] = np.array([[float(x) for x in lines[i + 1 + k].split()]
                                           for k in range(n_target)])
                i += n_target + 1
            else:
                raise ParseError(f"unexpected VTK keyword {key!r}", path=str(path), line=i + 1)
    except (ValueError, IndexError, TypeError) as exc:
        raise ParseError(f"malformed VTK data: {exc}", path=str(path), line=i + 1) from exc
    if verts is None or elems is None:
        raise ParseError("VTK file lacks POINTS or CELLS", path=str(path))
    return VtkData(verts, elems, pdata, cdata, title)


# ---------------------------------------------------------------------------
# Tables


def table_row(tri: Triangulation, solution_report) -> dict:
    """One row of the violation table for a solved problem."""
    r = solution_report
    return {"Nv": tri.n_vertices, "Nele": tri.n_elements, "h": tri.h, "min_c": r.min_c,
            "max_c": r.max_c, "pct_below": r.pct_nodes_below, "pct_above": r.pct_nodes_above}


def write_table_csv(path: str | os.PathLike, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for row in rows:
            w.writerow([row[k] if isinstance(row[k], (int, np.integer)) else _fmt(row[k])
                        for k in TABLE_COLUMNS])
