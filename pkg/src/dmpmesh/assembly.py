"""Galerkin assembly for T3 and Q4 elements and the partitioned linear solve.

Global unknowns are split into free and prescribed (Dirichlet) vertices,
``K = [K_ff | K_fp]``, and the free values solve
``K_ff c_f = r_f - K_fp c_p``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import SingularGeometryError, SolverError, ValidationError
from .mesh import QuadMesh, Triangulation
from .parallel import chunked_map
from .problem import ProblemSpec, gauss_legendre, triangle_quadrature

__all__ = [
    "LocalMatrix",
    "AssembledSystem",
    "local_stiffness_t3",
    "local_stiffness_q4",
    "local_matrices_t3",
    "local_matrices_q4",
    "assemble",
    "solve_system",
    "export_matrix_market",
]


@dataclass(frozen=True, eq=False)
class LocalMatrix:
    """Element matrix with its diffusion, advection and reaction parts."""

    entries: np.ndarray
    element: int
    diffusion: np.ndarray
    advection: np.ndarray
    reaction: np.ndarray


def _t3_blocks(spec: ProblemSpec, tri: Triangulation, a: int, b: int, npts: int):
    bary, w = triangle_quadrature(npts)
    P = tri.vertices[tri.elements[a:b]]
    g = tri.geometry
    q = g["q"][a:b]
    area = g["area"][a:b]
    n = b - a
    xq = np.einsum("qk,nkd->nqd", bary, P).reshape(-1, 2)
    D = spec.diffusivity.evaluate(xq).reshape(n, len(w), 2, 2)
    Dint = area[:, None, None] * np.einsum("q,nqij->nij", w, D)
    Dint = 0.5 * (Dint + np.swapaxes(Dint, 1, 2))
    diff = np.einsum("nid,nde,nje->nij", q, Dint, q)
    v = spec.velocity(xq).reshape(n, len(w), 2)
    vq = np.einsum("nqd,njd->nqj", v, q)
    adv = area[:, None, None] * np.einsum("q,qi,nqj->nij", w, bary, vq)
    al = spec.reaction(xq).reshape(n, len(w))
    rea = area[:, None, None] * np.einsum("q,nq,qi,qj->nij", w, al, bary, bary)
    f = spec.source(xq).reshape(n, len(w))
    load = area[:, None] * np.einsum("q,nq,qi->ni", w, f, bary)
    return diff, adv, rea, load


def local_matrices_t3(spec: ProblemSpec, tri: Triangulation, quadrature_order: int = 3):
    """Diffusion, advection, reaction blocks ``(Nele, 3, 3)`` and loads ``(Nele, 3)``."""
    parts = chunked_map(lambda a, b: _t3_blocks(spec, tri, a, b, quadrature_order),
                        tri.n_elements)
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(4))


def local_stiffness_t3(spec: ProblemSpec, tri: Triangulation, e: int,
                       quadrature_order: int = 3) -> LocalMatrix:
    """Local matrix of triangle ``e``.

    The diffusion block is ``G (int D) G^T`` with ``G`` the stacked basis
    gradients; advection ``int phi_i v . grad phi_j`` and reaction
    ``int alpha phi_i phi_j`` use the ``quadrature_order``-point rule.
    """
    if not 0 <= e < tri.n_elements:
        raise IndexError(f"element index {e} out of range")
    diff, adv, rea, _ = _t3_blocks(spec, tri, e, e + 1, quadrature_order)
    return LocalMatrix(diff[0] + adv[0] + rea[0], e, diff[0], adv[0], rea[0])


_Q4_REF = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _q4_shape(xi: np.ndarray, eta: np.ndarray):
    N = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta], -1)
    dxi = np.stack([-(1 - eta), 1 - eta, eta, -eta], -1)
    deta = np.stack([-(1 - xi), -xi, xi, 1 - xi], -1)
    return N, np.stack([dxi, deta], -1)


def _q4_blocks(spec: ProblemSpec, qm: QuadMesh, a: int, b: int, ngauss: int):
    if ngauss < 2:
        raise ValueError("Q4 quadrature needs at least 2 Gauss points per axis")
    g, gw = gauss_legendre(ngauss)
    XI, ETA = np.meshgrid(g, g, indexing="ij")
    W = np.outer(gw, gw).ravel()
    N, dN = _q4_shape(XI.ravel(), ETA.ravel())  # (nq,4), (nq,4,2)
    P = qm.vertices[qm.elements[a:b]]  # (n,4,2)
    n, nq = b - a, W.size
    J = np.einsum("qkr,nkd->nqdr", dN, P)  # dx_d / dxi_r
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if (detJ <= 0).any():
        raise SingularGeometryError("quad element with non-positive Jacobian", element=a)
    Jinv = np.empty_like(J)
    Jinv[..., 0, 0] = J[..., 1, 1] / detJ
    Jinv[..., 1, 1] = J[..., 0, 0] / detJ
    Jinv[..., 0, 1] = -J[..., 0, 1] / detJ
    Jinv[..., 1, 0] = -J[..., 1, 0] / detJ
    G = np.einsum("qkr,nqrd->nqkd", dN, Jinv)  # physical gradients
    wd = W[None, :] * detJ
    xq = np.einsum("qk,nkd->nqd", N, P).reshape(-1, 2)
    D = spec.diffusivity.evaluate(xq).reshape(n, nq, 2, 2)
    diff = np.einsum("nq,nqid,nqde,nqje->nij", wd, G, D, G)
    diff = 0.5 * (diff + np.swapaxes(diff, 1, 2))
    v = spec.velocity(xq).reshape(n, nq, 2)
    adv = np.einsum("nq,qi,nqd,nqjd->nij", wd, N, v, G)
    al = spec.reaction(xq).reshape(n, nq)
    rea = np.einsum("nq,nq,qi,qj->nij", wd, al, N, N)
    f = spec.source(xq).reshape(n, nq)
    load = np.einsum("nq,nq,qi->ni", wd, f, N)
    return diff, adv, rea, load


def local_matrices_q4(spec: ProblemSpec, qm: QuadMesh, gauss_points_per_axis: int = 2):
    parts = chunked_map(lambda a, b: _q4_blocks(spec, qm, a, b, gauss_points_per_axis),
                        qm.n_elements)
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(4))


def local_stiffness_q4(spec: ProblemSpec, qm: QuadMesh, e: int,
                       gauss_points_per_axis: int = 2) -> LocalMatrix:
    """Local matrix of bilinear quad ``e`` by tensor-product Gauss quadrature.

    Local vertex order is the mesh's counter-clockwise order.
    """
    if not 0 <= e < qm.n_elements:
        raise IndexError(f"element index {e} out of range")
    diff, adv, rea, _ = _q4_blocks(spec, qm, e, e + 1, gauss_points_per_axis)
    return LocalMatrix(diff[0] + adv[0] + rea[0], e, diff[0], adv[0], rea[0])


def _triplets_to_csr(rows, cols, vals, shape) -> sp.csr_matrix:
    order = np.lexsort((cols, rows))
    r, c, v = rows[order], cols[order], vals[order]
    if r.size == 0:
        return sp.csr_matrix(shape)
    new = np.ones(r.size, dtype=bool)
    new[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
    starts = np.nonzero(new)[0]
    data = np.add.reduceat(v, starts)
    return sp.csr_matrix((data, (r[starts], c[starts])), shape=shape)


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    """Partitioned global system.

    Attributes:
        K: full ``n_t x n_t`` stiffness matrix.
        r: full load vector.
        K_ff, K_fp: free-free and free-prescribed blocks.
        r_f: load on free vertices.
        free_dofs, prescribed_dofs: vertex indices of each block, sorted.
        c_p: prescribed values.
    """

    K: sp.csr_matrix
    r: np.ndarray
    K_ff: sp.csr_matrix
    K_fp: sp.csr_matrix
    r_f: np.ndarray
    free_dofs: np.ndarray
    prescribed_dofs: np.ndarray
    c_p: np.ndarray
    mesh: object = field(default=None, repr=False)

    @classmethod
    def from_blocks(cls, K_ff, K_fp, r_f=None, c_p=None) -> "AssembledSystem":
        """System from explicit blocks; free vertices come first in the full numbering."""
        Kff = sp.csr_matrix(np.asarray(K_ff, dtype=float) if not sp.issparse(K_ff) else K_ff)
        Kfp = sp.csr_matrix(np.asarray(K_fp, dtype=float) if not sp.issparse(K_fp) else K_fp)
        nf, npres = Kff.shape[0], Kfp.shape[1]
        if Kff.shape != (nf, nf) or Kfp.shape[0] != nf:
            raise ValidationError("K_ff must be square and K_fp must have n_f rows")
        rf = np.zeros(nf) if r_f is None else np.asarray(r_f, dtype=float)
        cp = np.zeros(npres) if c_p is None else np.asarray(c_p, dtype=float)
        K = sp.bmat([[Kff, Kfp], [Kfp.T, sp.identity(npres)]], format="csr")
        r = np.concatenate([rf, np.zeros(npres)])
        return cls(K, r, Kff, Kfp, rf, np.arange(nf), np.arange(nf, nf + npres), cp)

    @property
    def n_t(self) -> int:
        return int(self.K.shape[0])

    @property
    def n_f(self) -> int:
        return int(self.free_dofs.size)

    @property
    def n_p(self) -> int:
        return int(self.prescribed_dofs.size)

    @cached_property
    def lu(self):
        """Sparse LU factorization of ``K_ff``."""
        if self.n_f == 0:
            raise SolverError("no free degrees of freedom to factorize")
        try:
            return splu(self.K_ff.tocsc())
        except RuntimeError as exc:
            diag = self.K_ff.diagonal()
            raise SolverError(f"K_ff factorization failed ({exc}); "
                              f"min |diag| = {np.abs(diag).min():.3e}") from exc

    def solve_free(self, rhs: np.ndarray) -> np.ndarray:
        """Apply ``K_ff^{-1}`` to a vector or to the columns of a dense matrix."""
        x = self.lu.solve(np.asarray(rhs, dtype=float))
        if not np.all(np.isfinite(x)):
            raise SolverError("K_ff solve produced non-finite values (singular matrix)")
        return x

    def with_data(self, r_f=None, c_p=None) -> "AssembledSystem":
        """Same matrices with a different free load and/or prescribed values."""
        new = AssembledSystem(self.K, self.r, self.K_ff, self.K_fp,
                              self.r_f if r_f is None else np.asarray(r_f, dtype=float),
                              self.free_dofs, self.prescribed_dofs,
                              self.c_p if c_p is None else np.asarray(c_p, dtype=float),
                              self.mesh)
        if "lu" in self.__dict__:
            new.__dict__["lu"] = self.__dict__["lu"]
        return new


def assemble(spec: ProblemSpec, mesh: Triangulation | QuadMesh, quadrature_order: int = 3,
             gauss_points_per_axis: int = 2) -> AssembledSystem:
    """Assemble the partitioned Galerkin system of ``spec`` on ``mesh``.

    Every boundary vertex must receive a Dirichlet value.
    """
    presc, cp = spec.dirichlet_values(mesh)
    if isinstance(mesh, Triangulation):
        diff, adv, rea, load = local_matrices_t3(spec, mesh, quadrature_order)
    elif isinstance(mesh, QuadMesh):
        diff, adv, rea, load = local_matrices_q4(spec, mesh, gauss_points_per_axis)
    else:
        raise ValidationError(f"cannot assemble on {type(mesh).__name__}")
    Ke = diff + adv + rea
    el = mesh.elements
    k = el.shape[1]
    rows = np.repeat(el, k, axis=1).ravel()
    cols = np.tile(el, (1, k)).ravel()
    n = mesh.n_vertices
    K = _triplets_to_csr(rows, cols, Ke.ravel(), (n, n))
    r = np.zeros(n)
    np.add.at(r, el.ravel(), load.ravel())
    mask = np.ones(n, dtype=bool)
    mask[presc] = False
    free = np.nonzero(mask)[0]
    Kf = K[free]
    return AssembledSystem(K=K, r=r, K_ff=Kf[:, free].tocsr(), K_fp=Kf[:, presc].tocsr(),
                           r_f=r[free].copy(), free_dofs=free, prescribed_dofs=presc,
                           c_p=cp, mesh=mesh)


def solve_system(sys: AssembledSystem) -> np.ndarray:
    """Nodal solution of length ``n_t`` with ``c[prescribed] = c_p``."""
    c = np.empty(sys.n_t)
    c[sys.prescribed_dofs] = sys.c_p
    if sys.n_f == 0:
        return c
    rhs = sys.r_f - sys.K_fp @ sys.c_p
    cf = sys.solve_free(rhs)
    res = np.abs(sys.K_ff @ cf - rhs).max()
    scale = 1.0 + max(np.abs(rhs).max(), np.abs(sys.r).max() if sys.r.size else 0.0)
    if res > 1e-10 * scale:
        raise SolverError(f"solve residual {res:.3e} exceeds tolerance")
    c[sys.free_dofs] = cf
    return c


def export_matrix_market(sys: AssembledSystem, stem: str | os.PathLike) -> tuple[str, str]:
    """Write ``K_ff`` and ``K_fp`` as MatrixMarket coordinate files."""
    stem = os.fspath(stem)
    a, b = stem + "_Kff.mtx", stem + "_Kfp.mtx"
    scipy.io.mmwrite(a, sys.K_ff, precision=17)
    scipy.io.mmwrite(b, sys.K_fp, precision=17)
    return a, b
