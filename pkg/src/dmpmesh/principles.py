"""Discrete maximum, minimum and comparison principles.

Matrix level: with ``W = -K_ff^{-1} K_fp`` the weak maximum principle holds for
every load ``r <= 0`` and boundary data exactly when ``K_ff^{-1} >= 0``,
``W >= 0`` and ``W 1 <= 1`` (entrywise).  The stronger variants require
``W 1 = 1`` and/or strictly positive entries.

Solution level: the same statements are checked on a computed field.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .assembly import AssembledSystem, solve_system
from .errors import CapacityError
from .mesh import Triangulation, is_interiorly_connected
from .parallel import chunked_map

__all__ = [
    "DENSE_CAP",
    "DominanceReport",
    "MatrixPrincipleReport",
    "SolutionPrincipleReport",
    "DCPResult",
    "DwMPWitness",
    "classify_dominance",
    "check_matrix_principles",
    "check_solution_principles",
    "check_dcp",
    "dwmp_witness",
]

DENSE_CAP = 4000
ROWSUM_TOL = 1e-10
_COLUMN_CHUNK = 256
_OFFENDER_CAP = 20


@dataclass(frozen=True)
class DominanceReport:
    """Row-wise sign and dominance structure of a square matrix.

    ``rows`` holds ``"strict"``, ``"weak"`` or ``"none"`` per row.  These are
    sufficient, not necessary, conditions for monotonicity.
    """

    z_matrix: bool
    diag_positive: bool
    dominance: str
    rows: list[str]
    worst_row: int
    worst_row_margin: float
    positive_offdiagonals: list[tuple[int, int, float]]
    n_positive_offdiagonals: int
    tol: float
    note: str = ("positive diagonal, non-positive off-diagonals and diagonal "
                 "dominance are sufficient but not necessary for monotonicity")

    @property
    def weakly_dominant(self) -> bool:
        return self.dominance in ("strict", "weak")

    @property
    def has_strict_row(self) -> bool:
        return "strict" in self.rows


def classify_dominance(K, tol: float | None = None) -> DominanceReport:
    """Classify signs and diagonal dominance of the rows of ``K``.

    ``tol`` defaults to ``1e-12`` times the largest absolute entry.
    """
    A = sp.csr_matrix(K)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError("classify_dominance needs a square matrix")
    absmax = float(abs(A).max()) if A.nnz else 0.0
    tol = 1e-12 * absmax if tol is None else float(tol)
    diag = A.diagonal()
    off = (A - sp.diags(diag)).tocoo()
    pos = off.data > tol
    pi, pj, pv = off.row[pos], off.col[pos], off.data[pos]
    order = np.argsort(-pv, kind="stable")[:_OFFENDER_CAP]
    offenders = [(int(pi[k]), int(pj[k]), float(pv[k])) for k in order]
    offsum = np.asarray(abs(off).sum(axis=1)).ravel()
    margin = np.abs(diag) - offsum
    rows = np.where(margin > tol, "strict", np.where(margin >= -tol, "weak", "none")).tolist()
    if n == 0:
        dom = "strict"
    elif all(r == "strict" for r in rows):
        dom = "strict"
    elif all(r != "none" for r in rows):
        dom = "weak"
    else:
        dom = "none"
    worst = int(np.argmin(margin)) if n else -1
    return DominanceReport(z_matrix=bool(pv.size == 0), diag_positive=bool((diag > tol).all()),
                           dominance=dom, rows=rows, worst_row=worst,
                           worst_row_margin=float(margin[worst]) if n else 0.0,
                           positive_offdiagonals=offenders,
                           n_positive_offdiagonals=int(pv.size), tol=tol)


@dataclass(frozen=True)
class MatrixPrincipleReport:
    """Matrix-level verdicts.

    ``rowsum`` classifies ``W 1`` against 1: ``"=1"`` (all rows equal),
    ``"<1"`` (all strictly below), ``"<=1"`` (some equal, some below) or
    ``"mixed"`` (some row exceeds 1).  Exact verdicts are ``None`` when the
    dense inverse was not computed.
    """

    n_f: int
    n_p: int
    tol: float
    z_matrix: bool
    diag_positive: bool
    dominance: str
    irreducible: bool
    irreducible_source: str
    exact_computed: bool
    inverse_nonneg: bool | None = None
    coupling_nonneg: bool | None = None
    inverse_positive: bool | None = None
    coupling_positive: bool | None = None
    rowsum: str | None = None
    rowsum_max: float | None = None
    rowsum_min: float | None = None
    min_inverse_entry: tuple[int, int, float] | None = None
    min_coupling_entry: tuple[int, int, float] | None = None
    max_rowsum_row: int | None = None
    DwMP_K: bool | None = None
    DWMP_K: bool | None = None
    DsMP_K: bool | None = None
    DSMP_K: bool | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _irreducible(K_ff: sp.csr_matrix, mesh) -> tuple[bool, str]:
    if isinstance(mesh, Triangulation):
        return is_interiorly_connected(mesh).connected, "mesh"
    n = K_ff.shape[0]
    if n <= 1:
        return True, "matrix"
    ncomp, _ = connected_components(K_ff, directed=True, connection="strong")
    return ncomp == 1, "matrix"


def _dense_inverse_and_coupling(sys: AssembledSystem):
    n = sys.n_f
    Kfp = sys.K_fp.toarray()

    def work(a, b):
        eye = np.zeros((n, b - a))
        eye[np.arange(a, b), np.arange(b - a)] = 1.0
        return sys.solve_free(eye)

    inv = np.hstack(chunked_map(work, n, chunk=_COLUMN_CHUNK))
    coupling = -np.hstack(chunked_map(lambda a, b: sys.solve_free(Kfp[:, a:b]),
                                      sys.n_p, chunk=_COLUMN_CHUNK)) if sys.n_p else \
        np.zeros((n, 0))
    return inv, coupling


def _argmin2(A: np.ndarray) -> tuple[int, int, float] | None:
    if A.size == 0:
        return None
    k = int(np.argmin(A))
    i, j = divmod(k, A.shape[1])
    return (int(i), int(j), float(A[i, j]))


def _rowsum_class(s: np.ndarray, tol: float) -> str:
    if s.size == 0:
        return "=1"
    eq = np.abs(s - 1.0) <= tol
    lt = s < 1.0 - tol
    if eq.all():
        return "=1"
    if lt.all():
        return "<1"
    if (eq | lt).all():
        return "<=1"
    return "mixed"


def check_matrix_principles(sys: AssembledSystem, tol: float | None = None,
                            cap: int = DENSE_CAP, mesh=None) -> MatrixPrincipleReport:
    """Check the matrix conditions of the discrete maximum principles.

    Parameters
    ----------
    sys : AssembledSystem
    tol : float, optional
        Entrywise tolerance for sign checks; defaults to ``1e-11`` times the
        largest absolute entry of ``K_ff^{-1}``.
    cap : int
        Largest ``n_f`` for which the dense inverse is formed.  Above it only
        the sufficient conditions are reported.
    mesh : Triangulation, optional
        Used for irreducibility through interior connectivity; defaults to
        ``sys.mesh``.
    """
    if sys.n_f < 1:
        raise ValueError("matrix principles need at least one free degree of freedom")
    mesh = sys.mesh if mesh is None else mesh
    dom = classify_dominance(sys.K_ff)
    irr, src = _irreducible(sys.K_ff, mesh)
    base = dict(n_f=sys.n_f, n_p=sys.n_p, z_matrix=dom.z_matrix, diag_positive=dom.diag_positive,
                dominance=dom.dominance, irreducible=irr, irreducible_source=src)
    if sys.n_f > cap:
        return MatrixPrincipleReport(tol=float("nan") if tol is None else tol,
                                     exact_computed=False, **base)
    inv, W = _dense_inverse_and_coupling(sys)
    if tol is None:
        tol = 1e-11 * float(np.abs(inv).max())
    s = W.sum(axis=1)
    inv_nn = bool((inv >= -tol).all())
    cpl_nn = bool((W >= -tol).all())
    inv_pos = bool((inv > tol).all())
    cpl_pos = bool((W > tol).all())
    rs = _rowsum_class(s, ROWSUM_TOL)
    strict = inv_pos and cpl_pos
    dwmp = inv_nn and cpl_nn and rs != "mixed"
    return MatrixPrincipleReport(
        tol=tol, exact_computed=True, inverse_nonneg=inv_nn, coupling_nonneg=cpl_nn,
        inverse_positive=inv_pos, coupling_positive=cpl_pos, rowsum=rs,
        rowsum_max=float(s.max()) if s.size else 0.0,
        rowsum_min=float(s.min()) if s.size else 0.0,
        min_inverse_entry=_argmin2(inv), min_coupling_entry=_argmin2(W),
        max_rowsum_row=int(np.argmax(s)) if s.size else None,
        DwMP_K=dwmp, DWMP_K=dwmp and rs == "=1",
        DsMP_K=strict and rs in ("<1", "=1"), DSMP_K=strict and rs == "=1", **base)


@dataclass(frozen=True)
class SolutionPrincipleReport:
    """Solution-level verdicts; a verdict is ``None`` when its hypothesis on ``r`` fails."""

    min_c: float
    max_c: float
    min_cp: float
    max_cp: float
    lower_bound: float
    upper_bound: float
    pct_nodes_below: float
    pct_nodes_above: float
    load_nonpositive: bool
    load_nonnegative: bool
    load_zero: bool
    DwMP: bool | None
    DWMP: bool | None
    NC: bool
    MinMax: bool | None
    argmin: int
    argmax: int
    nodes_below: list[int] = field(default_factory=list)
    nodes_above: list[int] = field(default_factory=list)
    tol: float = 1e-10

    def to_dict(self) -> dict:
        return asdict(self)


def check_solution_principles(sys: AssembledSystem, c: np.ndarray,
                              bounds: tuple[float, float] | None = None,
                              tol: float = 1e-10) -> SolutionPrincipleReport:
    """Check maximum, min-max and non-negativity statements on a solution ``c``.

    ``bounds`` defaults to ``(min c_p, max c_p)`` and drives the violation
    percentages.
    """
    c = np.asarray(c, dtype=float)
    if c.shape != (sys.n_t,):
        raise ValueError(f"solution has length {c.size}, expected {sys.n_t}")
    cp = sys.c_p
    min_cp = float(cp.min()) if cp.size else 0.0
    max_cp = float(cp.max()) if cp.size else 0.0
    lo, hi = (min_cp, max_cp) if bounds is None else (float(bounds[0]), float(bounds[1]))
    rf = sys.r_f
    rscale = max(1.0, float(np.abs(rf).max())) if rf.size else 1.0
    r_np = bool((rf <= 0).all())
    r_nn = bool((rf >= 0).all())
    r_zero = bool((np.abs(rf) <= 1e-14 * rscale).all())
    cmax, cmin = float(c.max()), float(c.min())
    dwmp = cmax <= max(0.0, max_cp) + tol if r_np else None
    dwmp_eq = abs(cmax - max_cp) <= tol if r_np else None
    minmax = (cmin >= min_cp - tol and cmax <= max_cp + tol) if r_zero else None
    below = np.nonzero(c < lo - tol)[0]
    above = np.nonzero(c > hi + tol)[0]
    n = c.size
    return SolutionPrincipleReport(
        min_c=cmin, max_c=cmax, min_cp=min_cp, max_cp=max_cp, lower_bound=lo, upper_bound=hi,
        pct_nodes_below=100.0 * below.size / n, pct_nodes_above=100.0 * above.size / n,
        load_nonpositive=r_np, load_nonnegative=r_nn, load_zero=r_zero,
        DwMP=dwmp, DWMP=dwmp_eq, NC=bool(cmin >= -tol), MinMax=minmax,
        argmin=int(np.argmin(c)), argmax=int(np.argmax(c)),
        nodes_below=below[:_OFFENDER_CAP].tolist(), nodes_above=above[:_OFFENDER_CAP].tolist(),
        tol=tol)


@dataclass(frozen=True, eq=False)
class DCPResult:
    """Outcome of a comparison-principle probe.

    ``consistent`` is False only when the matrix verdict guarantees the
    conclusion and the computed solutions contradict it.
    """

    hypothesis_ok: bool
    conclusion_ok: bool
    principle_used: str
    c1: np.ndarray
    c2: np.ndarray
    min_difference: float
    consistent: bool


def check_dcp(sys: AssembledSystem, r1, r2, cp1, cp2, strict: bool = False,
              matrix_report: MatrixPrincipleReport | None = None,
              tol: float = 1e-10) -> DCPResult:
    """Solve with two data sets and test ``c1 <= c2`` (``c1 < c2`` on free vertices if strict).

    ``r1, r2`` are free-vertex loads and ``cp1, cp2`` prescribed values.
    """
    r1, r2, cp1, cp2 = (np.asarray(a, dtype=float) for a in (r1, r2, cp1, cp2))
    hyp = bool((cp1 <= cp2).all() and (r1 <= r2).all())
    if strict:
        hyp = hyp and bool((r1 < r2).all())
    c1 = solve_system(sys.with_data(r_f=r1, c_p=cp1))
    c2 = solve_system(sys.with_data(r_f=r2, c_p=cp2))
    d = c2 - c1
    dfree = d[sys.free_dofs]
    if strict:
        concl = bool((dfree > tol).all()) and bool((d >= -tol).all())
    else:
        concl = bool((d >= -tol).all())
    mdiff = float(d.min()) if d.size else 0.0
    consistent = True
    used = "DsCP" if strict else "DwCP"
    if matrix_report is not None and matrix_report.exact_computed and hyp:
        guaranteed = matrix_report.DsMP_K if strict else matrix_report.DwMP_K
        if guaranteed and not concl:
            consistent = False
    return DCPResult(hyp, concl, used, c1, c2, mdiff, consistent)


@dataclass(frozen=True, eq=False)
class DwMPWitness:
    """Data ``r_f <= 0`` and ``c_p`` whose solution breaks the weak maximum principle."""

    kind: str
    r_f: np.ndarray
    c_p: np.ndarray
    c: np.ndarray
    bound: float
    excess: float
    node: int


def dwmp_witness(sys: AssembledSystem) -> DwMPWitness | None:
    """Construct a violation of the weak maximum principle, or None if ``K`` satisfies it.

    Uses the most negative entry of ``K_ff^{-1}`` (load ``-e_j``), of
    ``-K_ff^{-1} K_fp`` (boundary data ``-e_j``) or a row sum above one
    (boundary data ``1``), whichever gives the largest excess.
    """
    inv, W = _dense_inverse_and_coupling(sys)
    candidates = []
    i, j = np.unravel_index(np.argmin(inv), inv.shape)
    if inv[i, j] < 0:
        r = np.zeros(sys.n_f)
        r[j] = -1.0
        candidates.append(("inverse", r, np.zeros(sys.n_p)))
    if W.size:
        i, j = np.unravel_index(np.argmin(W), W.shape)
        if W[i, j] < 0:
            cp = np.zeros(sys.n_p)
            cp[j] = -1.0
            candidates.append(("coupling", np.zeros(sys.n_f), cp))
        if W.sum(axis=1).max() > 1.0:
            candidates.append(("rowsum", np.zeros(sys.n_f), np.ones(sys.n_p)))
    best = None
    for kind, r, cp in candidates:
        c = solve_system(sys.with_data(r_f=r, c_p=cp))
        bound = max(0.0, float(cp.max()) if cp.size else 0.0)
        excess = float(c.max()) - bound
        if best is None or excess > best.excess:
            best = DwMPWitness(kind, r, cp, c, bound, excess, int(np.argmax(c)))
    return best
