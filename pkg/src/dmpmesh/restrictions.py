"""Mesh restrictions that make the Galerkin stiffness matrix monotone.

Two angle conditions are checked on triangulations:

* the anisotropic non-obtuse condition, per element and ordered vertex pair
  ``(p, q)``::

      h_p |v| / (3 L) + h_p h_q |alpha| / (12 L) <= cos(beta_pq in metric D^{-1})

  with ``L`` the smallest eigenvalue of the averaged diffusivity;

* the generalized Delaunay condition, per interior edge shared by two
  elements, which bounds the sum of the two opposite metric angles.

Both reduce to classical criteria for ``D = I`` and ``v = alpha = 0``.  The
module also evaluates local feasibility inequalities for single T3/Q4
elements and the mesh and physics based Peclet and Damkohler numbers.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, SingularGeometryError
from .mesh import DEGENERACY_RATIO, Triangulation, check_spd, metric_angle_arrays
from .problem import (CoefficientArrays, ProblemSpec, element_coefficients, epsilon_eta,
                      sym2_eigenvalues, triangle_quadrature)

__all__ = [
    "ANGLE_TOL",
    "AngleConditionReport",
    "T3Feasibility",
    "Q4Feasibility",
    "NondimensionalReport",
    "PhysicsNumbers",
    "check_anisotropic_nonobtuse",
    "check_generalized_delaunay",
    "t3_feasibility",
    "t3_canonical_conditions",
    "q4_closed_form",
    "q4_feasibility",
    "mesh_nondimensional_numbers",
    "physics_numbers",
    "arccot",
]

ANGLE_TOL = 1e-10

_PAIRS = ((0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1))


def arccot(t):
    """Inverse cotangent with range ``(0, pi)``."""
    return 0.5 * np.pi - np.arctan(t)


@dataclass(frozen=True, eq=False)
class AngleConditionReport:
    """Per-item verdicts of an angle condition.

    ``ids`` are element indices (non-obtuse) or interior edges (Delaunay).
    ``margin = rhs - lhs`` and an item passes when ``margin >= -tol``.
    """

    condition: str
    ids: list
    passed: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    margin: np.ndarray
    tol: float
    strategy: str
    notes: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def n_items(self) -> int:
        return int(self.passed.size)

    @property
    def fraction(self) -> float:
        return float(self.passed.mean()) if self.passed.size else 1.0

    @property
    def all_pass(self) -> bool:
        return bool(self.passed.all())

    @property
    def worst(self):
        if not self.passed.size:
            return None
        return self.ids[int(np.argmin(self.margin))]

    @property
    def worst_margin(self) -> float:
        return float(self.margin.min()) if self.margin.size else math.inf

    def summary(self) -> dict:
        w = self.worst
        return {"condition": self.condition, "n_items": self.n_items,
                "n_failed": int((~self.passed).sum()), "fraction_passing": self.fraction,
                "worst": list(w) if isinstance(w, tuple) else w,
                "worst_margin": self.worst_margin if self.passed.size else None,
                "tol": self.tol, "sup_norm_strategy": self.strategy, "notes": list(self.notes)}


_RELAX_NOTE = ("strict lower bound 0 < LHS relaxed to 0 <= LHS so that pure diffusion "
               "(LHS = 0) can pass")
_PUMAX_NOTE = "h_pumax is the second-largest element height"


def _metric_cosines(q: np.ndarray, Dbar: np.ndarray) -> np.ndarray:
    """``cos beta_pq`` in the metric ``D^{-1}`` indexed by the opposite vertex."""
    Dq = np.einsum("nij,nkj->nki", Dbar, q)
    G = np.einsum("nki,nli->nkl", q, Dq)
    nrm = np.sqrt(np.einsum("nkk->nk", G))
    out = np.empty((q.shape[0], 3))
    for r in range(3):
        p, s = [k for k in range(3) if k != r]
        out[:, r] = -G[:, p, s] / (nrm[:, p] * nrm[:, s])
    return out


def _coefficients(tri, spec, coefficients, strategy):
    if coefficients is None:
        coefficients = element_coefficients(spec, tri, strategy=strategy)
    return coefficients


def check_anisotropic_nonobtuse(tri: Triangulation, spec: ProblemSpec, tol: float = ANGLE_TOL,
                                strategy: str = "vertices_quadrature",
                                coefficients: CoefficientArrays | None = None
                                ) -> AngleConditionReport:
    """Anisotropic non-obtuse angle condition on every element.

    The element passes when the inequality holds for all six ordered vertex
    pairs.  ``lhs``/``rhs`` are reported for the worst pair.  The
    single-pair master inequality (largest and second-largest heights) is
    reported in ``extra["master_margin"]``.
    """
    co = _coefficients(tri, spec, coefficients, strategy)
    g = tri.geometry
    h = g["heights"]
    cos = _metric_cosines(g["q"], co.Dbar)
    L = co.lambda_min
    lhs_all = np.empty((tri.n_elements, 6))
    rhs_all = np.empty_like(lhs_all)
    for k, (p, q) in enumerate(_PAIRS):
        lhs_all[:, k] = h[:, p] * co.v_sup / (3 * L) + h[:, p] * h[:, q] * co.alpha_sup / (12 * L)
        rhs_all[:, k] = cos[:, 3 - p - q]
    marg = rhs_all - lhs_all
    worst = np.argmin(marg, axis=1)
    idx = np.arange(tri.n_elements)
    margin = marg[idx, worst]

    order = np.argsort(h, axis=1, kind="stable")
    i_max, j_pu = order[:, 2], order[:, 1]
    pe = h[idx, i_max] * co.v_sup / L
    da = h[idx, i_max] * h[idx, j_pu] * co.alpha_sup / L
    cos_ij = cos[idx, 3 - i_max - j_pu]
    num = pe / 3 + da / 12
    with np.errstate(divide="ignore", invalid="ignore"):
        master = np.where(num == 0, 0.0, np.where(cos_ij > 0, num / cos_ij, np.inf))
    master = np.where((num == 0) & (cos_ij < -tol), np.inf, master)
    return AngleConditionReport(
        condition="anisotropic_nonobtuse", ids=idx.tolist(), passed=margin >= -tol,
        lhs=lhs_all[idx, worst], rhs=rhs_all[idx, worst], margin=margin, tol=tol,
        strategy=co.strategy, notes=[_RELAX_NOTE, _PUMAX_NOTE],
        extra={"master_lhs": master, "master_margin": 1.0 - master,
               "worst_pair": [_PAIRS[k] for k in worst]})


def _edge_local(tri: Triangulation, e: int, p: int, q: int) -> tuple[int, int, int]:
    loc = tri.elements[e].tolist()
    lp, lq = loc.index(p), loc.index(q)
    return lp, lq, 3 - lp - lq


def _metric_cot(E: np.ndarray, Dbar: np.ndarray) -> np.ndarray:
    """Cotangent of each metric angle, indexed by vertex."""
    det = Dbar[:, 0, 0] * Dbar[:, 1, 1] - Dbar[:, 0, 1] ** 2
    inv = np.empty_like(Dbar)
    inv[:, 0, 0] = Dbar[:, 1, 1] / det
    inv[:, 1, 1] = Dbar[:, 0, 0] / det
    inv[:, 0, 1] = inv[:, 1, 0] = -Dbar[:, 0, 1] / det
    e1, e2 = E[:, :, 0], E[:, :, 1]
    cross = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]) / np.sqrt(det)
    pts = [np.zeros_like(e1), e1, e2]
    out = np.empty((E.shape[0], 3))
    for k in range(3):
        a = pts[(k + 1) % 3] - pts[k]
        b = pts[(k + 2) % 3] - pts[k]
        out[:, k] = np.einsum("ni,nij,nj->n", a, inv, b) / cross
    return out


def check_generalized_delaunay(tri: Triangulation, spec: ProblemSpec, tol: float = ANGLE_TOL,
                               strategy: str = "vertices_quadrature",
                               coefficients: CoefficientArrays | None = None
                               ) -> AngleConditionReport:
    """Generalized Delaunay condition on every interior edge.

    For edge ``(p, q)`` shared by elements ``e`` and ``e'`` the checked
    quantity is::

        (b + b')/2 + arccot(sqrt(d'/d) cot b' - 2C/sqrt(d))/2
                   + arccot(sqrt(d/d') cot b - 2C/sqrt(d'))/2  <=  pi

    with ``b, b'`` the opposite metric angles, ``d, d'`` the determinants of
    the averaged diffusivities and
    ``C = |e| (|v|/(3 h_q) + alpha/12) + |e'| (|v'|/(3 h'_q) + alpha'/12)``.
    Both orientations (``h_q`` and ``h_p``) are evaluated; the larger
    left-hand side is reported.
    """
    co = _coefficients(tri, spec, coefficients, strategy)
    edges = tri.interior_edges
    g = tri.geometry
    if not edges:
        empty = np.zeros(0)
        return AngleConditionReport("generalized_delaunay", [], np.zeros(0, dtype=bool), empty,
                                    empty, empty, tol, co.strategy, [_RELAX_NOTE])
    angles = metric_angle_arrays(g["E"], co.Dbar)
    cot = _metric_cot(g["E"], co.Dbar)
    area, h = g["area"], g["heights"]
    n = len(edges)
    e1 = np.empty(n, dtype=np.int64)
    e2 = np.empty(n, dtype=np.int64)
    loc1 = np.empty((n, 3), dtype=np.int64)
    loc2 = np.empty((n, 3), dtype=np.int64)
    for k, (p, q) in enumerate(edges):
        a, b = tri.edge_adjacency[(p, q)]
        e1[k], e2[k] = a, b
        loc1[k] = _edge_local(tri, a, p, q)
        loc2[k] = _edge_local(tri, b, p, q)
    beta1 = angles[e1, loc1[:, 2]]
    beta2 = angles[e2, loc2[:, 2]]
    cot1 = cot[e1, loc1[:, 2]]
    cot2 = cot[e2, loc2[:, 2]]
    sd1, sd2 = np.sqrt(co.det[e1]), np.sqrt(co.det[e2])
    lhs = np.full(n, -np.inf)
    for which in (1, 0):  # h_q then h_p
        c = (area[e1] * (co.v_sup[e1] / (3 * h[e1, loc1[:, which]]) + co.alpha_sup[e1] / 12)
             + area[e2] * (co.v_sup[e2] / (3 * h[e2, loc2[:, which]]) + co.alpha_sup[e2] / 12))
        val = (0.5 * (beta1 + beta2)
               + 0.5 * arccot(sd2 / sd1 * cot2 - 2 * c / sd1)
               + 0.5 * arccot(sd1 / sd2 * cot1 - 2 * c / sd2))
        lhs = np.maximum(lhs, val)
    rhs = np.full(n, np.pi)
    margin = rhs - lhs
    return AngleConditionReport("generalized_delaunay", list(edges), margin >= -tol, lhs, rhs,
                                margin, tol, co.strategy, [_RELAX_NOTE],
                                extra={"elements": np.stack([e1, e2], 1)})


# ---------------------------------------------------------------------------
# Single-element feasibility


@dataclass(frozen=True)
class T3Feasibility:
    """``offdiag_ok`` is ordered as vertex pairs (1,2), (1,3), (2,3)."""

    offdiag_ok: tuple[bool, bool, bool]
    area_ok: bool
    passed: bool
    values: tuple[float, float, float]
    epsilon: float
    eta: float


def t3_feasibility(vertices, Dbar, tol: float = 1e-12) -> T3Feasibility:
    """Sign conditions on the off-diagonal diffusion entries of one triangle.

    Each value is proportional (with a positive factor for counter-clockwise
    vertices) to the stiffness entry of its vertex pair.  Values are scaled by
    the squared longest edge before comparing with ``tol``.
    """
    P = np.asarray(vertices, dtype=float).reshape(3, 2)
    eps, eta = epsilon_eta(check_spd(Dbar, "Dbar"))
    (x1, y1), (x2, y2), (x3, y3) = P
    v12 = ((y1 - y3) * (y3 - y2) - eta * (x1 - x3) * (y3 - y2)
           - eta * (x3 - x2) * (y1 - y3) + eps * (x1 - x3) * (x3 - x2))
    v13 = ((y2 - y1) * (y3 - y2) - eta * (x3 - x2) * (y2 - y1)
           - eta * (x2 - x1) * (y3 - y2) + eps * (x2 - x1) * (x3 - x2))
    v23 = ((y1 - y3) * (y2 - y1) - eta * (x1 - x3) * (y2 - y1)
           - eta * (x2 - x1) * (y1 - y3) + eps * (x1 - x3) * (x2 - x1))
    orient = (x1 - x3) * (y2 - y1) - (x1 - x2) * (y3 - y1)
    scale = max(float(((P[[1, 2, 0]] - P) ** 2).sum(axis=1).max()), np.finfo(float).tiny)
    if abs(orient) <= DEGENERACY_RATIO * scale:
        raise SingularGeometryError("degenerate triangle")
    norm = scale * (1.0 + abs(eta) + eps)
    ok = tuple(bool(v / norm <= tol) for v in (v12, v13, v23))
    area_ok = bool(orient > 0)
    return T3Feasibility(ok, area_ok, all(ok) and area_ok, (float(v12), float(v13), float(v23)),
                         eps, eta)


def t3_canonical_conditions(a: float, b: float, eps: float, eta: float) -> tuple[bool, bool, bool]:
    """Conditions for the triangle (0,0), (1,0), (a,b), b > 0, in pair order (1,2), (1,3), (2,3)."""
    c12 = (a - 0.5) ** 2 + (b / math.sqrt(eps)) ** 2 - 2 * b * (eta / eps) * (a - 0.5) >= 0.25
    c13 = (a - 1) / b <= eta / eps
    c23 = a / b >= eta / eps
    return c12, c13, c23


def q4_closed_form(a: float, b: float, D) -> np.ndarray:
    """Diffusion matrix of the rectangle ``[0,a] x [0,b]`` for constant ``D``.

    Rows follow the counter-clockwise vertex order (0,0), (a,0), (a,b), (0,b).
    """
    D = check_spd(D, "D")
    dxx, dxy, dyy = D[0, 0], D[0, 1], D[1, 1]
    s = b * dxx / a
    t = a * dyy / b
    # tensor-product order (0,0), (a,0), (0,b), (a,b)
    K = np.array([
        [s / 3 + dxy / 2 + t / 3, -s / 3 + t / 6, s / 6 - t / 3, -s / 6 - dxy / 2 - t / 6],
        [-s / 3 + t / 6, s / 3 - dxy / 2 + t / 3, -s / 6 + dxy / 2 - t / 6, s / 6 - t / 3],
        [s / 6 - t / 3, -s / 6 + dxy / 2 - t / 6, s / 3 - dxy / 2 + t / 3, -s / 3 + t / 6],
        [-s / 6 - dxy / 2 - t / 6, s / 6 - t / 3, -s / 3 + t / 6, s / 3 + dxy / 2 + t / 3],
    ])
    perm = [0, 1, 3, 2]
    return K[np.ix_(perm, perm)]


@dataclass(frozen=True)
class Q4Feasibility:
    ratio_ok: bool
    corner_ok: bool
    passed: bool
    max_offdiag: float


def q4_feasibility(a: float, b: float, D, tol: float = 1e-12) -> Q4Feasibility:
    """Non-positivity of all off-diagonal entries of the rectangle's diffusion matrix.

    ``ratio_ok`` is the aspect-ratio window for the edge-neighbour entries and
    ``corner_ok`` covers the two diagonal-neighbour entries.  ``tol`` is
    relative to the largest diagonal entry.
    """
    if not (a > 0 and b > 0):
        raise DomainError("rectangle sides must be positive")
    D = check_spd(D, "D")
    dxx, dxy, dyy = D[0, 0], D[0, 1], D[1, 1]
    K = q4_closed_form(a, b, D)
    scale = float(np.abs(np.diag(K)).max())
    r = a / b
    ratio_ok = math.sqrt(dxx / (2 * dyy)) <= r <= math.sqrt(2 * dxx / dyy)
    s, t = b * dxx / a, a * dyy / b
    corner_ok = (-s / 6 - dxy / 2 - t / 6 <= tol * scale) and (-s / 6 + dxy / 2 - t / 6 <= tol * scale)
    off = K[~np.eye(4, dtype=bool)]
    return Q4Feasibility(bool(ratio_ok), bool(corner_ok), bool((off <= tol * scale).all()),
                         float(off.max()))


# ---------------------------------------------------------------------------
# Nondimensional numbers


@dataclass(frozen=True, eq=False)
class NondimensionalReport:
    """Mesh-based Peclet and Damkohler numbers.

    Element numbers use the largest and second-largest element heights.  Edge
    numbers are given per interior edge for both incident elements, with
    ``h_q`` the height of the edge's larger-index vertex.
    """

    element_peclet: np.ndarray
    element_damkohler: np.ndarray
    element_master_lhs: np.ndarray
    edges: list
    edge_peclet: np.ndarray
    edge_damkohler: np.ndarray
    edge_master_lhs: np.ndarray
    global_peclet: float
    global_damkohler: float
    global_master_lhs: float
    h: float
    strategy: str

    def summary(self) -> dict:
        def stats(a):
            a = np.asarray(a)
            if a.size == 0:
                return {"min": None, "max": None}
            return {"min": float(a.min()), "max": float(a.max())}
        return {
            "h": self.h, "sup_norm_strategy": self.strategy,
            "element_peclet": stats(self.element_peclet),
            "element_damkohler": stats(self.element_damkohler),
            "element_master_lhs": stats(self.element_master_lhs),
            "edge_peclet": stats(self.edge_peclet),
            "edge_damkohler": stats(self.edge_damkohler),
            "edge_master_lhs": stats(self.edge_master_lhs),
            "global_peclet": self.global_peclet, "global_damkohler": self.global_damkohler,
            "global_master_lhs": self.global_master_lhs,
        }


def mesh_nondimensional_numbers(tri: Triangulation, spec: ProblemSpec,
                                strategy: str = "vertices_quadrature",
                                coefficients: CoefficientArrays | None = None
                                ) -> NondimensionalReport:
    co = _coefficients(tri, spec, coefficients, strategy)
    g = tri.geometry
    h = g["heights"]
    idx = np.arange(tri.n_elements)
    order = np.argsort(h, axis=1, kind="stable")
    i_max, j_pu = order[:, 2], order[:, 1]
    L = co.lambda_min
    pe = h[idx, i_max] * co.v_sup / L
    da = h[idx, i_max] * h[idx, j_pu] * co.alpha_sup / L
    cos = _metric_cosines(g["q"], co.Dbar)
    cos_ij = cos[idx, 3 - i_max - j_pu]
    num = pe / 3 + da / 12
    with np.errstate(divide="ignore", invalid="ignore"):
        el_master = np.where(num == 0, 0.0, np.where(cos_ij > 0, num / cos_ij, np.inf))

    edges = tri.interior_edges
    n = len(edges)
    epe = np.zeros((n, 2))
    eda = np.zeros((n, 2))
    emaster = np.zeros(n)
    if n:
        angles = metric_angle_arrays(g["E"], co.Dbar)
        cot = _metric_cot(g["E"], co.Dbar)
        for k, (p, q) in enumerate(edges):
            els = tri.edge_adjacency[(p, q)]
            beta, cots, sd = [], [], []
            for s, e in enumerate(els):
                lp, lq, lr = _edge_local(tri, e, p, q)
                sdet = math.sqrt(co.det[e])
                epe[k, s] = g["area"][e] * co.v_sup[e] / (h[e, lq] * sdet)
                eda[k, s] = g["area"][e] * co.alpha_sup[e] / sdet
                beta.append(angles[e, lr])
                cots.append(cot[e, lr])
                sd.append(sdet)
            t1 = 2 * epe[k, 0] / 3 + eda[k, 0] / 6
            t2 = 2 * epe[k, 1] / 3 + eda[k, 1] / 6
            emaster[k] = (0.5 * (beta[0] + beta[1])
                          + 0.5 * arccot(sd[1] / sd[0] * (cots[1] - t2) - t1)
                          + 0.5 * arccot(sd[0] / sd[1] * (cots[0] - t1) - t2)) / np.pi
    hh = tri.h
    Lmin = float(L.min())
    gpe = hh * float(co.v_sup.max()) / Lmin
    gda = hh * hh * float(co.alpha_sup.max()) / Lmin
    cmin = float(cos_ij.min())
    gnum = gpe / 3 + gda / 12
    gmaster = 0.0 if gnum == 0 else (gnum / cmin if cmin > 0 else math.inf)
    return NondimensionalReport(pe, da, el_master, list(edges), epe, eda, emaster,
                                gpe, gda, gmaster, hh, co.strategy)


@dataclass(frozen=True)
class PhysicsNumbers:
    """Physics-based numbers.

    Variant ``A`` divides by the smallest eigenvalue of ``D(x)`` over the
    domain; variant ``B`` by the geometric mean of the smallest and the
    largest eigenvalue.  ``Da_I`` is ``None`` when the velocity vanishes.
    """

    V: float
    A: float
    L: float
    lambda_min: float
    lambda_max: float
    Pe_A: float
    Da_II_A: float
    Pe_B: float
    Da_II_B: float
    Da_I: float | None
    n_samples: int

    def to_dict(self) -> dict:
        return asdict(self)


def physics_numbers(spec: ProblemSpec, tri: Triangulation) -> PhysicsNumbers:
    """Physics-based Peclet and Damkohler numbers sampled on ``tri``.

    Coefficient extrema are taken over the mesh vertices and the 3-point
    quadrature points of every element; velocities use the max-norm.
    """
    bary, _ = triangle_quadrature(3)
    qp = np.einsum("qk,nkd->nqd", bary, tri.vertices[tri.elements]).reshape(-1, 2)
    pts = np.vstack([tri.vertices, qp])
    V = float(np.abs(spec.velocity(pts)).max())
    a = spec.reaction(pts)
    if (a < 0).any():
        raise DomainError("reaction coefficient alpha is negative")
    A = float(np.abs(a).max())
    lmin, lmax = sym2_eigenvalues(spec.diffusivity.evaluate(pts))
    if not (lmin > 0).all():
        raise DomainError("diffusivity is not positive definite at a sample point")
    L = spec.length
    dA = float(lmin.min())
    dB = math.sqrt(dA * float(lmax.max()))
    pe_a, pe_b = V * L / dA, V * L / dB
    da2_a, da2_b = A * L * L / dA, A * L * L / dB
    da1 = A * L / V if V > 0 else None
    return PhysicsNumbers(V, A, L, dA, float(lmax.max()), pe_a, da2_a, pe_b, da2_b, da1,
                          int(pts.shape[0]))
