"""Metric construction and the iterative DMP-mesh generation loop.

The element metric is ``M_e = Theta_e * inv(Dbar_e)``.  A mesh that is
uniform in this metric (equilateral, equally sized elements) has metric
angles that satisfy the anisotropic angle conditions for pure diffusion.
Remeshing is delegated to a backend: a self-contained local remesher
(edge split, edge collapse, metric Delaunay flips) or an external program.
"""

from __future__ import annotations

import csv
import heapq
import json
import logging
import math
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BackendError, ConfigurationError, DomainError, InputError, ValidationError
from .mesh import DEGENERACY_RATIO, Triangulation, _fmt, load_mesh, write_msh2
from .problem import CoefficientArrays, ProblemSpec, element_coefficients
from .restrictions import (ANGLE_TOL, AngleConditionReport, check_anisotropic_nonobtuse,
                           check_generalized_delaunay)

__all__ = [
    "ThetaPolicy",
    "MetricField",
    "AdaptConfig",
    "AdaptResult",
    "RemeshResult",
    "UniformityResiduals",
    "build_metric",
    "vertex_metrics",
    "log_euclidean_mean",
    "uniformity_residuals",
    "metric_edge_length",
    "builtin_remesh",
    "external_remesh",
    "adapt_mesh",
    "export_metric",
    "import_metric",
    "write_history_csv",
    "STOP_CRITERIA",
]

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
FLIP_TOL = 1e-12
STOP_CRITERIA = ("anisotropic_nonobtuse", "generalized_delaunay")
_REF_INV = np.linalg.inv(np.array([[1.0, 0.5], [0.0, math.sqrt(3.0) / 2]]))


# ---------------------------------------------------------------------------
# SPD matrix helpers


def _sym_log(M: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(M)
    if (w <= 0).any():
        raise DomainError("metric is not positive definite")
    return np.einsum("...ij,...j,...kj->...ik", V, np.log(w), V)


def _sym_exp(L: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(L)
    return np.einsum("...ij,...j,...kj->...ik", V, np.exp(w), V)


def log_euclidean_mean(mats, weights=None) -> np.ndarray:
    """Weighted log-Euclidean mean ``exp(sum w_i log M_i / sum w_i)``."""
    A = np.asarray(mats, dtype=float)
    w = np.ones(A.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    L = np.einsum("n,nij->ij", w, _sym_log(A)) / w.sum()
    return _sym_exp(0.5 * (L + L.T))


# ---------------------------------------------------------------------------
# Metric


@dataclass(frozen=True)
class ThetaPolicy:
    """Scale of the metric.

    ``constant`` uses ``value`` as Theta on every element; ``target_count``
    picks a uniform Theta with ``sum_e sqrt(det M_e) |e| = value``.
    """

    kind: str = "constant"
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "target_count"):
            raise ConfigurationError(f"unknown theta policy {self.kind!r}")
        if not (self.value > 0 and math.isfinite(self.value)):
            raise ConfigurationError("theta policy value must be positive")


@dataclass(frozen=True, eq=False)
class MetricField:
    element: np.ndarray
    theta: np.ndarray
    vertex: np.ndarray

    @property
    def density(self) -> np.ndarray:
        """``sqrt(det M_e)`` per element."""
        M = self.element
        return np.sqrt(M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] ** 2)


def _inv2(D: np.ndarray) -> np.ndarray:
    det = D[:, 0, 0] * D[:, 1, 1] - D[:, 0, 1] ** 2
    if not (det > 0).all():
        e = int(np.argmin(det))
        raise DomainError(f"averaged diffusivity of element {e} is singular (det = {det[e]:.3e})")
    out = np.empty_like(D)
    out[:, 0, 0] = D[:, 1, 1] / det
    out[:, 1, 1] = D[:, 0, 0] / det
    out[:, 0, 1] = out[:, 1, 0] = -D[:, 0, 1] / det
    return out


def vertex_metrics(tri: Triangulation, element_metric: np.ndarray) -> np.ndarray:
    """Area-weighted log-Euclidean average of the incident element metrics."""
    logs = _sym_log(element_metric) * tri.areas[:, None, None]
    acc = np.zeros((tri.n_vertices, 2, 2))
    wsum = np.zeros(tri.n_vertices)
    for k in range(3):
        np.add.at(acc, tri.elements[:, k], logs)
        np.add.at(wsum, tri.elements[:, k], tri.areas)
    return _sym_exp(acc / wsum[:, None, None])


def build_metric(tri: Triangulation, spec: ProblemSpec, theta_policy: ThetaPolicy | None = None,
                 coefficients: CoefficientArrays | None = None) -> MetricField:
    policy = theta_policy or ThetaPolicy()
    co = coefficients if coefficients is not None else element_coefficients(spec, tri)
    Dinv = _inv2(co.Dbar)
    if policy.kind == "constant":
        theta = policy.value
    else:
        dens = np.sqrt(Dinv[:, 0, 0] * Dinv[:, 1, 1] - Dinv[:, 0, 1] ** 2)
        theta = policy.value / float((dens * tri.areas).sum())
    M = theta * Dinv
    return MetricField(M, np.full(tri.n_elements, theta), vertex_metrics(tri, M))


@dataclass(frozen=True, eq=False)
class UniformityResiduals:
    equidistribution: np.ndarray
    alignment: np.ndarray


def uniformity_residuals(tri: Triangulation, metric: MetricField) -> UniformityResiduals:
    """Equidistribution and alignment residuals per element.

    Equidistribution compares ``sqrt(det M_e) |e|`` with its mean value.
    Alignment is the AM-GM gap ``tr(G)/2 / sqrt(det G) - 1`` of
    ``G = J^T M J`` with ``J`` mapping a unit equilateral triangle onto the
    element; it vanishes exactly for metric-equilateral elements.
    """
    mass = metric.density * tri.areas
    mean = mass.sum() / tri.n_elements
    equi = np.abs(mass - mean) / mean
    J = tri.geometry["E"] @ _REF_INV
    G = np.einsum("nki,nkl,nlj->nij", J, metric.element, J)
    tr = G[:, 0, 0] + G[:, 1, 1]
    det = G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] ** 2
    align = np.maximum(0.5 * tr / np.sqrt(det) - 1.0, 0.0)
    return UniformityResiduals(equi, align)


def metric_edge_length(x0, x1, M0, M1) -> float:
    """Length of segment ``x0 x1`` in the log-Euclidean mean of the end metrics."""
    d = np.asarray(x1, dtype=float) - np.asarray(x0, dtype=float)
    M = log_euclidean_mean([M0, M1])
    return float(math.sqrt(d @ M @ d))


# ---------------------------------------------------------------------------
# Builtin local remesher


@dataclass(frozen=True, eq=False)
class RemeshResult:
    mesh: Triangulation
    complete: bool
    splits: int
    collapses: int
    flips: int


def _edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


class _WorkMesh:
    """Mutable triangle soup with edge and vertex incidence."""

    def __init__(self, tri: Triangulation, vmetric: np.ndarray):
        self.xy = [np.array(p, dtype=float) for p in tri.vertices]
        self.logm = list(_sym_log(vmetric))
        self.metric = [np.array(m) for m in vmetric]
        self.vmark = [int(m) for m in tri.vertex_markers]
        self.bmark = dict(tri.boundary_edge_markers)
        self.fixed = [False] * len(self.xy)
        for v in tri.boundary_vertices:
            self.fixed[v] = True
        self.alive_v = [True] * len(self.xy)
        self.tris: dict[int, tuple[int, int, int]] = {}
        self.edge_tris: dict[tuple[int, int], list[int]] = {}
        self.vert_tris: list[set[int]] = [set() for _ in self.xy]
        self._next = 0
        for t in tri.elements:
            self.add_tri(*(int(x) for x in t))

    # incidence bookkeeping
    def add_tri(self, a: int, b: int, c: int) -> int:
        tid = self._next
        self._next += 1
        self.tris[tid] = (a, b, c)
        for u, w in ((a, b), (b, c), (c, a)):
            self.edge_tris.setdefault(_edge(u, w), []).append(tid)
        for v in (a, b, c):
            self.vert_tris[v].add(tid)
        return tid

    def remove_tri(self, tid: int) -> None:
        a, b, c = self.tris.pop(tid)
        for u, w in ((a, b), (b, c), (c, a)):
            k = _edge(u, w)
            lst = self.edge_tris[k]
            lst.remove(tid)
            if not lst:
                del self.edge_tris[k]
        for v in (a, b, c):
            self.vert_tris[v].discard(tid)

    def add_vertex(self, p, logm, marker: int, fixed: bool) -> int:
        self.xy.append(np.asarray(p, dtype=float))
        self.logm.append(logm)
        self.metric.append(_sym_exp(logm))
        self.vmark.append(marker)
        self.fixed.append(fixed)
        self.alive_v.append(True)
        self.vert_tris.append(set())
        return len(self.xy) - 1

    def mean_metric(self, *vs: int) -> np.ndarray:
        if len(vs) == 2 and vs[0] == vs[1]:
            return self.metric[vs[0]]
        L = sum(self.logm[v] for v in vs) / len(vs)
        return _sym_exp(L)

    def length(self, a: int, b: int) -> float:
        d = self.xy[b] - self.xy[a]
        return float(math.sqrt(d @ self.mean_metric(a, b) @ d))

    def third(self, tid: int, a: int, b: int) -> int:
        for v in self.tris[tid]:
            if v != a and v != b:
                return v
        raise AssertionError("edge not in triangle")

    def ordered(self, tid: int, a: int, b: int) -> tuple[int, int, int]:
        """Rotate triangle so that the shared edge comes first in CCW order."""
        t = self.tris[tid]
        for k in range(3):
            u, w, c = t[k], t[(k + 1) % 3], t[(k + 2) % 3]
            if {u, w} == {a, b}:
                return u, w, c
        raise AssertionError("edge not in triangle")

    def neighbours(self, v: int) -> set[int]:
        out: set[int] = set()
        for t in self.vert_tris[v]:
            out.update(self.tris[t])
        out.discard(v)
        return out

    def positive(self, a: int, b: int, c: int) -> bool:
        pa, pb, pc = self.xy[a], self.xy[b], self.xy[c]
        det = _cross(pa, pb, pc)
        scale = max(float((pb - pa) @ (pb - pa)), float((pc - pb) @ (pc - pb)),
                    float((pa - pc) @ (pa - pc)))
        return det > 1e3 * DEGENERACY_RATIO * scale

    # operations
    def split(self, a: int, b: int) -> int:
        key = _edge(a, b)
        tids = list(self.edge_tris[key])
        on_boundary = key in self.bmark
        marker = self.bmark.pop(key, 0)
        m = self.add_vertex(0.5 * (self.xy[a] + self.xy[b]), 0.5 * (self.logm[a] + self.logm[b]),
                            marker, on_boundary)
        if on_boundary:
            self.bmark[_edge(a, m)] = marker
            self.bmark[_edge(m, b)] = marker
        for tid in tids:
            u, w, c = self.ordered(tid, a, b)
            self.remove_tri(tid)
            self.add_tri(u, m, c)
            self.add_tri(m, w, c)
        return m

    def try_collapse(self, a: int, b: int) -> bool:
        """Merge vertex ``a`` into ``b`` when topology and geometry allow."""
        if self.fixed[a]:
            return False
        shared = self.edge_tris.get(_edge(a, b), [])
        if len(shared) != 2:
            return False
        opposite = {self.third(t, a, b) for t in shared}
        if self.neighbours(a) & self.neighbours(b) != opposite:
            return False
        moved = [t for t in self.vert_tris[a] if t not in shared]
        for t in moved:
            tri = tuple(b if v == a else v for v in self.tris[t])
            if not self.positive(*tri):
                return False
        for x in self.neighbours(a):
            if x != b and self.length(b, x) > SQRT2:
                return False
        for t in list(shared):
            self.remove_tri(t)
        for t in moved:
            tri = tuple(b if v == a else v for v in self.tris[t])
            self.remove_tri(t)
            self.add_tri(*tri)
        self.alive_v[a] = False
        return True

    def metric_angle(self, at: int, u: int, w: int, M: np.ndarray) -> float:
        d1 = self.xy[u] - self.xy[at]
        d2 = self.xy[w] - self.xy[at]
        cross = abs(d1[0] * d2[1] - d1[1] * d2[0]) * math.sqrt(np.linalg.det(M))
        return math.atan2(cross, float(d1 @ M @ d2))

    def try_flip(self, key: tuple[int, int]) -> bool:
        tids = self.edge_tris.get(key)
        if tids is None or len(tids) != 2:
            return False
        p, q, r = self.ordered(tids[0], *key)
        s = self.third(tids[1], p, q)
        M = self.mean_metric(p, q, r, s)
        if self.metric_angle(r, p, q, M) + self.metric_angle(s, q, p, M) <= math.pi + FLIP_TOL:
            return False
        if not (self.positive(p, s, r) and self.positive(s, q, r)):
            return False
        for t in list(tids):
            self.remove_tri(t)
        self.add_tri(p, s, r)
        self.add_tri(s, q, r)
        return True

    def to_triangulation(self) -> Triangulation:
        keep = [v for v in range(len(self.xy)) if self.alive_v[v] and self.vert_tris[v]]
        new_id = {v: k for k, v in enumerate(keep)}
        verts = np.array([self.xy[v] for v in keep])
        els = np.array([[new_id[v] for v in self.tris[t]] for t in sorted(self.tris)],
                       dtype=np.int64)
        vmark = np.array([self.vmark[v] for v in keep], dtype=np.int64)
        emark = {_edge(new_id[a], new_id[b]): m for (a, b), m in self.bmark.items()}
        return Triangulation(verts, els, vertex_markers=vmark, boundary_edge_markers=emark)


def builtin_remesh(tri: Triangulation, metric: MetricField | np.ndarray,
                   max_ops: int | None = None, max_passes: int = 20) -> RemeshResult:
    """Local remeshing towards unit metric edge lengths.

    Each pass splits edges longer than ``sqrt(2)`` (longest first), collapses
    interior vertices along edges shorter than ``1/sqrt(2)`` and flips interior
    edges that violate the metric Delaunay criterion.  Boundary vertices never
    move and boundary edges are only subdivided.  ``metric`` is a
    ``MetricField`` or an ``(Nv, 2, 2)`` array of vertex metrics.
    """
    vm = metric.vertex if isinstance(metric, MetricField) else np.asarray(metric, dtype=float)
    if vm.shape != (tri.n_vertices, 2, 2):
        raise ValidationError("vertex metric must have shape (Nv, 2, 2)")
    wm = _WorkMesh(tri, vm)
    budget = max_ops if max_ops is not None else 200_000 + 50 * tri.n_elements
    ops = {"split": 0, "collapse": 0, "flip": 0}
    complete = True

    def spent() -> int:
        return ops["split"] + ops["collapse"] + ops["flip"]

    def flip_all() -> bool:
        queue = list(wm.edge_tris)
        pending = set(queue)
        head = 0
        while head < len(queue):
            if spent() >= budget:
                return False
            key = queue[head]
            head += 1
            pending.discard(key)
            if wm.try_flip(key):
                ops["flip"] += 1
                p, q = key
                for v in (p, q):
                    for t in wm.vert_tris[v]:
                        a, b, c = wm.tris[t]
                        for e in (_edge(a, b), _edge(b, c), _edge(c, a)):
                            if e not in pending and len(wm.edge_tris.get(e, ())) == 2:
                                pending.add(e)
                                queue.append(e)
        return True

    for _ in range(max_passes):
        changed = False
        heap = [(-wm.length(a, b), a, b) for (a, b) in wm.edge_tris]
        heap = [h for h in heap if -h[0] > SQRT2]
        heapq.heapify(heap)
        while heap and spent() < budget:
            _, a, b = heapq.heappop(heap)
            if _edge(a, b) not in wm.edge_tris:
                continue
            m = wm.split(a, b)
            ops["split"] += 1
            changed = True
            for x in wm.neighbours(m):
                ln = wm.length(m, x)
                if ln > SQRT2:
                    heapq.heappush(heap, (-ln, min(m, x), max(m, x)))
        short = sorted((wm.length(a, b), a, b) for (a, b) in wm.edge_tris)
        for ln, a, b in short:
            if ln >= 1 / SQRT2 or spent() >= budget:
                break
            if _edge(a, b) not in wm.edge_tris or not (wm.alive_v[a] and wm.alive_v[b]):
                continue
            if wm.length(a, b) >= 1 / SQRT2:
                continue
            if wm.try_collapse(a, b) or wm.try_collapse(b, a):
                ops["collapse"] += 1
                changed = True
        flips_before = ops["flip"]
        if not flip_all():
            complete = False
            break
        changed = changed or ops["flip"] > flips_before
        if spent() >= budget:
            complete = False
            break
        if not changed:
            break
    else:
        complete = False
    log.debug("builtin remesh: %s", ops)
    return RemeshResult(wm.to_triangulation(), complete, ops["split"], ops["collapse"],
                        ops["flip"])


# ---------------------------------------------------------------------------
# External backend


def external_remesh(tri: Triangulation, metric: MetricField, template: str,
                    workdir: str | os.PathLike | None = None, timeout: float = 600.0
                    ) -> Triangulation:
    """Run an external remesher described by a command template.

    The template may use ``{background_mesh}`` (msh 2.2 file written here),
    ``{metric_file}`` (``.mtr`` vertex metric) and ``{output_mesh}`` (path
    the program must create; ``.msh`` unless the template names another
    suffix).  The command is split with shell rules but not run in a shell.
    """
    own = workdir is None
    wd = tempfile.mkdtemp(prefix="dmpmesh-") if own else os.fspath(workdir)
    os.makedirs(wd, exist_ok=True)
    bg = os.path.join(wd, "background.msh")
    mtr = os.path.join(wd, "background.mtr")
    out = os.path.join(wd, "remeshed.msh")
    write_msh2(tri, bg)
    export_metric(metric, tri, mtr, "bamg_mtr")
    try:
        cmd = template.format(background_mesh=bg, metric_file=mtr, output_mesh=out)
        argv = shlex.split(cmd)
    except (KeyError, IndexError, ValueError) as exc:
        raise BackendError(f"invalid backend command template: {exc}") from exc
    if not argv:
        raise BackendError("empty backend command")
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout, cwd=wd)
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise BackendError(f"backend failed to run: {exc}", output=str(exc)) from exc
    output = (proc.stdout or "") + (proc.stderr or "")
    if proc.returncode != 0:
        raise BackendError(f"backend exited with status {proc.returncode}", output=output)
    if not os.path.exists(out):
        raise BackendError("backend did not produce an output mesh", output=output)
    try:
        return load_mesh(out)
    except InputError as exc:
        raise ValidationError(f"backend produced an invalid mesh: {exc}") from exc


# ---------------------------------------------------------------------------
# Adaptation loop


@dataclass(frozen=True)
class AdaptConfig:
    max_iters: int = 50
    stop_crit: str = "anisotropic_nonobtuse"
    theta_policy: ThetaPolicy = field(default_factory=ThetaPolicy)
    backend: str = "builtin"
    tol: float = ANGLE_TOL
    workdir: str | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be at least 1")
        if self.stop_crit not in STOP_CRITERIA:
            raise ConfigurationError(f"unknown stop criterion {self.stop_crit!r}")
        if not (self.backend == "builtin" or self.backend.startswith("external:")):
            raise ConfigurationError("backend must be 'builtin' or 'external:<template>'")


@dataclass(eq=False)
class AdaptResult:
    mesh: Triangulation
    iterations: int
    converged: bool
    history: list[dict]
    metric: MetricField
    report: AngleConditionReport


def _stop_check(tri: Triangulation, spec: ProblemSpec, crit: str, tol: float
                ) -> AngleConditionReport:
    co = element_coefficients(spec, tri)
    if crit == "anisotropic_nonobtuse":
        return check_anisotropic_nonobtuse(tri, spec, tol=tol, coefficients=co)
    return check_generalized_delaunay(tri, spec, tol=tol, coefficients=co)


def adapt_mesh(tri0: Triangulation, spec: ProblemSpec, config: AdaptConfig | None = None,
               remesher: Callable[[Triangulation, MetricField], Triangulation] | None = None
               ) -> AdaptResult:
    """Iterate metric construction, remeshing and the angle check.

    Each iteration averages the diffusivity on the current mesh, builds the
    metric, remeshes and checks the stop criterion on the new mesh.
    Non-convergence within ``max_iters`` is reported, not raised.
    """
    cfg = config or AdaptConfig()
    current = tri0
    history: list[dict] = []
    result_mesh, metric, report = tri0, None, None
    for it in range(1, cfg.max_iters + 1):
        co = element_coefficients(spec, current)
        metric = build_metric(current, spec, cfg.theta_policy, co)
        complete = True
        if remesher is not None:
            new = remesher(current, metric)
        elif cfg.backend == "builtin":
            rr = builtin_remesh(current, metric)
            new, complete = rr.mesh, rr.complete
        else:
            wd = None if cfg.workdir is None else os.path.join(cfg.workdir, f"iter{it:03d}")
            new = external_remesh(current, metric, cfg.backend[len("external:"):], wd)
        report = _stop_check(new, spec, cfg.stop_crit, cfg.tol)
        history.append({"iter": it, "Nele": new.n_elements, "pass_fraction": report.fraction,
                        "worst_margin": report.worst_margin if report.n_items else 0.0,
                        "remesh_complete": complete})
        log.info("adapt iteration %d: Nele=%d pass=%.4f", it, new.n_elements, report.fraction)
        result_mesh = new
        if report.all_pass:
            return AdaptResult(new, it, True, history, metric, report)
        current = new
    return AdaptResult(result_mesh, cfg.max_iters, False, history, metric, report)


def write_history_csv(result: AdaptResult, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "Nele", "pass_fraction", "worst_margin"])
        for row in result.history:
            w.writerow([row["iter"], row["Nele"], _fmt(row["pass_fraction"]),
                        _fmt(row["worst_margin"])])


# ---------------------------------------------------------------------------
# Metric files


def export_metric(metric: MetricField | np.ndarray, tri: Triangulation | None,
                  path: str | os.PathLike, format: str = "bamg_mtr") -> None:
    """Write per-vertex metrics as ``.mtr`` text or a JSON document."""
    vm = metric.vertex if isinstance(metric, MetricField) else np.asarray(metric, dtype=float)
    if tri is not None and vm.shape[0] != tri.n_vertices:
        raise ValidationError("metric and mesh vertex counts differ")
    rows = [(float(m[0, 0]), float(m[0, 1]), float(m[1, 1])) for m in vm]
    if format == "bamg_mtr":
        with open(path, "w") as fh:
            fh.write(f"{len(rows)} 3\n")
            for r in rows:
                fh.write(" ".join(_fmt(x) for x in r) + "\n")
    elif format == "vertex_json":
        with open(path, "w") as fh:
            json.dump({"format": "vertex_metric", "n_vertices": len(rows),
                       "components": ["m11", "m12", "m22"], "metric": rows}, fh, indent=1)
            fh.write("\n")
    else:
        raise ConfigurationError(f"unknown metric format {format!r}")


def import_metric(path: str | os.PathLike) -> np.ndarray:
    """Read a metric written by ``export_metric`` (either format)."""
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        rows = json.loads(text)["metric"]
    else:
        lines = text.split("\n")
        nv = int(lines[0].split()[0])
        rows = [[float(x) for x in ln.split()] for ln in lines[1:1 + nv]]
    a = np.asarray(rows, dtype=float).reshape(-1, 3)
    out = np.empty((a.shape[0], 2, 2))
    out[:, 0, 0], out[:, 0, 1], out[:, 1, 0], out[:, 1, 1] = a[:, 0], a[:, 1], a[:, 1], a[:, 2]
    return out
