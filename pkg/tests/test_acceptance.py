"""Acceptance suite.

Each criterion is a function returning a ``Criterion`` with a pass flag, a
one-line detail and a deterministic report (no timings).  Running this file
as a script prints one PASS/FAIL line per criterion; under pytest each
criterion is a test that prints the same line.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

import oracles  # noqa: E402
from dmpmesh import parallel  # noqa: E402
from dmpmesh.adapt import AdaptConfig, ThetaPolicy, adapt_mesh  # noqa: E402
from dmpmesh.assembly import (AssembledSystem, assemble, local_stiffness_q4,  # noqa: E402
                              local_stiffness_t3, solve_system)
from dmpmesh.cli import dumps_report, main as cli_main  # noqa: E402
from dmpmesh.mesh import (QuadMesh, Triangulation, equilateral_patch, load_mesh,  # noqa: E402
                          perturb_interior, structured_quads, structured_rectangle,
                          structured_rectangle_with_hole, write_node_ele)
from dmpmesh.postprocess import balance_errors, recover_flux  # noqa: E402
from dmpmesh.principles import (check_dcp, check_matrix_principles,  # noqa: E402
                                check_solution_principles, classify_dominance, dwmp_witness)
from dmpmesh.problem import (DiffusivityField, ProblemSpec, ScalarField,  # noqa: E402
                             VectorField)
from dmpmesh.restrictions import (check_anisotropic_nonobtuse,  # noqa: E402
                                  check_generalized_delaunay, mesh_nondimensional_numbers,
                                  physics_numbers, q4_feasibility, t3_feasibility)

I2 = np.eye(2)


@dataclass
class Criterion:
    number: int
    title: str
    ok: bool
    detail: str
    report: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return (f"CRITERION {self.number:2d} {'PASS' if self.ok else 'FAIL'}  {self.title}: "
                f"{self.detail} [{self.seconds:.2f}s]")


def _timed(fn):
    def run(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        limit = res.report.get("runtime_limit_s")
        if limit is not None and res.seconds > limit:
            res.ok = False
            res.detail += f"; runtime {res.seconds:.1f}s exceeds {limit}s"
        return res
    run.__name__ = fn.__name__
    return run


def _single(P) -> Triangulation:
    return Triangulation(np.asarray(P, float), np.array([[0, 1, 2]]))


def _const_spec(D=I2, v=(0.0, 0.0), alpha=0.0, **kw) -> ProblemSpec:
    return ProblemSpec(DiffusivityField.constant(np.asarray(D, float)),
                       velocity=VectorField.constant(*v), reaction=alpha, **kw)


# ---------------------------------------------------------------------------


@_timed
def criterion_1() -> Criterion:
    tri = _single([(0, 0), (1, 0), (0, 1)])
    K = local_stiffness_t3(_const_spec(), tri, 0).diffusion
    want = np.array([[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])
    err_t3 = float(np.abs(K - want).max())
    qm = structured_quads(1, 1)
    Kq = local_stiffness_q4(_const_spec(), qm, 0).diffusion
    # CCW nodes: edge neighbours -1/6, opposite corner -1/3, diagonal 2/3
    wq = np.array([[2 / 3, -1 / 6, -1 / 3, -1 / 6], [-1 / 6, 2 / 3, -1 / 6, -1 / 3],
                   [-1 / 3, -1 / 6, 2 / 3, -1 / 6], [-1 / 6, -1 / 3, -1 / 6, 2 / 3]])
    err_q4 = float(np.abs(Kq - wq).max())
    ok = err_t3 <= 1e-12 and err_q4 <= 1e-12
    return Criterion(1, "closed-form local matrices", ok,
                     f"max error T3 {err_t3:.1e}, Q4 {err_q4:.1e} (tol 1e-12)",
                     {"err_t3": err_t3, "err_q4": err_q4, "runtime_limit_s": 1})


@_timed
def criterion_2() -> Criterion:
    rng = np.random.default_rng(2)
    worst_lap = worst_aniso = 0.0
    for _ in range(1000):
        P = oracles.random_triangle(rng)
        D = oracles.random_spd(rng)
        tri = _single(P)
        KI = local_stiffness_t3(_const_spec(), tri, 0).diffusion
        KD = local_stiffness_t3(_const_spec(D), tri, 0).diffusion
        betaI = oracles.triangle_angles(P)
        betaD = oracles.triangle_angles(P, np.linalg.inv(D))
        sdet = math.sqrt(np.linalg.det(D))
        for p, q in ((0, 1), (0, 2), (1, 2)):
            r = 3 - p - q
            lap = -0.5 / math.tan(betaI[r])
            ani = -0.5 * sdet / math.tan(betaD[r])
            worst_lap = max(worst_lap, abs(KI[p, q] - lap) / max(abs(lap), abs(KI[p, p])))
            worst_aniso = max(worst_aniso, abs(KD[p, q] - ani) / max(abs(ani), abs(KD[p, p])))
    ok = worst_lap <= 1e-9 and worst_aniso <= 1e-9
    return Criterion(2, "cotangent and metric identities", ok,
                     f"1000 triangles, worst relative error {worst_lap:.1e} / {worst_aniso:.1e}",
                     {"worst_laplacian": worst_lap, "worst_anisotropic": worst_aniso,
                      "runtime_limit_s": 5})


@_timed
def criterion_3() -> Criterion:
    rng = np.random.default_rng(3)
    mism_t3 = n_pass_t3 = 0
    for _ in range(1000):
        P = oracles.random_triangle(rng)
        D = oracles.random_spd(rng, 1e2)
        feas = t3_feasibility(P, D)
        K = local_stiffness_t3(_const_spec(D), _single(P), 0).diffusion
        off = K[~np.eye(3, dtype=bool)]
        mism_t3 += feas.passed != bool((off <= 1e-12).all())
        n_pass_t3 += feas.passed
    mism_q4 = n_pass_q4 = 0
    for _ in range(1000):
        a, b = 10 ** rng.uniform(-0.7, 0.7, 2)
        D = oracles.random_spd(rng, 10)
        feas = q4_feasibility(a, b, D)
        qm = QuadMesh(np.array([[0, 0], [a, 0], [a, b], [0, b]]), np.array([[0, 1, 2, 3]]))
        K = local_stiffness_q4(_const_spec(D), qm, 0).diffusion
        off = K[~np.eye(4, dtype=bool)]
        mism_q4 += feas.passed != bool((off <= 1e-12).all())
        n_pass_q4 += feas.passed
    ok = mism_t3 == 0 and mism_q4 == 0
    return Criterion(3, "checker-assembly equivalence", ok,
                     f"mismatches T3 {mism_t3}/1000 ({n_pass_t3} feasible), "
                     f"Q4 {mism_q4}/1000 ({n_pass_q4} feasible)",
                     {"mismatch_t3": mism_t3, "mismatch_q4": mism_q4, "feasible_t3": n_pass_t3,
                      "feasible_q4": n_pass_q4, "runtime_limit_s": 10})


@_timed
def criterion_4() -> Criterion:
    tri = structured_rectangle(16, 16)
    rows = {}
    for alpha in (0.0, 1.0):
        s = assemble(_const_spec(alpha=alpha), tri)
        dom = classify_dominance(s.K_ff)
        rep = check_matrix_principles(s, mesh=tri)
        rows[str(alpha)] = {"n_f": s.n_f, "z_matrix": dom.z_matrix,
                            "weakly_dominant": dom.weakly_dominant,
                            "n_positive_offdiagonals": dom.n_positive_offdiagonals,
                            "inverse_nonneg": rep.inverse_nonneg, "DwMP_K": rep.DwMP_K,
                            "DWMP_K": rep.DWMP_K}
    r0, r1 = rows["0.0"], rows["1.0"]
    ok0 = (r0["n_f"] == 225 and r0["z_matrix"] and r0["weakly_dominant"]
           and r0["inverse_nonneg"] and r0["DwMP_K"] and r0["DWMP_K"])
    ok1 = r1["z_matrix"] and r1["weakly_dominant"] and r1["inverse_nonneg"] and r1["DwMP_K"]
    detail = (f"alpha=0: Z={r0['z_matrix']} weak={r0['weakly_dominant']} "
              f"inv>=0={r0['inverse_nonneg']} DwMP_K={r0['DwMP_K']} DWMP_K={r0['DWMP_K']}; "
              f"alpha=1: Z={r1['z_matrix']} ({r1['n_positive_offdiagonals']} positive "
              f"off-diagonals from the consistent reaction mass) weak={r1['weakly_dominant']} "
              f"inv>=0={r1['inverse_nonneg']} DwMP_K={r1['DwMP_K']}")
    return Criterion(4, "M-matrix sufficiency", ok0 and ok1, detail,
                     {"rows": rows, "runtime_limit_s": 30})


def _hole_problem():
    D = DiffusivityField.rotation_eigen(1000.0, 1.0, math.pi / 3)
    return ProblemSpec(D, dirichlet={5: 1.0, "*": 0.0})


@_timed
def criterion_5() -> Criterion:
    tri = structured_rectangle_with_hole(12, 12, hole=(4, 8, 4, 8))
    spec = _hole_problem()
    iso = check_anisotropic_nonobtuse(tri, ProblemSpec(DiffusivityField.isotropic(1.0)))
    aniso = check_anisotropic_nonobtuse(tri, spec)
    s = assemble(spec, tri)
    rep = check_matrix_principles(s, mesh=tri)
    w = dwmp_witness(s)
    # independent re-solve of the witness data
    Kff, Kfp = s.K_ff.toarray(), s.K_fp.toarray()
    cf = np.linalg.solve(Kff, w.r_f - Kfp @ w.c_p)
    excess = float(max(cf.max(), w.c_p.max())) - max(0.0, float(w.c_p.max()))
    ok = (rep.DwMP_K is False and bool((w.r_f <= 0).all()) and excess > 1e-6
          and iso.all_pass and not aniso.all_pass)
    return Criterion(5, "DMP necessity witness", ok,
                     f"Euclidean non-obtuse {iso.fraction:.2f}, metric non-obtuse "
                     f"{aniso.fraction:.2f}, DwMP_K={rep.DwMP_K}, witness '{w.kind}' exceeds "
                     f"max(0, max c_p) by {excess:.3e}",
                     {"DwMP_K": rep.DwMP_K, "witness_kind": w.kind, "excess": excess,
                      "euclidean_fraction": iso.fraction, "metric_fraction": aniso.fraction})


def _dcp_systems():
    out = {"2x2": AssembledSystem.from_blocks([[2, -1], [-1, 2]], [[-1, 0], [0, -1]])}
    out["t3_16x16_alpha0"] = assemble(_const_spec(), structured_rectangle(16, 16))
    out["equilateral_adr"] = assemble(_const_spec(v=(0.5, 0.2), alpha=1.0),
                                      equilateral_patch(8, 8, 1.0 / 8))
    out["q4_8x8"] = assemble(_const_spec(), structured_quads(8, 8))
    return out


@_timed
def criterion_6() -> Criterion:
    rng = np.random.default_rng(6)
    per = {}
    all_ok = True
    for name, s in _dcp_systems().items():
        ref = oracles.dense_matrix_principles(s.K_ff.toarray(), s.K_fp.toarray())
        monotone = ref["inverse_nonneg"] and ref["coupling_nonneg"]
        fails = 0
        for _ in range(100):
            r1 = rng.normal(size=s.n_f)
            r2 = r1 + rng.uniform(0, 1, s.n_f)
            cp1 = rng.normal(size=s.n_p)
            cp2 = cp1 + rng.uniform(0, 1, s.n_p)
            res = check_dcp(s, r1, r2, cp1, cp2)
            fails += (not res.hypothesis_ok) or (not res.conclusion_ok)
        per[name] = {"monotone": monotone, "violations": fails}
        all_ok &= monotone and fails == 0
    bad = AssembledSystem.from_blocks([[1, -2], [-2, 1]], [[-1, 0], [0, -1]])
    res = check_dcp(bad, [0, 0], [1, 0], [0, 0], [0, 0])
    diff = (res.c2 - res.c1)[:2].tolist()
    counter_ok = res.hypothesis_ok and not res.conclusion_ok and np.allclose(
        diff, [-1 / 3, -2 / 3], atol=1e-12)
    ok = all_ok and counter_ok
    return Criterion(6, "comparison principle round-trip", ok,
                     f"{len(per)} monotone systems x 100 pairs, violations "
                     f"{sum(v['violations'] for v in per.values())}; counterexample c2-c1 = "
                     f"({diff[0]:.4f}, {diff[1]:.4f})",
                     {"systems": per, "counterexample": diff, "runtime_limit_s": 10})


@_timed
def criterion_7() -> Criterion:
    rng = np.random.default_rng(7)
    spec = _const_spec()
    disagree = n_fail = 0
    for _ in range(500):
        while True:
            P = rng.uniform(0, 1, (4, 2))
            t1, t2 = P[[0, 1, 2]], P[[1, 0, 3]]
            if oracles.orient(*t1) <= 0 or oracles.orient(*t2) <= 0:
                continue
            if min(oracles.triangle_angles(t1).min(), oracles.triangle_angles(t2).min()) < 0.02:
                continue
            break
        tri = Triangulation(P, np.array([[0, 1, 2], [1, 0, 3]]))
        rep = check_generalized_delaunay(tri, spec)
        inside = oracles.incircle(P[0], P[1], P[2], P[3]) > 0
        disagree += bool(rep.all_pass) == inside
        n_fail += not rep.all_pass
    return Criterion(7, "Delaunay reduction", disagree == 0,
                     f"500 configurations, {n_fail} non-Delaunay, {disagree} disagreements",
                     {"disagreements": disagree, "non_delaunay": n_fail})


def _write_problem(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh)


@_timed
def criterion_8() -> Criterion:
    with tempfile.TemporaryDirectory() as wd:
        tri = perturb_interior(structured_rectangle(8, 8), 0.35 / 8, seed=8)
        write_node_ele(tri, os.path.join(wd, "bg"))
        _write_problem(os.path.join(wd, "p.json"),
                       {"diffusivity": {"kind": "isotropic", "params": {"d": 1.0}}})
        before = check_generalized_delaunay(tri, _const_spec()).fraction
        out = os.path.join(wd, "out")
        rc = cli_main(["adapt", "--mesh", os.path.join(wd, "bg.node"), "--spec",
                       os.path.join(wd, "p.json"), "--out", out, "--criterion", "delaunay",
                       "--backend", "builtin", "--max-iters", "50", "--theta", "64"])
        with open(os.path.join(out, "report.json")) as fh:
            rep = json.load(fh)
        final = load_mesh(os.path.join(out, "mesh.node"))
    chk = check_generalized_delaunay(final, _const_spec())
    bad_incircle = 0
    for (p, q) in final.interior_edges:
        e1, e2 = final.edge_adjacency[(p, q)]
        t = final.elements[e1].tolist()
        s = [v for v in final.elements[e2] if v not in (p, q)][0]
        P = final.vertices
        bad_incircle += oracles.incircle(P[t[0]], P[t[1]], P[t[2]], P[s]) > 1e-12
    ok = rc == 0 and rep["iterations"] <= 50 and chk.fraction == 1.0 and bad_incircle == 0
    return Criterion(8, "isotropic adaptation convergence", ok,
                     f"exit {rc}, {rep['iterations']} iteration(s), Delaunay edges "
                     f"{before:.3f} -> {chk.fraction:.3f}, in-circle violations {bad_incircle}",
                     {"exit": rc, "iterations": rep["iterations"], "Nele": final.n_elements,
                      "fraction": chk.fraction, "incircle_violations": bad_incircle})


def _aniso_adapted():
    spec = ProblemSpec(DiffusivityField.constant(np.diag([100.0, 1.0])),
                       dirichlet={5: 1.0, "*": 0.0})
    bg = structured_rectangle_with_hole(4, 40, hole=(1, 3, 16, 24))
    res = adapt_mesh(bg, spec, AdaptConfig(max_iters=50, stop_crit="anisotropic_nonobtuse",
                                           theta_policy=ThetaPolicy("constant", 2400.0)))
    return spec, res


@_timed
def criterion_9() -> Criterion:
    spec, res = _aniso_adapted()
    chk = check_anisotropic_nonobtuse(res.mesh, spec)
    s = assemble(spec, res.mesh)
    c = solve_system(s)
    sol = check_solution_principles(s, c)
    mat = check_matrix_principles(s, mesh=res.mesh)
    ok = res.converged and chk.fraction == 1.0 and sol.NC and bool(sol.DwMP) and bool(mat.DwMP_K)
    return Criterion(9, "anisotropic adaptation convergence", ok,
                     f"converged={res.converged} in {res.iterations}, Nele={res.mesh.n_elements}, "
                     f"non-obtuse {chk.fraction:.3f}, min c={sol.min_c:.3e}, NC={sol.NC}, "
                     f"DwMP={sol.DwMP}, DwMP_K={mat.DwMP_K}",
                     {"converged": res.converged, "iterations": res.iterations,
                      "Nele": res.mesh.n_elements, "fraction": chk.fraction, "min_c": sol.min_c,
                      "NC": sol.NC, "DwMP": sol.DwMP, "DwMP_K": mat.DwMP_K,
                      "runtime_limit_s": 120})


def _mesh_family():
    meshes = {}
    for n in (4, 8, 12):
        meshes[f"square{n}"] = structured_rectangle(n, n)
    meshes["aligned4x40"] = structured_rectangle(4, 40)
    meshes["aligned8x80"] = structured_rectangle(8, 80)
    for k in range(5):
        meshes[f"perturbed{k}"] = perturb_interior(structured_rectangle(8, 8), 0.005 + 0.005 * k,
                                                   seed=k)
    for n in (3, 5, 7, 9):
        meshes[f"equilateral{n}"] = equilateral_patch(n, n, 1.0 / n)
    meshes["equilateral_wide"] = equilateral_patch(12, 3, 0.1)
    meshes["equilateral_fine"] = equilateral_patch(16, 16, 1.0 / 16)
    meshes["hole12"] = structured_rectangle_with_hole(12, 12, hole=(4, 8, 4, 8))
    meshes["hole_aligned"] = structured_rectangle_with_hole(4, 40, hole=(1, 3, 16, 24))
    meshes["perturbed_fine"] = perturb_interior(structured_rectangle(16, 16), 0.01, seed=11)
    meshes["adapted"] = _aniso_adapted()[1].mesh
    return meshes


def _regimes():
    return {
        "pure_diffusion": ProblemSpec(DiffusivityField.isotropic(1.0)),
        "adr_isotropic": ProblemSpec(DiffusivityField.isotropic(1.0),
                                     velocity=VectorField.constant(1.0, 0.5), reaction=2.0),
        "anisotropic": ProblemSpec(DiffusivityField.constant(np.diag([100.0, 1.0])),
                                   velocity=VectorField.constant(0.1, 0.0), reaction=0.5),
    }


@_timed
def criterion_10() -> Criterion:
    meshes = _mesh_family()
    table = {}
    counter = n_nonobtuse = 0
    for mname, tri in meshes.items():
        for rname, spec in _regimes().items():
            a = check_anisotropic_nonobtuse(tri, spec)
            d = check_generalized_delaunay(tri, spec)
            table[f"{mname}/{rname}"] = [a.all_pass, d.all_pass]
            n_nonobtuse += a.all_pass
            counter += a.all_pass and not d.all_pass
    ok = counter == 0 and n_nonobtuse > 0 and len(meshes) == 20
    return Criterion(10, "non-obtuse implies Delaunay", ok,
                     f"{len(meshes)} meshes x 3 regimes, {n_nonobtuse} pass non-obtuse, "
                     f"{counter} counterexamples", {"table": table, "counterexamples": counter})


@_timed
def criterion_11() -> Criterion:
    spec = ProblemSpec(DiffusivityField.subsurface([1.0, 1.0], 0.01, 0.1),
                       source=ScalarField.box(0.375, 0.625, 0.375, 0.625, 1.0, 0.0))
    rows = []
    for n in (8, 16, 32):
        tri = structured_rectangle(n, n)
        s = assemble(spec, tri)
        c = solve_system(s)
        q = recover_flux(s, c, tri, spec)
        b = balance_errors(tri, spec, c, q)
        rows.append({"h": 1.0 / n, "abs_max_local": b.abs_max_local,
                     "global": b.global_sum, "global_direct": b.global_direct})
    loc = [r["abs_max_local"] for r in rows]
    glo = [abs(r["global"]) for r in rows]
    ok = loc[0] > loc[1] > loc[2] and glo[0] > glo[1] > glo[2]
    return Criterion(11, "balance-error trend", ok,
                     "local " + " > ".join(f"{x:.2e}" for x in loc)
                     + "; |global| " + " > ".join(f"{x:.2e}" for x in glo),
                     {"rows": rows, "runtime_limit_s": 120})


def _brute_numbers(tri: Triangulation, D, v, alpha):
    D = np.asarray(D, float)
    vn = float(np.linalg.norm(v))
    lmin = float(np.linalg.eigvalsh(D)[0])
    sdet = math.sqrt(np.linalg.det(D))
    Dinv = np.linalg.inv(D)
    pe, da, master = [], [], []
    for el in tri.elements:
        P = tri.vertices[el]
        h = oracles.heights(P)
        order = np.argsort(h, kind="stable")
        i, j = order[2], order[1]
        pe.append(h[i] * vn / lmin)
        da.append(h[i] * h[j] * alpha / lmin)
        beta = oracles.angle_at(P[3 - i - j], P[i], P[j], Dinv)
        master.append((pe[-1] / 3 + da[-1] / 12) / math.cos(beta))
    epe, eda = [], []
    for (p, q) in tri.interior_edges:
        row_pe, row_da = [], []
        for e in tri.edge_adjacency[(p, q)]:
            P = tri.vertices[tri.elements[e]]
            area = 0.5 * abs(oracles.orient(*P))
            hq = oracles.heights(P)[tri.elements[e].tolist().index(q)]
            row_pe.append(area * vn / (hq * sdet))
            row_da.append(area * alpha / sdet)
        epe.append(row_pe)
        eda.append(row_da)
    hmax = max(max(oracles.heights(tri.vertices[el])) for el in tri.elements)
    return {"pe": np.array(pe), "da": np.array(da), "master": np.array(master),
            "epe": np.array(epe), "eda": np.array(eda), "gpe": hmax * vn / lmin,
            "gda": hmax * hmax * alpha / lmin}


@_timed
def criterion_12() -> Criterion:
    rng = np.random.default_rng(12)
    tri = perturb_interior(structured_rectangle(6, 6), 0.03, seed=12)
    worst_id = 0.0
    worst_def = 0.0
    for _ in range(50):
        d = 10 ** rng.uniform(-2, 2)
        V = 10 ** rng.uniform(-2, 2)
        A = 10 ** rng.uniform(-2, 2)
        L = 10 ** rng.uniform(-1, 1)
        ang = rng.uniform(0, 2 * np.pi)
        spec = ProblemSpec(DiffusivityField.isotropic(d),
                           velocity=VectorField.constant(V * math.cos(ang), V * math.sin(ang)),
                           reaction=A, length=L)
        ph = physics_numbers(spec, tri)
        for pe, da2 in ((ph.Pe_A, ph.Da_II_A), (ph.Pe_B, ph.Da_II_B)):
            worst_id = max(worst_id, abs(da2 - pe * ph.Da_I) / da2)
        vinf = V * max(abs(math.cos(ang)), abs(math.sin(ang)))
        for got, want in ((ph.Pe_A, vinf * L / d), (ph.Da_I, A * L / vinf),
                          (ph.Da_II_A, A * L * L / d)):
            worst_def = max(worst_def, abs(got - want) / want)
    worst_mesh = 0.0
    for _ in range(10):
        D = oracles.random_spd(rng, 50)
        v = rng.normal(size=2)
        alpha = float(rng.uniform(0, 5))
        spec = _const_spec(D, tuple(v), alpha)
        rep = mesh_nondimensional_numbers(tri, spec)
        ref = _brute_numbers(tri, D, v, alpha)
        pairs = [(rep.element_peclet, ref["pe"]), (rep.element_damkohler, ref["da"]),
                 (rep.edge_peclet, ref["epe"]), (rep.edge_damkohler, ref["eda"]),
                 (np.array([rep.global_peclet]), np.array([ref["gpe"]])),
                 (np.array([rep.global_damkohler]), np.array([ref["gda"]]))]
        finite = np.isfinite(ref["master"]) & (ref["master"] > 0)
        pairs.append((rep.element_master_lhs[finite], ref["master"][finite]))
        obtuse = ref["master"] < 0
        if not np.isinf(rep.element_master_lhs[obtuse]).all():
            worst_mesh = math.inf
        for got, want in pairs:
            if got.size == 0:
                continue
            worst_mesh = max(worst_mesh, float(np.max(np.abs(got - want) / np.abs(want))))
    ok = worst_id <= 1e-12 and worst_def <= 1e-12 and worst_mesh <= 1e-9
    return Criterion(12, "nondimensional identities", ok,
                     f"identity error {worst_id:.1e}, definition error {worst_def:.1e}, "
                     f"brute-force mesh numbers error {worst_mesh:.1e}",
                     {"identity": worst_id, "definitions": worst_def, "mesh": worst_mesh})


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12]


def _digest(results) -> list[str]:
    return [hashlib.sha256(dumps_report({"n": r.number, "ok": r.ok, "detail": r.detail.split(
        "; runtime")[0], "report": {k: v for k, v in r.report.items()
                                   if k != "runtime_limit_s"}}).encode()).hexdigest()
            for r in results]


def _cli_outputs(wd: str, tag: str) -> dict[str, bytes]:
    tri = structured_rectangle_with_hole(12, 12, hole=(4, 8, 4, 8))
    stem = os.path.join(wd, "hole")
    if not os.path.exists(stem + ".node"):
        write_node_ele(tri, stem)
        _write_problem(os.path.join(wd, "p.json"), {
            "diffusivity": {"kind": "rotation_eigen",
                            "params": {"d_max": 1000.0, "d_min": 1.0, "theta": math.pi / 3}},
            "dirichlet": {"5": 1.0, "*": 0.0}})
        bg = perturb_interior(structured_rectangle(6, 6), 0.04, seed=3)
        write_node_ele(bg, os.path.join(wd, "bg"))
        _write_problem(os.path.join(wd, "iso.json"),
                       {"diffusivity": {"kind": "isotropic", "params": {"d": 1.0}}})
    outs = {}
    runs = [("solve", ["solve", "--mesh", stem + ".node", "--spec", os.path.join(wd, "p.json")]),
            ("check", ["check-mesh", "--mesh", stem + ".node", "--spec",
                       os.path.join(wd, "p.json")]),
            ("numbers", ["numbers", "--mesh", stem + ".node", "--spec",
                         os.path.join(wd, "p.json")]),
            ("adapt", ["adapt", "--mesh", os.path.join(wd, "bg.node"), "--spec",
                       os.path.join(wd, "iso.json"), "--criterion", "delaunay", "--theta", "36"])]
    for name, args in runs:
        out = os.path.join(wd, f"{tag}_{name}")
        cli_main(args + ["--out", out, "--threads", tag.split("_")[0]])
        for f in sorted(os.listdir(out)):
            with open(os.path.join(out, f), "rb") as fh:
                outs[f"{name}/{f}"] = fh.read()
    return outs


def criterion_13(first_run=None) -> Criterion:
    t0 = time.perf_counter()
    saved = parallel.get_threads()
    digests = {}
    try:
        for threads in (1, 4):
            parallel.set_threads(threads)
            digests[threads] = _digest([fn() for fn in CRITERIA])
        if first_run is not None:
            digests["first"] = _digest(first_run)
        with tempfile.TemporaryDirectory() as wd:
            a = _cli_outputs(wd, "1_a")
            b = _cli_outputs(wd, "1_b")
            c = _cli_outputs(wd, "4_c")
    finally:
        parallel.set_threads(saved)
    crit_ok = all(d == digests[1] for d in digests.values())
    differing = [k for k in a if not (a[k] == b.get(k) == c.get(k))]
    ok = crit_ok and not differing and len(a) > 0
    res = Criterion(13, "determinism", ok,
                    f"criteria 1-12 reports identical across runs and threads 1/4: {crit_ok}; "
                    f"{len(a)} CLI output files, differing: {differing or 'none'}",
                    {"criteria_identical": crit_ok, "cli_files": sorted(a),
                     "differing": differing})
    res.seconds = time.perf_counter() - t0
    return res


# ---------------------------------------------------------------------------
# pytest entry points

_RESULTS: dict[int, Criterion] = {}


def _report(capsys, res: Criterion) -> None:
    _RESULTS[res.number] = res
    with capsys.disabled():
        print("\n" + res.line())
    assert res.ok, res.line()


@pytest.mark.parametrize("index", range(12), ids=[f"criterion_{k + 1:02d}" for k in range(12)])
def test_criterion(index, capsys):
    _report(capsys, CRITERIA[index]())


def test_criterion_13_determinism(capsys):
    first = [_RESULTS[k] for k in sorted(_RESULTS)] if len(_RESULTS) == 12 else None
    _report(capsys, criterion_13(first))


if __name__ == "__main__":
    results = [fn() for fn in CRITERIA]
    for r in results:
        print(r.line(), flush=True)
    print(criterion_13(results).line())
