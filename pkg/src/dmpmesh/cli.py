"""Command-line front end.

Exit codes: 0 success or all checks pass, 1 a mesh check failed or the
adaptation did not converge, 2 input error, 3 numerical or backend error.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys
from importlib import metadata

import click
import numpy as np

from . import parallel
from .adapt import (AdaptConfig, ThetaPolicy, adapt_mesh, export_metric, write_history_csv)
from .assembly import assemble, solve_system
from .errors import BackendError, InputError, NumericalError
from .mesh import Triangulation, load_mesh, write_msh2, write_node_ele
from .postprocess import (balance_errors, export_vtk, recover_flux, table_row, write_table_csv)
from .principles import DENSE_CAP, check_matrix_principles, check_solution_principles
from .problem import element_coefficients, load_problem
from .restrictions import (check_anisotropic_nonobtuse, check_generalized_delaunay,
                           mesh_nondimensional_numbers, physics_numbers)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("dmpmesh")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return x


def dumps_report(doc: dict) -> str:
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _mesh_files(path: str) -> list[str]:
    if path.endswith(".msh"):
        return [path]
    stem = path[:-5] if path.endswith((".node", ".ele")) else path
    return [p for p in (stem + ".node", stem + ".ele") if os.path.exists(p)]


def run_manifest(command: str, inputs: dict[str, str], spec, config: dict) -> dict:
    """Inputs, hashes and configuration of a run.

    The timestamp is ``SOURCE_DATE_EPOCH`` when set, otherwise the newest
    modification time of the input files, so repeated runs agree.
    """
    files = {}
    for key, p in inputs.items():
        for f in _mesh_files(p) if key == "mesh" else [p]:
            files[f] = _sha256(f)
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        ts = int(epoch)
    else:
        ts = int(max((os.stat(f).st_mtime for f in files), default=0))
    stamp = _dt.datetime.fromtimestamp(ts, _dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return {"command": command, "inputs": dict(inputs), "input_sha256": files,
            "spec_hash": spec.digest() if spec is not None else None,
            "config": config, "tool_version": _version(), "timestamp": stamp}


def _write_report(out: str, name: str, manifest: dict, body: dict) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "manifest": manifest, **body}
    path = os.path.join(out, name)
    with open(path, "w") as fh:
        fh.write(dumps_report(doc))
    return path


def _setup_logging() -> None:
    level = os.environ.get("DMPMESH_LOG", "WARNING").upper()
    lvl = int(level) if level.isdigit() else getattr(logging, level, logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=lvl, format="%(levelname)s %(name)s: %(message)s")


def _parse_bounds(text: str | None):
    if text is None:
        return None
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError as exc:
        raise click.BadParameter("expected 'lo,hi'", param_hint="--bounds") from exc
    if lo > hi:
        raise click.BadParameter("lower bound exceeds upper bound", param_hint="--bounds")
    return lo, hi


def _load(mesh: str, spec: str | None):
    tri = load_mesh(mesh)
    if not isinstance(tri, Triangulation):
        raise InputError("only triangular meshes are supported by the command line")
    problem = load_problem(spec) if spec is not None else None
    return tri, problem


def _common(f):
    f = click.option("--threads", type=click.IntRange(1), default=None,
                     help="Worker threads; results do not depend on it.")(f)
    f = click.option("--out", "out", type=click.Path(file_okay=False), required=True,
                     help="Output directory.")(f)
    f = click.option("--spec", "spec", type=click.Path(exists=True, dir_okay=False),
                     required=True, help="Problem JSON file.")(f)
    f = click.option("--mesh", "mesh", type=click.Path(exists=True, dir_okay=False),
                     required=True, help="Mesh file (.msh or .node/.ele).")(f)
    return f


def _prepare(out: str, threads: int | None) -> None:
    os.makedirs(out, exist_ok=True)
    if threads is not None:
        parallel.set_threads(threads)


@click.group()
@click.version_option(_version(), prog_name="dmpmesh")
def cli():
    """Discrete maximum principle checks, solves and mesh adaptation."""


@cli.command("solve")
@_common
@click.option("--bounds", default=None, help="Bounds 'lo,hi' for the violation count.")
def cmd_solve(mesh, spec, out, threads, bounds):
    """Assemble, solve and report principle verdicts."""
    _prepare(out, threads)
    bnds = _parse_bounds(bounds)
    tri, problem = _load(mesh, spec)
    sysm = assemble(problem, tri)
    c = solve_system(sysm)
    sol = check_solution_principles(sysm, c, bounds=bnds)
    mat = check_matrix_principles(sysm, mesh=tri) if sysm.n_f <= DENSE_CAP else None
    q = recover_flux(sysm, c, tri, problem)
    bal = balance_errors(tri, problem, c, q)
    export_vtk(tri, os.path.join(out, "solution.vtk"),
               point_data={"concentration": c, "flux": q, "marker": tri.vertex_markers},
               cell_data={"balance_error": bal.local})
    row = table_row(tri, sol)
    write_table_csv(os.path.join(out, "table.csv"), [row])
    manifest = run_manifest("solve", {"mesh": mesh, "spec": spec}, problem,
                            {"bounds": list(bnds) if bnds else None, "dense_cap": DENSE_CAP})
    _write_report(out, "report.json", manifest, {
        "mesh": {"Nv": tri.n_vertices, "Nele": tri.n_elements, "h": tri.h,
                 "n_free": sysm.n_f, "n_prescribed": sysm.n_p},
        "solution_principles": sol.to_dict(),
        "matrix_principles": mat.to_dict() if mat is not None else None,
        "balance": bal.summary(), "table_row": row})
    click.echo(f"NC={sol.NC} DwMP={sol.DwMP} min_c={sol.min_c:.6g} max_c={sol.max_c:.6g}")
    return EXIT_OK


def _edge_margin_per_element(tri: Triangulation, report) -> np.ndarray:
    out = np.full(tri.n_elements, np.inf)
    for key, m in zip(report.ids, report.margin):
        for e in tri.edge_adjacency[tuple(key)]:
            out[e] = min(out[e], m)
    return np.where(np.isfinite(out), out, 0.0)


@cli.command("check-mesh")
@_common
@click.option("--criterion", type=click.Choice(["nonobtuse", "delaunay"]), default="nonobtuse",
              show_default=True)
def cmd_check_mesh(mesh, spec, out, threads, criterion):
    """Check an angle condition; exit 1 when any element or edge fails."""
    _prepare(out, threads)
    tri, problem = _load(mesh, spec)
    co = element_coefficients(problem, tri)
    if criterion == "nonobtuse":
        rep = check_anisotropic_nonobtuse(tri, problem, coefficients=co)
        cell = rep.margin
    else:
        rep = check_generalized_delaunay(tri, problem, coefficients=co)
        cell = _edge_margin_per_element(tri, rep)
    export_vtk(tri, os.path.join(out, "margins.vtk"), cell_data={f"{criterion}_margin": cell})
    failed = [w for w, ok in zip(rep.ids, rep.passed) if not ok]
    manifest = run_manifest("check-mesh", {"mesh": mesh, "spec": spec}, problem,
                            {"criterion": criterion, "tol": rep.tol})
    _write_report(out, "report.json", manifest,
                  {"check": rep.summary(), "failed": failed[:1000]})
    click.echo(f"{criterion}: {rep.fraction:.6f} passing, worst margin {rep.worst_margin:.6g}"
               if rep.n_items else f"{criterion}: no items to check")
    return EXIT_OK if rep.all_pass else EXIT_FAIL


@cli.command("adapt")
@_common
@click.option("--criterion", type=click.Choice(["nonobtuse", "delaunay"]), default="nonobtuse",
              show_default=True)
@click.option("--backend", default="builtin", show_default=True,
              help="'builtin' or 'external:<command template>'.")
@click.option("--max-iters", type=click.IntRange(1), default=50, show_default=True)
@click.option("--theta", type=float, default=None, help="Constant metric scale (default 1).")
@click.option("--target-count", type=float, default=None,
              help="Choose a uniform metric scale from a target element count.")
def cmd_adapt(mesh, spec, out, threads, criterion, backend, max_iters, theta, target_count):
    """Iterate metric remeshing until the angle condition holds."""
    _prepare(out, threads)
    if theta is not None and target_count is not None:
        raise click.UsageError("--theta and --target-count are mutually exclusive")
    policy = (ThetaPolicy("target_count", target_count) if target_count is not None
              else ThetaPolicy("constant", 1.0 if theta is None else theta))
    tri, problem = _load(mesh, spec)
    problem.dirichlet_values(tri)
    stop = "anisotropic_nonobtuse" if criterion == "nonobtuse" else "generalized_delaunay"
    cfg = AdaptConfig(max_iters=max_iters, stop_crit=stop, theta_policy=policy, backend=backend,
                      workdir=os.path.join(out, "backend") if backend != "builtin" else None)
    res = adapt_mesh(tri, problem, cfg)
    write_node_ele(res.mesh, os.path.join(out, "mesh"))
    write_msh2(res.mesh, os.path.join(out, "mesh.msh"))
    export_metric(res.metric, None, os.path.join(out, "metric.mtr"), "bamg_mtr")
    write_history_csv(res, os.path.join(out, "history.csv"))
    manifest = run_manifest("adapt", {"mesh": mesh, "spec": spec}, problem,
                            {"criterion": criterion, "backend": backend, "max_iters": max_iters,
                             "theta_policy": {"kind": policy.kind, "value": policy.value}})
    _write_report(out, "report.json", manifest, {
        "converged": res.converged, "iterations": res.iterations, "history": res.history,
        "final_mesh": {"Nv": res.mesh.n_vertices, "Nele": res.mesh.n_elements, "h": res.mesh.h},
        "check": res.report.summary()})
    click.echo(f"converged={res.converged} iterations={res.iterations} "
               f"Nele={res.mesh.n_elements}")
    return EXIT_OK if res.converged else EXIT_FAIL


@cli.command("numbers")
@_common
def cmd_numbers(mesh, spec, out, threads):
    """Report Peclet and Damkohler numbers."""
    _prepare(out, threads)
    tri, problem = _load(mesh, spec)
    problem.dirichlet_values(tri)
    nd = mesh_nondimensional_numbers(tri, problem)
    ph = physics_numbers(problem, tri)
    manifest = run_manifest("numbers", {"mesh": mesh, "spec": spec}, problem, {})
    body = {"mesh_numbers": nd.summary(), "physics_numbers": ph.to_dict()}
    _write_report(out, "report.json", manifest, body)
    click.echo(dumps_report(body), nl=False)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    """Entry point returning the process exit code."""
    _setup_logging()
    try:
        rc = cli.main(args=argv, prog_name="dmpmesh", standalone_mode=False)
    except click.exceptions.Exit as exc:
        rc = exc.exit_code
    except click.ClickException as exc:
        exc.show()
        rc = EXIT_INPUT if exc.exit_code == 2 else exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        rc = EXIT_INPUT
    except InputError as exc:
        click.echo(f"input error: {exc}", err=True)
        rc = EXIT_INPUT
    except BackendError as exc:
        click.echo(f"backend error: {exc}", err=True)
        if exc.output:
            click.echo(exc.output, err=True)
        rc = EXIT_NUMERIC
    except NumericalError as exc:
        click.echo(f"numerical error: {exc}", err=True)
        rc = EXIT_NUMERIC
    except OSError as exc:
        click.echo(f"I/O error: {exc}", err=True)
        rc = EXIT_INPUT
    if argv is None:
        sys.exit(rc if isinstance(rc, int) else 0)
    return rc if isinstance(rc, int) else 0


if __name__ == "__main__":
    main()
