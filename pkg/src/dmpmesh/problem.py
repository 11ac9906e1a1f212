"""Coefficient fields, problem specifications and per-element coefficient data.

The model problem is

    -div(D grad c) + v . grad c + alpha c = f   in the domain,
    c = c_p                                   on the whole boundary,

with ``D`` symmetric positive definite and ``alpha >= 0``.
"""

from __future__ import annotations

import ast
import hashlib
import json
import math
import operator
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import ConfigurationError, DomainError, InputError, ParseError
from .mesh import Triangulation, check_spd

__all__ = [
    "triangle_quadrature",
    "gauss_legendre",
    "compile_expression",
    "ScalarField",
    "VectorField",
    "DiffusivityField",
    "ProblemSpec",
    "ElementCoefficients",
    "CoefficientArrays",
    "eval_diffusivity",
    "element_avg_diffusivity",
    "epsilon_eta",
    "element_sup_norms",
    "element_coefficients",
    "sym2_eigenvalues",
    "problem_from_dict",
    "load_problem",
]


# ---------------------------------------------------------------------------
# Quadrature

_A1, _B1 = 0.059715871789769820, 0.470142064105115089
_A2, _B2 = 0.797426985353087322, 0.101286507323456339
_W1, _W2 = 0.132394152788506181, 0.125939180544827153

_TRI_RULES = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    3: (np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3)),
    7: (np.array([[1 / 3, 1 / 3, 1 / 3],
                  [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
                  [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2]]),
        np.array([0.225, _W1, _W1, _W1, _W2, _W2, _W2])),
}


def triangle_quadrature(npoints: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric Gauss rule on a triangle.

    Returns barycentric points ``(n, 3)`` and weights ``(n,)`` summing to one
    (multiply by the element area).  ``npoints`` is 1, 3 or 7 for exactness
    degree 1, 2 or 5.
    """
    if npoints not in _TRI_RULES:
        raise ValueError(f"triangle quadrature supports 1, 3 or 7 points, got {npoints}")
    pts, w = _TRI_RULES[npoints]
    return pts.copy(), w.copy()


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


# ---------------------------------------------------------------------------
# Expression mini-language

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
          "sqrt": np.sqrt, "abs": np.abs, "atan": np.arctan}
_CONSTS = {"pi": math.pi, "e": math.e}


def compile_expression(text: str) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Compile an arithmetic expression in ``x`` and ``y``.

    Supported: numbers, ``x``, ``y``, ``pi``, ``e``, ``+ - * / ^`` (``**`` too),
    unary minus, parentheses and the functions ``sin cos tan exp log sqrt abs
    atan``.  The result is a vectorized function of coordinate arrays.
    """
    src = str(text).replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ParseError(f"invalid expression {text!r}: {exc.msg}") from None

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            val = float(node.value)
            return lambda x, y: np.full(np.shape(x), val)
        if isinstance(node, ast.Name):
            if node.id == "x":
                return lambda x, y: np.asarray(x, dtype=float)
            if node.id == "y":
                return lambda x, y: np.asarray(y, dtype=float)
            if node.id in _CONSTS:
                val = _CONSTS[node.id]
                return lambda x, y: np.full(np.shape(x), val)
            raise ParseError(f"unknown name {node.id!r} in expression {text!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op, lhs, rhs = _BINOPS[type(node.op)], build(node.left), build(node.right)
            return lambda x, y: op(lhs(x, y), rhs(x, y))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            op, arg = _UNARY[type(node.op)], build(node.operand)
            return lambda x, y: op(arg(x, y))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords:
            fn, arg = _FUNCS[node.func.id], build(node.args[0])
            return lambda x, y: fn(arg(x, y))
        raise ParseError(f"unsupported construct in expression {text!r}")

    return build(tree)


# ---------------------------------------------------------------------------
# Fields


def _as_points(x) -> tuple[np.ndarray, bool]:
    p = np.asarray(x, dtype=float)
    single = p.ndim == 1
    return np.atleast_2d(p), single


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Scalar coefficient field evaluated on ``(n, 2)`` point arrays.

    Use the ``constant``, ``expression``, ``box`` and ``from_callable``
    constructors.
    """

    kind: str
    params: dict
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    @classmethod
    def constant(cls, value: float) -> "ScalarField":
        val = float(value)
        return cls("constant", {"value": val}, lambda p: np.full(p.shape[0], val))

    @classmethod
    def expression(cls, text: str) -> "ScalarField":
        f = compile_expression(text)
        return cls("expression", {"expression": str(text)}, lambda p: f(p[:, 0], p[:, 1]))

    @classmethod
    def box(cls, x0: float, x1: float, y0: float, y1: float, value: float = 1.0,
            outside: float = 0.0) -> "ScalarField":
        """``value`` on the closed box ``[x0, x1] x [y0, y1]``, ``outside`` elsewhere."""
        def f(p):
            inside = (p[:, 0] >= x0) & (p[:, 0] <= x1) & (p[:, 1] >= y0) & (p[:, 1] <= y1)
            return np.where(inside, float(value), float(outside))
        return cls("box", {"box": [float(x0), float(x1), float(y0), float(y1)],
                           "value": float(value), "outside": float(outside)}, f)

    @classmethod
    def from_callable(cls, fn: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        return cls("callable", {}, lambda p: np.asarray(fn(p), dtype=float).reshape(p.shape[0]))

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __call__(self, x) -> np.ndarray | float:
        p, single = _as_points(x)
        out = np.asarray(self.func(p), dtype=float)
        return float(out[0]) if single else out

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


@dataclass(frozen=True, eq=False)
class VectorField:
    """Vector field returning ``(n, 2)`` arrays."""

    kind: str
    params: dict
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    @classmethod
    def constant(cls, vx: float, vy: float) -> "VectorField":
        v = np.array([float(vx), float(vy)])
        return cls("constant", {"value": v.tolist()}, lambda p: np.tile(v, (p.shape[0], 1)))

    @classmethod
    def expression(cls, ex: str, ey: str) -> "VectorField":
        fx, fy = compile_expression(ex), compile_expression(ey)
        return cls("expression", {"expression": [str(ex), str(ey)]},
                   lambda p: np.column_stack([fx(p[:, 0], p[:, 1]), fy(p[:, 0], p[:, 1])]))

    @classmethod
    def from_callable(cls, fn) -> "VectorField":
        return cls("callable", {}, lambda p: np.asarray(fn(p), dtype=float).reshape(p.shape[0], 2))

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __call__(self, x) -> np.ndarray:
        p, single = _as_points(x)
        out = np.asarray(self.func(p), dtype=float)
        return out[0] if single else out

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


def _rotation_tensor(d_max: float, d_min: float, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return R @ np.diag([d_max, d_min]) @ R.T


def _subsurface_tensor(v_ref, alpha_t: float, alpha_l: float) -> np.ndarray:
    v = np.asarray(v_ref, dtype=float)
    nv = float(np.linalg.norm(v))
    return alpha_t * nv * np.eye(2) + (alpha_l - alpha_t) / nv * np.outer(v, v)


@dataclass(frozen=True, eq=False)
class DiffusivityField:
    """Diffusivity tensor field ``D(x)``.

    Kinds: ``constant``, ``rotation_eigen`` (``R diag(d_max, d_min) R^T``),
    ``subsurface`` (``alpha_T |v| I + (alpha_L - alpha_T) v v^T / |v|``) and
    ``callable`` (including component expressions).
    """

    kind: str
    params: dict
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    @classmethod
    def constant(cls, D) -> "DiffusivityField":
        M = check_spd(D, "diffusivity")
        return cls("constant", {"D": M.tolist()}, lambda p: np.broadcast_to(M, (p.shape[0], 2, 2)).copy())

    @classmethod
    def isotropic(cls, d: float) -> "DiffusivityField":
        return cls.constant(float(d) * np.eye(2))

    @classmethod
    def rotation_eigen(cls, d_max: float, d_min: float, theta: float) -> "DiffusivityField":
        if not d_max >= d_min > 0:
            raise DomainError(f"rotation_eigen needs d_max >= d_min > 0, got {d_max}, {d_min}")
        M = _rotation_tensor(float(d_max), float(d_min), float(theta))
        return cls("rotation_eigen",
                   {"d_max": float(d_max), "d_min": float(d_min), "theta": float(theta)},
                   lambda p: np.broadcast_to(M, (p.shape[0], 2, 2)).copy())

    @classmethod
    def subsurface(cls, v_ref, alpha_t: float, alpha_l: float) -> "DiffusivityField":
        v = np.asarray(v_ref, dtype=float)
        if not alpha_l >= alpha_t > 0:
            raise DomainError(f"subsurface needs alpha_L >= alpha_T > 0, got {alpha_l}, {alpha_t}")
        if v.shape != (2,) or not np.linalg.norm(v) > 0:
            raise DomainError("subsurface needs a nonzero 2-vector v_ref")
        M = _subsurface_tensor(v, float(alpha_t), float(alpha_l))
        return cls("subsurface",
                   {"v_ref": v.tolist(), "alpha_T": float(alpha_t), "alpha_L": float(alpha_l)},
                   lambda p: np.broadcast_to(M, (p.shape[0], 2, 2)).copy())

    @classmethod
    def expression(cls, xx: str, xy: str, yy: str) -> "DiffusivityField":
        fxx, fxy, fyy = (compile_expression(s) for s in (xx, xy, yy))

        def f(p):
            a, b, d = (g(p[:, 0], p[:, 1]) for g in (fxx, fxy, fyy))
            return np.stack([np.stack([a, b], -1), np.stack([b, d], -1)], -2)
        return cls("expression", {"xx": str(xx), "xy": str(xy), "yy": str(yy)}, f)

    @classmethod
    def from_callable(cls, fn) -> "DiffusivityField":
        return cls("callable", {},
                   lambda p: np.asarray(fn(p), dtype=float).reshape(p.shape[0], 2, 2))

    @property
    def is_constant(self) -> bool:
        return self.kind in ("constant", "rotation_eigen", "subsurface")

    def evaluate(self, points) -> np.ndarray:
        """Tensor at each of ``(n, 2)`` points, shape ``(n, 2, 2)``."""
        p, _ = _as_points(points)
        return np.asarray(self.func(p), dtype=float)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params}


def eval_diffusivity(fld: DiffusivityField, x) -> np.ndarray:
    """Diffusivity tensor at a single point, validated to be SPD."""
    D = fld.evaluate(np.asarray(x, dtype=float).reshape(1, 2))[0]
    return check_spd(D, f"diffusivity at {list(np.ravel(x))}")


def sym2_eigenvalues(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Smallest and largest eigenvalues of symmetric 2x2 matrices ``(..., 2, 2)``."""
    a, b, d = M[..., 0, 0], 0.5 * (M[..., 0, 1] + M[..., 1, 0]), M[..., 1, 1]
    mean = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    lmax = mean + rad
    det = a * d - b * b
    # smallest eigenvalue from the determinant avoids cancellation
    lmin = np.where(lmax > 0, det / np.where(lmax > 0, lmax, 1.0), mean - rad)
    return lmin, lmax


# ---------------------------------------------------------------------------
# Problem specification


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Coefficients and Dirichlet data of an advection-diffusion-reaction problem.

    Attributes:
        diffusivity: tensor field ``D(x)``.
        velocity: advection field ``v(x)``.
        reaction: reaction coefficient ``alpha(x) >= 0``.
        source: volumetric source ``f(x)``.
        dirichlet: boundary marker to prescribed value (number or field).  The
            key ``"*"`` applies to boundary vertices whose marker is not listed.
        length: characteristic length for the physics-based numbers.
    """

    diffusivity: DiffusivityField
    velocity: VectorField = field(default_factory=lambda: VectorField.constant(0.0, 0.0))
    reaction: ScalarField = field(default_factory=lambda: ScalarField.constant(0.0))
    source: ScalarField = field(default_factory=lambda: ScalarField.constant(0.0))
    dirichlet: Mapping[Any, Any] = field(default_factory=lambda: {"*": 0.0})
    length: float = 1.0

    def __post_init__(self):
        if not self.length > 0:
            raise DomainError("characteristic length must be positive")
        # plain numbers and pairs are accepted as constant fields
        for name in ("reaction", "source"):
            val = getattr(self, name)
            if not isinstance(val, ScalarField):
                object.__setattr__(self, name, ScalarField.constant(float(val)))
        if not isinstance(self.velocity, VectorField):
            object.__setattr__(self, "velocity", VectorField.constant(*map(float, self.velocity)))
        clean = {}
        for k, val in dict(self.dirichlet).items():
            key = "*" if k == "*" else int(k)
            if isinstance(val, ScalarField):
                clean[key] = val
            else:
                clean[key] = ScalarField.constant(float(val))
        object.__setattr__(self, "dirichlet", clean)
        if self.reaction.is_constant and self.reaction.params["value"] < 0:
            raise DomainError(_NEG_ALPHA)

    def dirichlet_values(self, tri) -> tuple[np.ndarray, np.ndarray]:
        """Prescribed vertex indices (sorted) and their values on ``tri``."""
        bverts = np.array(sorted(tri.boundary_vertices), dtype=np.int64)
        markers = np.asarray(tri.vertex_markers)[bverts]
        values = np.empty(bverts.size)
        missing = []
        for i, (v, m) in enumerate(zip(bverts, markers)):
            fld = self.dirichlet.get(int(m), self.dirichlet.get("*"))
            if fld is None:
                missing.append(int(v))
                continue
            values[i] = fld(tri.vertices[v])
        if missing:
            shown = missing[:50]
            raise ConfigurationError(
                f"{len(missing)} boundary vertices have no Dirichlet value "
                f"(markers {sorted(set(int(tri.vertex_markers[v]) for v in missing))}): "
                f"{shown}{' ...' if len(missing) > len(shown) else ''}", vertices=missing)
        return bverts, values

    def to_dict(self) -> dict:
        return {
            "diffusivity": self.diffusivity.to_dict(),
            "velocity": self.velocity.to_dict(),
            "reaction": self.reaction.to_dict(),
            "source": self.source.to_dict(),
            "dirichlet": {str(k): v.to_dict() for k, v in
                          sorted(self.dirichlet.items(), key=lambda kv: str(kv[0]))},
            "length": self.length,
        }

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


_NEG_ALPHA = ("reaction coefficient alpha is negative; the problem becomes a "
              "Helmholtz-type equation, which does not possess a maximum principle")


def _scalar_from(obj, what: str) -> ScalarField:
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return ScalarField.constant(obj)
    if isinstance(obj, str):
        return ScalarField.expression(obj)
    if isinstance(obj, Mapping):
        if "constant" in obj:
            return ScalarField.constant(obj["constant"])
        if "expression" in obj:
            return ScalarField.expression(obj["expression"])
        if "box" in obj:
            x0, x1, y0, y1 = obj["box"]
            return ScalarField.box(x0, x1, y0, y1, obj.get("value", 1.0), obj.get("outside", 0.0))
    raise InputError(f"cannot interpret {what} field {obj!r}")


def _vector_from(obj) -> VectorField:
    if isinstance(obj, (list, tuple)) and len(obj) == 2:
        if all(isinstance(t, str) for t in obj):
            return VectorField.expression(*obj)
        return VectorField.constant(*obj)
    if isinstance(obj, Mapping):
        if "constant" in obj:
            return VectorField.constant(*obj["constant"])
        if "expression" in obj:
            return VectorField.expression(*obj["expression"])
    raise InputError(f"cannot interpret velocity field {obj!r}")


def _diffusivity_from(obj) -> DiffusivityField:
    if not isinstance(obj, Mapping) or "kind" not in obj:
        raise InputError("diffusivity block needs a 'kind'")
    kind = obj["kind"]
    p = obj.get("params", {})
    try:
        if kind == "constant":
            return DiffusivityField.constant(p["D"])
        if kind == "isotropic":
            return DiffusivityField.isotropic(p["d"])
        if kind == "rotation_eigen":
            return DiffusivityField.rotation_eigen(p["d_max"], p["d_min"], p["theta"])
        if kind == "subsurface":
            return DiffusivityField.subsurface(p["v_ref"], p["alpha_T"], p["alpha_L"])
        if kind == "expression":
            return DiffusivityField.expression(p["xx"], p["xy"], p["yy"])
    except KeyError as exc:
        raise InputError(f"diffusivity kind {kind!r} is missing parameter {exc}") from None
    raise InputError(f"unknown diffusivity kind {kind!r}")


def problem_from_dict(d: Mapping) -> ProblemSpec:
    """Build a :class:`ProblemSpec` from a keyed document (see README)."""
    if "diffusivity" not in d:
        raise InputError("problem specification needs a 'diffusivity' block")
    kwargs: dict[str, Any] = {"diffusivity": _diffusivity_from(d["diffusivity"])}
    if "velocity" in d:
        kwargs["velocity"] = _vector_from(d["velocity"])
    if "reaction" in d:
        kwargs["reaction"] = _scalar_from(d["reaction"], "reaction")
    if "source" in d:
        kwargs["source"] = _scalar_from(d["source"], "source")
    if "dirichlet" in d:
        kwargs["dirichlet"] = {k: (_scalar_from(v, "dirichlet") if not isinstance(v, (int, float))
                                   else float(v)) for k, v in d["dirichlet"].items()}
    if "length" in d:
        kwargs["length"] = float(d["length"])
    unknown = set(d) - {"diffusivity", "velocity", "reaction", "source", "dirichlet", "length"}
    if unknown:
        raise InputError(f"unknown problem keys: {sorted(unknown)}")
    return ProblemSpec(**kwargs)


def load_problem(path: str | os.PathLike) -> ProblemSpec:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read problem file: {exc}", os.fspath(path)) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, os.fspath(path), exc.lineno) from None
    return problem_from_dict(data)


# ---------------------------------------------------------------------------
# Element data


def _quad_points(tri: Triangulation, elems: np.ndarray, npoints: int):
    bary, w = triangle_quadrature(npoints)
    P = tri.vertices[tri.elements[elems]]
    return np.einsum("qk,nkd->nqd", bary, P), w, bary


def element_avg_diffusivity(fld: DiffusivityField, tri: Triangulation, e: int,
                            quadrature_order: int = 3) -> np.ndarray:
    """Integral mean of ``D`` over element ``e`` (``quadrature_order`` points)."""
    pts, w, _ = _quad_points(tri, np.array([e]), quadrature_order)
    D = fld.evaluate(pts[0])
    avg = np.einsum("q,qij->ij", w, D)
    avg = 0.5 * (avg + avg.T)
    return check_spd(avg, f"element {e} averaged diffusivity")


def epsilon_eta(Dbar) -> tuple[float, float]:
    """``epsilon = D_yy / D_xx`` and ``eta = D_xy / D_xx``."""
    D = np.asarray(Dbar, dtype=float)
    if D.shape != (2, 2) or not D[0, 0] > 0:
        raise DomainError(f"Dbar must be SPD, got {D.tolist()}")
    eps = D[1, 1] / D[0, 0]
    eta = D[0, 1] / D[0, 0]
    if not (eps > 0 and eta * eta < eps):
        raise DomainError(f"Dbar is not SPD: eta^2 = {eta * eta} >= epsilon = {eps}")
    return float(eps), float(eta)


def _lattice(n: int) -> np.ndarray:
    pts = [(i / n, j / n, (n - i - j) / n) for i in range(n + 1) for j in range(n + 1 - i)]
    return np.array(pts)


def _sample_bary(strategy: str, dense_n: int | None) -> np.ndarray:
    bary = [np.eye(3), triangle_quadrature(3)[0]]
    if strategy == "dense_sampling":
        bary.append(_lattice(dense_n or 10))
    elif strategy != "vertices_quadrature":
        raise ValueError(f"unknown sup-norm strategy {strategy!r}")
    return np.vstack(bary)


def element_sup_norms(spec: ProblemSpec, tri: Triangulation, e: int,
                      strategy: str = "vertices_quadrature",
                      n: int | None = None) -> tuple[float, float]:
    """Sampled maxima of ``|v(x)|`` (Euclidean) and ``alpha(x)`` over element ``e``.

    ``strategy`` is ``"vertices_quadrature"`` (vertices and the 3-point rule)
    or ``"dense_sampling"`` which adds an ``n``-subdivision barycentric lattice.
    """
    bary = _sample_bary(strategy, n)
    pts = bary @ tri.vertices[tri.elements[e]]
    v = spec.velocity(pts)
    a = spec.reaction(pts)
    if (a < 0).any():
        raise DomainError(_NEG_ALPHA)
    return float(np.linalg.norm(v, axis=1).max()), float(a.max())


@dataclass(frozen=True)
class ElementCoefficients:
    Dbar: np.ndarray
    lambda_min_bar: float
    v_sup: float
    alpha_sup: float
    epsilon: float
    eta: float


@dataclass(frozen=True, eq=False)
class CoefficientArrays:
    """Per-element coefficient data for a whole mesh.

    ``v_sup`` uses the Euclidean norm and ``v_sup_inf`` the max-norm of the
    sampled velocity.
    """

    Dbar: np.ndarray
    lambda_min: np.ndarray
    lambda_max: np.ndarray
    det: np.ndarray
    v_sup: np.ndarray
    v_sup_inf: np.ndarray
    alpha_sup: np.ndarray
    strategy: str

    def element(self, e: int) -> ElementCoefficients:
        D = self.Dbar[e]
        return ElementCoefficients(D.copy(), float(self.lambda_min[e]), float(self.v_sup[e]),
                                   float(self.alpha_sup[e]), float(D[1, 1] / D[0, 0]),
                                   float(D[0, 1] / D[0, 0]))


def element_coefficients(spec: ProblemSpec, tri: Triangulation, quadrature_order: int = 3,
                         strategy: str = "vertices_quadrature",
                         dense_n: int | None = None) -> CoefficientArrays:
    """Averaged diffusivity and sampled sup-norms on every element of ``tri``."""
    from .parallel import chunked_map

    bary_q, w = triangle_quadrature(quadrature_order)
    bary_s = _sample_bary(strategy, dense_n)

    def work(a: int, b: int):
        P = tri.vertices[tri.elements[a:b]]
        qp = np.einsum("qk,nkd->nqd", bary_q, P).reshape(-1, 2)
        D = spec.diffusivity.evaluate(qp).reshape(b - a, len(w), 2, 2)
        Dbar = np.einsum("q,nqij->nij", w, D)
        Dbar = 0.5 * (Dbar + np.swapaxes(Dbar, 1, 2))
        sp = np.einsum("qk,nkd->nqd", bary_s, P).reshape(-1, 2)
        v = spec.velocity(sp).reshape(b - a, -1, 2)
        al = spec.reaction(sp).reshape(b - a, -1)
        return Dbar, np.sqrt(np.einsum("nqd,nqd->nq", v, v)).max(axis=1), \
            np.abs(v).max(axis=(1, 2)), al

    parts = chunked_map(work, tri.n_elements)
    Dbar = np.concatenate([p[0] for p in parts])
    v_sup = np.concatenate([p[1] for p in parts])
    v_inf = np.concatenate([p[2] for p in parts])
    al = np.concatenate([p[3] for p in parts])
    if (al < 0).any():
        raise DomainError(_NEG_ALPHA)
    lmin, lmax = sym2_eigenvalues(Dbar)
    if not (lmin > 0).all():
        e = int(np.argmin(lmin))
        raise DomainError(f"averaged diffusivity of element {e} is not SPD, "
                          f"eigenvalues {[float(lmin[e]), float(lmax[e])]}")
    det = Dbar[:, 0, 0] * Dbar[:, 1, 1] - Dbar[:, 0, 1] * Dbar[:, 1, 0]
    return CoefficientArrays(Dbar, lmin, lmax, det, v_sup, v_inf, al.max(axis=1), strategy)
