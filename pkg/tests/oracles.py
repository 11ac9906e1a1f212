"""Independent reference computations used by the tests.

Nothing here imports the package's geometry or assembly code, so agreement
between these routines and the package is a genuine cross-check.
"""

from __future__ import annotations

import math

import numpy as np


def incircle(a, b, c, d) -> float:
    """Positive when ``d`` lies strictly inside the circumcircle of CCW ``abc``."""
    rows = []
    for p in (a, b, c):
        dx, dy = p[0] - d[0], p[1] - d[1]
        rows.append([dx, dy, dx * dx + dy * dy])
    return float(np.linalg.det(np.array(rows)))


def orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def sqrtm_spd(M):
    w, V = np.linalg.eigh(np.asarray(M, dtype=float))
    return V @ np.diag(np.sqrt(w)) @ V.T


def angle_at(p, a, b, M=None) -> float:
    """Angle at ``p`` of triangle ``p a b`` measured in the inner product ``M``."""
    T = np.eye(2) if M is None else sqrtm_spd(M)
    u = T @ (np.asarray(a, float) - np.asarray(p, float))
    v = T @ (np.asarray(b, float) - np.asarray(p, float))
    c = float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))
    return math.acos(max(-1.0, min(1.0, c)))


def triangle_angles(P, M=None) -> np.ndarray:
    P = np.asarray(P, float)
    return np.array([angle_at(P[k], P[(k + 1) % 3], P[(k + 2) % 3], M) for k in range(3)])


def heights(P) -> np.ndarray:
    """Distance from each vertex to the line through the other two."""
    P = np.asarray(P, float)
    area2 = abs(orient(*P))
    out = np.empty(3)
    for k in range(3):
        e = P[(k + 2) % 3] - P[(k + 1) % 3]
        out[k] = area2 / np.linalg.norm(e)
    return out


def p1_gradients(P) -> np.ndarray:
    """Rows are gradients of the three linear basis functions."""
    A = np.column_stack([np.ones(3), np.asarray(P, float)])
    C = np.linalg.inv(A)  # columns are coefficient vectors (c0, cx, cy)
    return C[1:].T


def p1_stiffness(P, D) -> np.ndarray:
    G = p1_gradients(P)
    area = 0.5 * abs(orient(*np.asarray(P, float)))
    return area * G @ np.asarray(D, float) @ G.T


def q4_stiffness(a: float, b: float, D) -> np.ndarray:
    """Bilinear rectangle ``[0,a]x[0,b]``, CCW nodes, 3x3 Gauss (exact here)."""
    D = np.asarray(D, float)
    g, w = np.polynomial.legendre.leggauss(3)
    g = 0.5 * (g + 1)
    w = 0.5 * w
    nodes = [(0, 0), (1, 0), (1, 1), (0, 1)]
    K = np.zeros((4, 4))
    for xi, wx in zip(g, w):
        for et, wy in zip(g, w):
            grads = []
            for (i, j) in nodes:
                fx = (1 if i else -1) * (et if j else 1 - et)
                fy = (1 if j else -1) * (xi if i else 1 - xi)
                grads.append([fx / a, fy / b])
            G = np.array(grads)
            K += wx * wy * a * b * G @ D @ G.T
    return K


def random_spd(rng, cond_max: float = 1e3) -> np.ndarray:
    theta = rng.uniform(0, np.pi)
    lmin = 10 ** rng.uniform(-1, 1)
    lmax = lmin * 10 ** rng.uniform(0, math.log10(cond_max))
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    return R @ np.diag([lmax, lmin]) @ R.T


def random_triangle(rng, min_angle_deg: float = 2.0) -> np.ndarray:
    """Counter-clockwise triangle in the unit square with a bounded smallest angle."""
    while True:
        P = rng.uniform(0, 1, (3, 2))
        if orient(*P) < 0:
            P = P[[0, 2, 1]]
        if abs(orient(*P)) < 1e-3:
            continue
        if triangle_angles(P).min() >= math.radians(min_angle_deg):
            return P


def dense_matrix_principles(K_ff, K_fp, tol_rel: float = 1e-11) -> dict:
    """Monotonicity facts from a dense inverse."""
    K_ff = np.asarray(K_ff, float)
    K_fp = np.asarray(K_fp, float)
    inv = np.linalg.inv(K_ff)
    tol = tol_rel * np.abs(inv).max()
    W = -inv @ K_fp
    s = W.sum(axis=1)
    return {"inverse_nonneg": bool((inv >= -tol).all()),
            "coupling_nonneg": bool((W >= -tol).all()),
            "rowsum_le_1": bool((s <= 1 + 1e-10).all()),
            "rowsum_eq_1": bool((np.abs(s - 1) <= 1e-10).all())}
