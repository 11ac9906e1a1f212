import math
import os
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

sys.path.insert(0, os.path.dirname(__file__))
import oracles  # noqa: E402

from dmpmesh.assembly import local_stiffness_t3
from dmpmesh.errors import DomainError, SingularGeometryError
from dmpmesh.mesh import (Triangulation, equilateral_patch, perturb_interior,
                          structured_rectangle)
from dmpmesh.problem import DiffusivityField, ProblemSpec
from dmpmesh.restrictions import (arccot, check_anisotropic_nonobtuse, check_generalized_delaunay,
                                  mesh_nondimensional_numbers, physics_numbers, q4_closed_form,
                                  q4_feasibility, t3_canonical_conditions, t3_feasibility)

SQ3 = math.sqrt(3.0)
seeds = st.integers(0, 2 ** 32 - 1)


def single(P):
    return Triangulation(np.asarray(P, float), np.array([[0, 1, 2]]))


def spec_D(D, v=(0.0, 0.0), alpha=0.0):
    return ProblemSpec(DiffusivityField.constant(D), velocity=v, reaction=alpha)


class TestNonObtuse:
    def test_equilateral(self):
        rep = check_anisotropic_nonobtuse(single([(0, 0), (1, 0), (0.5, SQ3 / 2)]),
                                          spec_D(np.eye(2)))
        assert rep.all_pass
        assert rep.lhs[0] == 0.0 and rep.rhs[0] == pytest.approx(0.5, abs=1e-14)
        assert any("relaxed" in n for n in rep.notes)

    def test_obtuse_fails(self):
        rep = check_anisotropic_nonobtuse(single([(0, 0), (1, 0), (0.5, 0.1)]),
                                          spec_D(np.eye(2)))
        assert not rep.all_pass and rep.rhs[0] < 0

    def test_metric_equilateral(self):
        rep = check_anisotropic_nonobtuse(single([(0, 0), (2, 0), (1, SQ3 / 2)]),
                                          spec_D(np.diag([4.0, 1.0])))
        assert rep.all_pass
        assert rep.rhs[0] == pytest.approx(0.5, abs=1e-12)

    def test_pair_formula(self):
        P = np.array([(0, 0), (1.0, 0.1), (0.3, 0.9)])
        D = np.array([[2.0, 0.3], [0.3, 1.0]])
        v, a = (0.4, -0.2), 1.5
        rep = check_anisotropic_nonobtuse(single(P), spec_D(D, v, a))
        h = oracles.heights(P)
        lam = np.linalg.eigvalsh(D)[0]
        angles = oracles.triangle_angles(P, np.linalg.inv(D))
        vn = math.hypot(*v)
        worst = min(math.cos(angles[3 - p - q]) - (h[p] * vn / (3 * lam)
                                                   + h[p] * h[q] * a / (12 * lam))
                    for p in range(3) for q in range(3) if p != q)
        assert rep.margin[0] == pytest.approx(worst, abs=1e-12)

    def test_fraction_range(self):
        tri = perturb_interior(structured_rectangle(6, 6), 0.03, seed=2)
        rep = check_anisotropic_nonobtuse(tri, spec_D(np.diag([5.0, 1.0]), (1, 0), 1.0))
        assert 0 <= rep.fraction <= 1
        np.testing.assert_array_equal(rep.passed, rep.margin >= -rep.tol)


class TestDelaunay:
    def test_structured_equality(self):
        tri = structured_rectangle(4, 4)
        rep = check_generalized_delaunay(tri, spec_D(np.eye(2)))
        assert rep.all_pass
        diag = [k for k, (p, q) in enumerate(rep.ids)
                if not np.isclose(tri.vertices[p], tri.vertices[q]).any()]
        assert diag
        np.testing.assert_allclose(rep.margin[diag], 0.0, atol=1e-12)

    def test_flip_configuration_fails(self):
        V = np.array([(0, 0), (1, 0), (1.02, 0.5), (0, 0.5)])
        tri = Triangulation(V, np.array([[0, 1, 2], [0, 2, 3]]))
        rep = check_generalized_delaunay(tri, spec_D(np.eye(2)))
        assert rep.n_items == 1 and not rep.all_pass
        assert oracles.incircle(V[0], V[1], V[2], V[3]) > 0

    def test_single_element_vacuous(self):
        rep = check_generalized_delaunay(single([(0, 0), (1, 0), (0, 1)]), spec_D(np.eye(2)))
        assert rep.n_items == 0 and rep.all_pass and rep.fraction == 1.0

    def test_arccot_branch(self):
        t = np.array([-1e6, -1.0, 0.0, 1.0, 1e6])
        vals = arccot(t)
        assert ((vals > 0) & (vals < math.pi)).all()
        assert np.all(np.diff(vals) < 0)
        np.testing.assert_allclose(1 / np.tan(vals[1:4]), t[1:4], atol=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(seeds, st.floats(0.005, 0.033))
    def test_incircle_agreement(self, seed, amp):
        tri = perturb_interior(structured_rectangle(6, 6), amp, seed=seed % 100000)
        rep = check_generalized_delaunay(tri, spec_D(np.eye(2)))
        for k, (p, q) in enumerate(rep.ids):
            e1, e2 = tri.edge_adjacency[(p, q)]
            a, b, c = tri.vertices[tri.elements[e1]]
            r = [v for v in tri.elements[e2] if v not in (p, q)][0]
            s = oracles.incircle(a, b, c, tri.vertices[r])
            if abs(rep.margin[k]) < 1e-9:
                continue
            assert rep.passed[k] == (s <= 0)

    def test_nonobtuse_implies_delaunay(self):
        families = [structured_rectangle(6, 6), equilateral_patch(6, 6, 1.0),
                    perturb_interior(structured_rectangle(8, 8), 0.025, seed=3),
                    perturb_interior(equilateral_patch(7, 7, 1.0), 0.025, seed=4)]
        specs = [spec_D(np.eye(2)), spec_D(np.diag([3.0, 1.0]), (0.5, 0.2), 0.5),
                 spec_D(np.array([[2.0, 0.5], [0.5, 1.0]]), (1, 1), 2.0)]
        for tri in families:
            for sp in specs:
                no = check_anisotropic_nonobtuse(tri, sp)
                if no.all_pass:
                    assert check_generalized_delaunay(tri, sp).all_pass


class TestT3:
    def test_examples(self):
        P = lambda a, b: [(0, 0), (1, 0), (a, b)]  # noqa: E731
        assert t3_feasibility(P(0.5, 1), np.eye(2)).passed
        r = t3_feasibility(P(0.5, 0.3), np.eye(2))
        assert not r.passed and not r.offdiag_ok[0]
        r = t3_feasibility(P(0.5, 1), np.diag([1.0, 10.0]))
        assert (r.epsilon, r.eta) == (10.0, 0.0)
        assert not r.passed
        assert t3_canonical_conditions(0.5, 1, 10, 0) == (False, True, True)

    def test_degenerate(self):
        with pytest.raises(SingularGeometryError):
            t3_feasibility([(0, 0), (1, 0), (2, 0)], np.eye(2))

    def test_clockwise_fails_orientation(self):
        r = t3_feasibility([(0, 0), (0.5, 1), (1, 0)], np.eye(2))
        assert not r.area_ok and not r.passed

    @settings(max_examples=300, deadline=None)
    @given(seeds)
    def test_matches_stiffness_signs(self, seed):
        rng = np.random.default_rng(seed)
        P = oracles.random_triangle(rng, 1.0)
        D = oracles.random_spd(rng)
        r = t3_feasibility(P, D)
        K = oracles.p1_stiffness(P, D)
        scale = np.abs(K).max()
        for ok, (i, j) in zip(r.offdiag_ok, ((0, 1), (0, 2), (1, 2))):
            rel = K[i, j] / scale
            if abs(rel) > 1e-9:
                assert ok == (rel <= 0)
        lm = local_stiffness_t3(spec_D(D), single(P), 0).diffusion
        off = lm[~np.eye(3, dtype=bool)]
        if np.abs(off / scale).min() > 1e-9:
            assert r.passed == bool((off <= 1e-12 * scale).all())

    @settings(max_examples=300, deadline=None)
    @given(st.floats(-3, 4), st.floats(0.05, 3), st.floats(0.01, 100), st.floats(-0.99, 0.99))
    def test_canonical_agreement(self, a, b, eps, rho):
        eta = rho * math.sqrt(eps)
        D = np.array([[1.0, eta], [eta, eps]])
        r = t3_feasibility([(0, 0), (1, 0), (a, b)], D)
        K = oracles.p1_stiffness([(0, 0), (1, 0), (a, b)], D)
        scale = np.abs(K).max()
        can = t3_canonical_conditions(a, b, eps, eta)
        for k, (i, j) in enumerate(((0, 1), (0, 2), (1, 2))):
            if abs(K[i, j]) / scale > 1e-9:
                assert can[k] == r.offdiag_ok[k]

    @settings(max_examples=200, deadline=None)
    @given(seeds, st.floats(1e-3, 1e3))
    def test_scale_invariance(self, seed, c):
        rng = np.random.default_rng(seed)
        P = oracles.random_triangle(rng, 1.0)
        D = oracles.random_spd(rng)
        a, b = t3_feasibility(P, D), t3_feasibility(P, c * D)
        assert a.epsilon == pytest.approx(b.epsilon) and a.eta == pytest.approx(b.eta)
        vals = np.array(a.values) / max(np.abs(a.values).max(), 1e-300)
        if np.abs(vals).min() > 1e-9:
            assert a.passed == b.passed


class TestQ4:
    def test_examples(self):
        assert q4_feasibility(1, 1, np.eye(2)).passed
        r = q4_feasibility(2, 1, np.eye(2))
        assert not r.passed and not r.ratio_ok
        assert r.max_offdiag == pytest.approx(1 / 6)
        r = q4_feasibility(1, 1, [[1, -0.9], [-0.9, 1]])
        assert not r.corner_ok and not r.passed
        assert r.max_offdiag == pytest.approx(-1 / 6 + 0.45 - 1 / 6)

    def test_non_spd(self):
        with pytest.raises(DomainError):
            q4_feasibility(1, 1, [[1, 2], [2, 1]])

    @settings(max_examples=300, deadline=None)
    @given(seeds, st.floats(0.05, 20), st.floats(0.05, 20))
    def test_against_quadrature(self, seed, a, b):
        D = oracles.random_spd(np.random.default_rng(seed))
        ref = oracles.q4_stiffness(a, b, D)
        K = q4_closed_form(a, b, D)
        scale = np.abs(ref).max()
        np.testing.assert_allclose(K, ref, rtol=1e-12, atol=1e-12 * scale)
        off = ref[~np.eye(4, dtype=bool)] / np.abs(np.diag(ref)).max()
        if np.abs(off).min() > 1e-9:
            assert q4_feasibility(a, b, D).passed == bool((off <= 0).all())
            for c in (1e-3, 7.0):
                assert q4_feasibility(a, b, c * D).passed == q4_feasibility(a, b, D).passed


class TestNumbers:
    def test_peclet_arithmetic(self):
        # equilateral triangle with all heights 0.1
        s = 0.2 / SQ3
        P = [(0, 0), (s, 0), (s / 2, 0.1)]
        sp = spec_D(0.001 * np.eye(2), (1.0, 0.0))
        rep = mesh_nondimensional_numbers(single(P), sp)
        hmax = oracles.heights(P).max()
        assert hmax == pytest.approx(0.1)
        assert rep.element_peclet[0] == pytest.approx(100.0, rel=1e-12)

    def test_zero_coefficients(self):
        rep = mesh_nondimensional_numbers(structured_rectangle(3, 3), spec_D(np.eye(2)))
        assert not rep.element_peclet.any() and not rep.element_damkohler.any()
        assert not rep.edge_peclet.any() and rep.global_peclet == 0

    def test_equilateral_master(self):
        tri = single([(0, 0), (1, 0), (0.5, SQ3 / 2)])
        rep = mesh_nondimensional_numbers(tri, spec_D(np.eye(2), (1.0, 0.0)))
        assert rep.element_peclet[0] == pytest.approx(SQ3 / 2, rel=1e-14)
        assert rep.element_master_lhs[0] == pytest.approx(SQ3 / 3, rel=1e-12)
        no = check_anisotropic_nonobtuse(tri, spec_D(np.eye(2), (1.0, 0.0)))
        assert no.extra["master_lhs"][0] == pytest.approx(SQ3 / 3, rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(seeds, st.floats(0, 10), st.floats(0, 10))
    def test_nonnegative(self, seed, vx, alpha):
        rng = np.random.default_rng(seed)
        tri = perturb_interior(structured_rectangle(4, 4), 0.05, seed=seed % 1000)
        rep = mesh_nondimensional_numbers(tri, spec_D(oracles.random_spd(rng), (vx, 1), alpha))
        for arr in (rep.element_peclet, rep.element_damkohler, rep.edge_peclet,
                    rep.edge_damkohler):
            assert (arr >= 0).all()
        assert rep.global_peclet >= 0 and rep.global_damkohler >= 0

    def test_physics_isotropic(self):
        sp = ProblemSpec(DiffusivityField.isotropic(0.5), velocity=(2.0, -3.0), reaction=4.0,
                         length=1.5)
        pn = physics_numbers(sp, structured_rectangle(2, 2))
        assert pn.V == 3.0 and pn.A == 4.0
        assert pn.Pe_A == pytest.approx(3 * 1.5 / 0.5)
        assert pn.Da_I == pytest.approx(4 * 1.5 / 3)
        assert pn.Da_II_A == pytest.approx(4 * 1.5 ** 2 / 0.5)
        assert pn.Da_II_A == pytest.approx(pn.Pe_A * pn.Da_I)
        assert pn.Pe_B == pytest.approx(pn.Pe_A)

    def test_physics_no_velocity(self):
        pn = physics_numbers(spec_D(np.eye(2), (0, 0), 1.0), structured_rectangle(2, 2))
        assert pn.Da_I is None and pn.Pe_A == 0

    def test_physics_rotation(self):
        sp = ProblemSpec(DiffusivityField.rotation_eigen(1000, 1, math.pi / 3),
                         velocity=(1.0, 0.0))
        pn = physics_numbers(sp, structured_rectangle(2, 2))
        assert pn.Pe_A == pytest.approx(1.0, rel=1e-12)
        assert pn.Pe_B == pytest.approx(1 / math.sqrt(1000), rel=1e-12)
        assert pn.Da_II_B == pytest.approx(pn.Pe_B * pn.Da_I)
