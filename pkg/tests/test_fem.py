import numpy as np
import pytest

from plapeig import fem
from plapeig.fem import DEGREE5, P1Function, SolverError
from plapeig.mesh import generate_unit_square, refine_uniform

import oracles


def p1(mesh, coeffs):
    return P1Function(mesh, np.asarray(coeffs, dtype=float))


class TestQuadrature:
    def test_weights_sum_to_one(self):
        assert DEGREE5.weights.sum() == pytest.approx(1.0, abs=1e-15)

    def test_degree5_exactness(self):
        # all monomials x^a y^b with a + b <= 5 against the closed form
        x = DEGREE5.points[:, 1]
        y = DEGREE5.points[:, 2]
        for a in range(6):
            for b in range(6 - a):
                exact = oracles.monomial_integral(a, b)
                approx = 0.5 * np.dot(DEGREE5.weights, x ** a * y ** b)
                assert approx == pytest.approx(exact, rel=1e-13)

    def test_duffy_oracle_is_degree10(self):
        pts, w = oracles.gauss_duffy_rule(6)
        for a in range(11):
            for b in range(11 - a):
                exact = oracles.monomial_integral(a, b)
                approx = np.dot(w, pts[:, 0] ** a * pts[:, 1] ** b)
                assert approx == pytest.approx(exact, rel=1e-12)


class TestStiffness:
    def test_reference_local_matrix(self, ref_triangle):
        K = fem.assemble_stiffness(ref_triangle).toarray()
        expected = 0.5 * np.array([[2.0, -1.0, -1.0],
                                   [-1.0, 1.0, 0.0],
                                   [-1.0, 0.0, 1.0]])
        assert np.allclose(K, expected, atol=1e-14)

    def test_constants_in_kernel(self):
        m = generate_unit_square(5)
        K = fem.assemble_stiffness(m)
        assert np.max(np.abs(K @ np.ones(m.num_vertices))) < 1e-12

    def test_symmetry(self):
        m = generate_unit_square(4)
        K = fem.assemble_stiffness(m)
        assert abs(K - K.T).max() < 1e-12

    def test_center_diagonal_five_point(self):
        m = generate_unit_square(2)
        K = fem.assemble_stiffness(m)
        c = int(np.argmin(np.linalg.norm(m.vertices - 0.5, axis=1)))
        assert K[c, c] == pytest.approx(4.0, abs=1e-13)

    def test_interior_block_positive_definite(self):
        m = generate_unit_square(4)
        K = fem.assemble_stiffness(m)
        idx = np.nonzero(~m.boundary_vertex)[0]
        A = K.toarray()[np.ix_(idx, idx)]
        assert np.linalg.eigvalsh(A).min() > 0


class TestRhs:
    def test_constant_load_reference(self, ref_triangle):
        b = fem.assemble_rhs(ref_triangle, 1.0)
        assert np.allclose(b, 1.0 / 6.0, atol=1e-15)

    def test_linear_load_reference(self, ref_triangle):
        b = fem.assemble_rhs(ref_triangle, lambda x, y: x)
        # int x phi_0 = int x (1 - x - y) from exact monomial integrals
        exact = (oracles.monomial_integral(1, 0)
                 - oracles.monomial_integral(2, 0)
                 - oracles.monomial_integral(1, 1))
        assert b[0] == pytest.approx(exact, rel=1e-13)
        assert exact == pytest.approx(1.0 / 24.0, rel=1e-15)

    def test_constant_field_total_is_zero(self):
        # partition of unity: sum_i grad(phi_i) = 0, so a pure field load
        # sums to zero over all vertices
        m = generate_unit_square(3)
        g = np.tile([0.3, -1.2], (m.num_triangles, 1))
        b = fem.assemble_rhs(m, 0.0, g=g)
        assert abs(b.sum()) < 1e-13

    def test_field_size_mismatch(self, ref_triangle):
        with pytest.raises(ValueError):
            fem.assemble_rhs(ref_triangle, 1.0, g=np.zeros((4, 2)))
        with pytest.raises(ValueError):
            fem.field_at_quad(ref_triangle, np.zeros(9))


class TestDirichletSolve:
    def test_zero_rhs(self):
        m = generate_unit_square(4)
        K = fem.assemble_stiffness(m)
        u = fem.solve_dirichlet(K, np.zeros(m.num_vertices), m.boundary_vertex)
        assert np.all(u == 0.0)

    def test_single_unknown(self):
        m = generate_unit_square(2)
        K = fem.assemble_stiffness(m)
        b = fem.assemble_rhs(m, 1.0)
        u = fem.solve_dirichlet(K, b, m.boundary_vertex)
        c = int(np.nonzero(~m.boundary_vertex)[0][0])
        assert u[c] == pytest.approx(b[c] / K[c, c], rel=1e-12)
        assert np.all(u[m.boundary_vertex] == 0.0)

    def test_pcg_matches_dense(self, rng):
        m = refine_uniform(generate_unit_square(3), 2)
        K = fem.assemble_stiffness(m)
        b = fem.assemble_rhs(m, lambda x, y: np.sin(3 * x) + y)
        u_pcg = fem.solve_dirichlet(K, b, m.boundary_vertex)
        u_dense = fem.solve_dirichlet_dense(K, b, m.boundary_vertex)
        assert np.max(np.abs(u_pcg - u_dense)) < 1e-10

    def test_factorized_matches_dense(self):
        m = generate_unit_square(6)
        K = fem.assemble_stiffness(m)
        fac = fem.DirichletFactor(K, m.boundary_vertex)
        b = fem.assemble_rhs(m, 1.0)
        u = fac.solve(b)
        u_dense = fem.solve_dirichlet_dense(K, b, m.boundary_vertex)
        assert np.max(np.abs(u - u_dense)) < 1e-12

    def test_residual_contract(self):
        m = generate_unit_square(10)
        K = fem.assemble_stiffness(m)
        b = fem.assemble_rhs(m, 1.0)
        u = fem.solve_dirichlet(K, b, m.boundary_vertex)
        idx = ~m.boundary_vertex
        A = K.tocsr()[np.nonzero(idx)[0]][:, np.nonzero(idx)[0]]
        res = np.linalg.norm(A @ u[idx] - b[idx]) / np.linalg.norm(b[idx])
        assert res <= 1e-10

    def test_torsion_center_value_fourier(self):
        # -lap u = 1 on the unit square against the series oracle, at a
        # vertex count beyond ten thousand
        exact = oracles.square_torsion_center()
        assert exact == pytest.approx(0.0736713, abs=5e-7)
        m = generate_unit_square(100)
        assert m.num_vertices >= 10_000
        K = fem.assemble_stiffness(m)
        b = fem.assemble_rhs(m, 1.0)
        u = fem.solve_dirichlet(K, b, m.boundary_vertex)
        c = int(np.argmin(np.linalg.norm(m.vertices - 0.5, axis=1)))
        assert abs(u[c] - exact) / exact < 0.01

    def test_pcg_cap_raises_with_residual(self):
        m = generate_unit_square(8)
        K = fem.assemble_stiffness(m)
        b = fem.assemble_rhs(m, 1.0)
        idx = np.nonzero(~m.boundary_vertex)[0]
        A = K.tocsr()[idx][:, idx]
        with pytest.raises(SolverError) as err:
            fem._pcg(A, b[idx], rtol=1e-10, maxiter=2)
        assert np.isfinite(err.value.residual)
        assert err.value.residual > 1e-10

    def test_degenerate_triangle_rejected(self):
        from plapeig.mesh import Mesh, MeshConformityError
        bad = Mesh(vertices=np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]),
                   triangles=np.array([[0, 1, 2]]),
                   boundary_vertex=np.array([True] * 3),
                   generation=np.zeros(1, dtype=np.int64),
                   parent=np.full(1, -1, dtype=np.int64))
        with pytest.raises(MeshConformityError):
            fem.assemble_stiffness(bad)


class TestGradAndNorms:
    def test_grad_linear(self, ref_triangle):
        u = p1(ref_triangle, ref_triangle.vertices[:, 0])
        assert np.allclose(fem.grad(u), [[1.0, 0.0]], atol=1e-14)

    def test_grad_constant(self):
        m = generate_unit_square(3)
        u = p1(m, np.full(m.num_vertices, 7.5))
        assert np.max(np.abs(fem.grad(u))) < 1e-13

    def test_grad_affine(self):
        m = generate_unit_square(3)
        u = p1(m, 3.0 * m.vertices[:, 0] + 2.0 * m.vertices[:, 1] - 1.0)
        assert np.allclose(fem.grad(u), [3.0, 2.0], atol=1e-12)

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.7])
    def test_lp_norm_constant_one(self, p):
        m = generate_unit_square(3)
        u = p1(m, np.ones(m.num_vertices))
        assert fem.lp_norm(u, p) == pytest.approx(1.0, rel=1e-13)

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_lp_norm_homogeneity(self, p, rng):
        m = generate_unit_square(3)
        u = p1(m, rng.standard_normal(m.num_vertices))
        c = -2.3
        cu = p1(m, c * u.coeffs)
        assert fem.lp_norm(cu, p) == pytest.approx(abs(c) * fem.lp_norm(u, p),
                                                   rel=1e-13)

    def test_lp_norm_linear_exact(self, ref_triangle):
        u = p1(ref_triangle, ref_triangle.vertices[:, 0])
        assert fem.lp_norm(u, 2.0) == pytest.approx(np.sqrt(1.0 / 12.0),
                                                    rel=1e-14)

    @staticmethod
    def _oracle_lp(m, u, p):
        total = 0.0
        for tri in m.triangles:
            v = m.vertices[tri]
            c = u.coeffs[tri]

            def f(x, y, v=v, c=c):
                # invert the affine map to barycentric coordinates
                mat = np.array([[v[1, 0] - v[0, 0], v[2, 0] - v[0, 0]],
                                [v[1, 1] - v[0, 1], v[2, 1] - v[0, 1]]])
                inv = np.linalg.inv(mat)
                lam1 = inv[0, 0] * (x - v[0, 0]) + inv[0, 1] * (y - v[0, 1])
                lam2 = inv[1, 0] * (x - v[0, 0]) + inv[1, 1] * (y - v[0, 1])
                vals = c[0] * (1 - lam1 - lam2) + c[1] * lam1 + c[2] * lam2
                return np.abs(vals) ** p

            total += oracles.integrate_triangle(f, v[0], v[1], v[2], m=8)
        return total ** (1.0 / p)

    @pytest.mark.parametrize("p", [1.1, 1.5, 3.0, 4.7])
    def test_lp_norm_vs_degree10_oracle(self, p, rng):
        # sign-definite samples: |u|^p is then smooth per element and the
        # two rules must agree tightly (the eigenfunction use case)
        m = generate_unit_square(3)
        for _ in range(5):
            u = p1(m, rng.uniform(0.5, 2.0, m.num_vertices))
            assert fem.lp_norm(u, p) == pytest.approx(self._oracle_lp(m, u, p),
                                                      rel=1e-6)

    @pytest.mark.parametrize("p", [1.5, 4.7])
    def test_lp_norm_sign_changing(self, p, rng):
        # |u|^p has a kink inside sign-changing elements; agreement is then
        # limited by quadrature error, not implementation error
        m = generate_unit_square(3)
        u = p1(m, rng.standard_normal(m.num_vertices))
        assert fem.lp_norm(u, p) == pytest.approx(self._oracle_lp(m, u, p),
                                                  rel=5e-3)

    def test_sup_norm(self):
        m = generate_unit_square(1)
        assert fem.sup_norm(p1(m, [0.0, 0.0, 0.0, 0.0])) == 0.0
        assert fem.sup_norm(p1(m, [-3.0, 2.0, 0.0, 1.0])) == 3.0
        u = p1(m, [0.5, -1.5, 2.0, 0.0])
        cu = p1(m, -4.0 * u.coeffs)
        assert fem.sup_norm(cu) == pytest.approx(4.0 * fem.sup_norm(u))

    def test_w1p_seminorm(self):
        m = generate_unit_square(4)
        u = p1(m, m.vertices[:, 0])
        assert fem.w1p_seminorm_p(u, 2.0) == pytest.approx(1.0, rel=1e-13)
        const = p1(m, np.full(m.num_vertices, 3.0))
        assert fem.w1p_seminorm_p(const, 2.5) == pytest.approx(0.0, abs=1e-20)
        cu = p1(m, -2.0 * u.coeffs)
        assert fem.w1p_seminorm_p(cu, 3.0) == pytest.approx(
            2.0 ** 3 * fem.w1p_seminorm_p(u, 3.0), rel=1e-13)

    def test_rayleigh_reference(self, ref_triangle):
        u = p1(ref_triangle, ref_triangle.vertices[:, 0])
        assert fem.rayleigh(u, 2.0) == pytest.approx(6.0, rel=1e-13)

    def test_rayleigh_scale_invariant(self, rng):
        m = generate_unit_square(3)
        u = p1(m, rng.standard_normal(m.num_vertices))
        for c in (0.1, -5.0, 1e4):
            cu = p1(m, c * u.coeffs)
            assert fem.rayleigh(cu, 2.5) == pytest.approx(
                fem.rayleigh(u, 2.5), rel=1e-12)

    def test_parameter_validation(self, ref_triangle):
        u = p1(ref_triangle, [1.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            fem.lp_norm(u, 1.0)
        with pytest.raises(ValueError):
            fem.w1p_seminorm_p(u, 0.5)
        zero = p1(ref_triangle, [0.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            fem.rayleigh(zero, 2.0)

    def test_p_flux_zero_rows_safe(self):
        field = np.array([[0.0, 0.0], [3.0, 4.0]])
        out = fem.p_flux(field, 1.5)
        assert np.all(np.isfinite(out))
        assert np.allclose(out[0], 0.0)
        assert np.allclose(out[1], np.array([3.0, 4.0]) / np.sqrt(5.0))
