from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from minkgauss.chart import (EDGE_MARGIN, ChartGrid, ChartMap, Field, GridMismatchError, MetricField, ScalarField,
                             SingularMetricError, TensorField, christoffel, codazzi_residual, diff, diff2,
                             fd_derivative, gauss_curvature, pullback_metric, read_csv_field, sym_positive_root,
                             sym_positive_root_array)


def _metric(grid, fn) -> MetricField:
    return MetricField(grid, fn(grid.points()))


def conformal(fn):
    def g(p):
        lam = fn(p[..., 0], p[..., 1])
        return lam[..., None, None] * np.eye(2)
    return g


def hyperboloid_graph_metric(p):
    w2 = 1.0 + np.sum(p * p, -1)
    df = p / np.sqrt(w2)[..., None]
    return np.eye(2) - df[..., :, None] * df[..., None, :]


class TestGrid:
    def test_square(self):
        g = ChartGrid.square(1.0, 0.25)
        assert g.shape == (9, 9)
        assert g.spacing == (0.25, 0.25)
        assert g.center_node() == (4, 4)

    def test_refined_keeps_nodes(self):
        g = ChartGrid.square(1.0, 0.25)
        np.testing.assert_allclose(g.refined().points()[::2, ::2], g.points())

    def test_rejects_bad(self):
        with pytest.raises(ValueError):
            ChartGrid(0, 1, 0, 1, 3, 10)
        with pytest.raises(ValueError):
            ChartGrid(1, 0, 0, 1, 10, 10)

    def test_mismatch(self):
        a = ScalarField(ChartGrid.square(1, 0.25), np.zeros((9, 9)))
        b = ScalarField(ChartGrid.square(1, 0.125), np.zeros((17, 17)))
        with pytest.raises(GridMismatchError):
            a.same_grid(b)
        with pytest.raises(GridMismatchError):
            ScalarField(ChartGrid.square(1, 0.25), np.zeros((8, 9)))


class TestDerivatives:
    @pytest.mark.parametrize("order", [2, 4])
    def test_exact_on_polynomials(self, order):
        x = np.linspace(-1, 2, 13)
        h = x[1] - x[0]
        for k in range(order + 1):
            np.testing.assert_allclose(diff(x**k, 0, h, order), k * x ** max(k - 1, 0) * (k > 0), atol=1e-10)
        for k in range(order):
            np.testing.assert_allclose(diff2(x**k, 0, h, order), k * (k - 1) * x ** max(k - 2, 0), atol=1e-8)

    @pytest.mark.parametrize("order", [2, 4])
    def test_convergence(self, order):
        errs = []
        for n in (41, 81, 161):
            x = np.linspace(0, 2, n)
            errs.append(np.max(np.abs(diff(np.sin(x), 0, x[1] - x[0], order) - np.cos(x))))
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(np.abs(rates - order) < 0.3)

    def test_field_direction(self):
        grid = ChartGrid.square(1.0, 0.1)
        p = grid.points()
        f = ScalarField(grid, p[..., 0] ** 2 * p[..., 1])
        np.testing.assert_allclose(fd_derivative(f, "u").values, 2 * p[..., 0] * p[..., 1], atol=1e-12)
        np.testing.assert_allclose(fd_derivative(f, 1).values, p[..., 0] ** 2, atol=1e-12)
        with pytest.raises(ValueError):
            fd_derivative(f, "w")


class TestChristoffel:
    def test_flat(self):
        grid = ChartGrid.square(1.0, 0.1)
        gamma = christoffel(_metric(grid, lambda p: np.broadcast_to(np.eye(2), p.shape[:2] + (2, 2))))
        assert np.max(np.abs(gamma.values)) == 0.0

    def test_conformal_exponential(self):
        # e^{2u}(du^2 + dv^2): G^u_uu = 1, G^u_vv = -1, G^v_uv = G^v_vu = 1, others zero
        grid = ChartGrid(0.0, 1.0, 0.0, 1.0, 81, 81)
        gamma = christoffel(_metric(grid, conformal(lambda u, v: np.exp(2 * u))), order=4).values
        oracle = np.zeros((2, 2, 2))
        oracle[0, 0, 0] = 1.0
        oracle[0, 1, 1] = -1.0
        oracle[1, 0, 1] = oracle[1, 1, 0] = 1.0
        np.testing.assert_allclose(gamma, np.broadcast_to(oracle, gamma.shape), atol=1e-5)


class TestCurvature:
    def test_flat(self):
        grid = ChartGrid.square(1.0, 0.1)
        k = gauss_curvature(_metric(grid, lambda p: np.broadcast_to(np.eye(2), p.shape[:2] + (2, 2))))
        assert np.max(np.abs(k.values)) == 0.0

    @pytest.mark.parametrize("name, fn, K", [
        ("sphere", conformal(lambda u, v: 4.0 / (1.0 + u * u + v * v) ** 2), 1.0),
        ("half-plane", lambda p: conformal(lambda u, v: 1.0 / (v + 2.0) ** 2)(p), -1.0),
        ("hyperboloid", hyperboloid_graph_metric, -1.0),
    ])
    def test_constant_curvature(self, name, fn, K):
        grid = ChartGrid.square(1.0, 0.025)
        k = gauss_curvature(_metric(grid, fn), order=4)
        assert np.max(np.abs(k.interior() - K)) < 1e-5

    def test_hyperboloid_second_order(self):
        errs = [np.max(np.abs(gauss_curvature(_metric(ChartGrid.square(1.0, h), hyperboloid_graph_metric)).values
                              + 1.0)) for h in (0.1, 0.05)]
        assert 3.0 < errs[0] / errs[1] < 5.0

    @given(st.floats(0.1, 10.0))
    def test_scaling(self, c):
        grid = ChartGrid.square(1.0, 0.05)
        g = hyperboloid_graph_metric(grid.points())
        k1 = gauss_curvature(MetricField(grid, g)).values
        kc = gauss_curvature(MetricField(grid, c * g)).values
        np.testing.assert_allclose(kc, k1 / c, rtol=1e-8, atol=1e-12)


class TestCodazzi:
    def test_identity_parallel(self):
        grid = ChartGrid.square(1.0, 0.05)
        g = MetricField(grid, hyperboloid_graph_metric(grid.points()))
        eye = TensorField(grid, np.broadcast_to(np.eye(2), grid.shape + (2, 2)))
        assert np.max(codazzi_residual(g, eye, order=4).interior()) < 1e-9

    def test_sphere_identity(self):
        grid = ChartGrid.square(1.0, 0.05)
        g = _metric(grid, conformal(lambda u, v: 4.0 / (1.0 + u * u + v * v) ** 2))
        eye = TensorField(grid, np.broadcast_to(np.eye(2), grid.shape + (2, 2)))
        assert np.max(codazzi_residual(g, eye).values) < 1e-12

    def test_non_codazzi(self):
        # flat metric, B = diag(1, 1 + u): d_u(B e_v) - d_v(B e_u) = e_v, so the norm is exactly 1
        grid = ChartGrid.square(1.0, 0.1)
        u = grid.points()[..., 0]
        B = np.zeros(grid.shape + (2, 2))
        B[..., 0, 0] = 1.0
        B[..., 1, 1] = 1.0 + u
        flat = MetricField(grid, np.broadcast_to(np.eye(2), grid.shape + (2, 2)))
        np.testing.assert_allclose(codazzi_residual(flat, TensorField(grid, B)).values, 1.0, atol=1e-12)


spd = st.tuples(st.floats(0.2, 5), st.floats(0.2, 5), st.floats(0, np.pi)).map(
    lambda p: (lambda r: r @ np.diag(p[:2]) @ r.T)(np.array([[np.cos(p[2]), -np.sin(p[2])],
                                                             [np.sin(p[2]), np.cos(p[2])]])))


class TestSymRoot:
    def test_equal_forms(self):
        g = np.array([[2.0, 0.3], [0.3, 1.0]])
        np.testing.assert_allclose(sym_positive_root_array(g, g), np.eye(2), atol=1e-14)

    def test_diagonal(self):
        np.testing.assert_allclose(sym_positive_root_array(np.eye(2), np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    @given(spd, spd)
    def test_properties(self, g, q):
        B = sym_positive_root_array(g, q)
        np.testing.assert_allclose(B.T @ g @ B, q, atol=1e-10 * np.max(np.abs(q)))
        gB = g @ B
        np.testing.assert_allclose(gB, gB.T, atol=1e-10 * np.max(np.abs(gB)))
        assert np.all(np.linalg.eigvals(B).real > 0)

    def test_rejects_degenerate(self):
        with pytest.raises(SingularMetricError):
            sym_positive_root_array(np.eye(2), np.diag([1.0, 0.0]))

    def test_field(self):
        grid = ChartGrid.square(1.0, 0.25)
        g = MetricField(grid, hyperboloid_graph_metric(grid.points()))
        q = MetricField(grid, 4.0 * g.values)
        np.testing.assert_allclose(sym_positive_root(g, q).values, 2.0 * np.eye(2) + 0 * g.values, atol=1e-12)


class TestPullback:
    def test_linear(self):
        grid = ChartGrid.square(1.0, 0.1)
        F = ChartMap(func=lambda x: 2.0 * x)
        g = pullback_metric(F, lambda y: np.broadcast_to(np.eye(2), y.shape[:-1] + (2, 2)), grid)
        np.testing.assert_allclose(g.values, 4.0 * np.broadcast_to(np.eye(2), g.values.shape), atol=1e-9)

    def test_sampled_matches_closed_form(self):
        grid = ChartGrid.square(0.5, 0.02)
        F = ChartMap(func=lambda x: np.stack([np.sin(x[..., 0]), x[..., 1] + x[..., 0] ** 2], -1))
        h = lambda y: np.broadcast_to(np.eye(2), y.shape[:-1] + (2, 2))  # noqa: E731
        exact = pullback_metric(F, h, grid).values
        approx = pullback_metric(F.sampled(grid), h, grid, order=4).values
        assert np.max(np.abs(exact - approx)) < 1e-6

    def test_compose_chain_rule(self):
        F = ChartMap(func=lambda x: x ** 3, jac=lambda x: np.einsum("...i,ij->...ij", 3 * x**2, np.eye(2)))
        G = F.compose(lambda y: 2 * y, lambda y: np.broadcast_to(2 * np.eye(2), y.shape[:-1] + (2, 2)))
        y, j = G.evaluate(np.array([1.0, 2.0]))
        np.testing.assert_allclose(y, [2.0, 16.0])
        np.testing.assert_allclose(j, np.diag([6.0, 24.0]))


class TestCsv:
    def test_round_trip_and_edge_flag(self, tmp_path):
        grid = ChartGrid(0.0, 1.0, -1.0, 1.0, 6, 9)
        vals = np.random.default_rng(0).normal(size=grid.shape + (2, 2))
        TensorField(grid, vals).to_csv(tmp_path / "f.csv")
        lines = (tmp_path / "f.csv").read_text().splitlines()
        assert lines[0] == "u,v,c0,c1,c2,c3,edge"
        edges = sum(int(r.split(",")[-1]) for r in lines[1:])
        inner = (6 - 2 * EDGE_MARGIN) * (9 - 2 * EDGE_MARGIN)
        assert edges == 6 * 9 - inner
        g2, back = read_csv_field(tmp_path / "f.csv")
        assert g2.shape == grid.shape
        np.testing.assert_allclose(back.reshape(vals.shape), vals, rtol=1e-11)

    def test_rejects_ragged(self, tmp_path):
        (tmp_path / "bad.csv").write_text("u,v,c0\n0,0,1\n1,0,1\n0,1,1\n")
        with pytest.raises(ValueError):
            read_csv_field(tmp_path / "bad.csv")

    def test_header(self):
        f = Field(ChartGrid.square(1, 0.5), np.zeros((5, 5)))
        assert '"edge_margin": 2' in f.header()
