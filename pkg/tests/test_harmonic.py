from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from minkgauss.chart import ChartGrid, ChartMap, MetricField, TensorField
from minkgauss.graphs import bumped_hyperboloid, hyperboloid
from minkgauss.harmonic import (MapBetweenCharts, NotLocalDiffeomorphismError, PerturbationRegion, codazzi_verdict,
                                curvature_ratio_check, energy, energy_density, extract_B, first_variation,
                                gauss_map_pair, isometry_composed, observed_order, one_harmonic_residual, sheared,
                                variation_ensemble)
from minkgauss.lorentz import LorentzIsometry, klein_metric


def flat(x):
    return np.broadcast_to(np.eye(2), np.shape(x)[:-1] + (2, 2))


def linear_map(a) -> MapBetweenCharts:
    a = np.asarray(a, dtype=float)
    F = ChartMap(func=lambda x: x @ a.T, jac=lambda x: np.broadcast_to(a, x.shape[:-1] + (2, 2)))
    return MapBetweenCharts(F, flat, h=flat, target_inside=lambda y: np.ones(y.shape[:-1], bool), name="linear")


def klein_identity() -> MapBetweenCharts:
    F = ChartMap(func=lambda x: x.copy(), jac=lambda x: flat(x).copy())
    return MapBetweenCharts(F, klein_metric, name="identity")


SMALL = ChartGrid.square(0.5, 0.05)
CHART = ChartGrid.square(1.0, 0.05)


class TestExtractB:
    def test_identity_map(self):
        B = extract_B(klein_identity(), SMALL).values
        np.testing.assert_allclose(B, np.broadcast_to(np.eye(2), B.shape), atol=1e-12)

    def test_hyperboloid_gauss_map(self):
        B = extract_B(gauss_map_pair(hyperboloid()), CHART).values
        np.testing.assert_allclose(B, np.broadcast_to(np.eye(2), B.shape), atol=1e-12)

    def test_isometry_invariance(self):
        m = gauss_map_pair(bumped_hyperboloid(0.1))
        a = LorentzIsometry.random(np.random.default_rng(2), max_rapidity=1.0)
        B0 = extract_B(m, CHART).values
        B1 = extract_B(isometry_composed(m, a), CHART).values
        assert np.max(np.abs(B1 - B0)) < 1e-8

    def test_orientation_reversal_rejected(self):
        with pytest.raises(NotLocalDiffeomorphismError):
            extract_B(linear_map([[1.0, 0.0], [0.0, -1.0]]), SMALL)


class TestEnergy:
    def test_identity_is_area(self):
        assert energy(linear_map(np.eye(2)), CHART) == pytest.approx(4.0, rel=1e-12)

    @given(st.floats(0.1, 10.0))
    def test_scaling(self, lam):
        assert energy(linear_map(lam * np.eye(2)), CHART) == pytest.approx(4.0 * lam, rel=1e-12)

    def test_density_is_half_trace(self):
        m = sheared(gauss_map_pair(bumped_hyperboloid(0.1)))
        B = extract_B(m, CHART).values
        dens = energy_density(m, CHART).values
        np.testing.assert_allclose(dens, 0.5 * np.trace(B, axis1=-2, axis2=-1), rtol=1e-10)

    def test_singular_values(self):
        # diag(2, 3) between flat metrics: (2 + 3) / 2
        np.testing.assert_allclose(energy_density(linear_map(np.diag([2.0, 3.0])), SMALL).values, 2.5)

    def test_subregion(self):
        assert energy(linear_map(np.eye(2)), CHART, omega=(0.0, 0.5, -0.5, 0.5)) == pytest.approx(0.5)


class TestVariation:
    omega = (-0.6, 0.6, -0.6, 0.6)

    def test_zero_field(self):
        p = PerturbationRegion(self.omega, (0.0, 0.0), 0.4, (0.0, 0.0))
        assert first_variation(gauss_map_pair(hyperboloid()), p, CHART) == 0.0

    def test_bump_support(self):
        p = PerturbationRegion(self.omega, (0.1, 0.0), 0.3, (0.6, 0.8))
        assert np.linalg.norm(p.field(np.array([0.1, 0.0]))) == pytest.approx(1.0)
        assert np.all(p.field(np.array([[0.5, 0.0], [0.1, 0.31]])) == 0.0)
        with pytest.raises(ValueError):
            PerturbationRegion(self.omega, (0.5, 0.0), 0.3, (1.0, 0.0))

    def test_linearity(self):
        m = sheared(gauss_map_pair(hyperboloid()))
        p1 = PerturbationRegion(self.omega, (-0.2, 0.1), 0.35, (1.0, 0.0))
        p2 = PerturbationRegion(self.omega, (0.2, -0.1), 0.3, (0.0, 1.0))
        d1, d2 = first_variation(m, p1, CHART), first_variation(m, p2, CHART)
        d12 = first_variation(m, p1 + p2, CHART)
        assert abs(d12 - d1 - d2) < 5e-4

    def test_gauss_map_critical_sheared_not(self):
        # the critical map's variation is quadrature error and decays like h^2; the sheared one does not
        m = gauss_map_pair(hyperboloid())
        coarse = variation_ensemble(m, CHART, seed=0, n=4).max_abs
        fine = variation_ensemble(m, ChartGrid.square(1.0, 0.025), seed=0, n=4).max_abs
        off = variation_ensemble(sheared(m), ChartGrid.square(1.0, 0.025), seed=0, n=4).max_abs
        assert coarse / fine > 3.0
        assert off > 10 * fine


class TestCodazziVerdict:
    def test_hyperboloid_passes(self):
        m = gauss_map_pair(hyperboloid())
        v = codazzi_verdict(m, ChartGrid.square(1.0, 0.1))
        assert v.verdict and v.noise_floor

    def test_bumped_converges(self):
        m = gauss_map_pair(bumped_hyperboloid(0.1))
        v = codazzi_verdict(m, ChartGrid.square(1.0, 0.1))
        assert v.verdict and v.convergence_order > 1.8

    def test_shear_fails(self):
        m = gauss_map_pair(hyperboloid())
        c = 10 * one_harmonic_residual(gauss_map_pair(bumped_hyperboloid(0.1)), ChartGrid.square(1.0, 0.1)) / 0.1**1.8
        v = codazzi_verdict(sheared(m), ChartGrid.square(1.0, 0.1), constant=c)
        assert not v.verdict
        assert v.residual > 1e-2

    def test_observed_order(self):
        assert observed_order(4e-4, 1e-4) == pytest.approx(2.0)
        assert observed_order(1.0, 0.0) == float("inf")


class TestCurvatureRatio:
    def test_doubling(self):
        grid = ChartGrid.square(1.0, 0.05)
        p = grid.points()
        df = p / np.sqrt(1 + np.sum(p * p, -1))[..., None]
        g = MetricField(grid, np.eye(2) - df[..., :, None] * df[..., None, :])
        B = TensorField(grid, np.broadcast_to(2 * np.eye(2), grid.shape + (2, 2)))
        assert curvature_ratio_check(g, B) < 1e-10

    def test_gauss_map_order4(self):
        m = gauss_map_pair(bumped_hyperboloid(0.1))
        grid = ChartGrid.square(1.0, 0.05)
        res = curvature_ratio_check(m.source_metric(grid), extract_B(m, grid, 4), order=4)
        assert res < 1e-3
